#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gift/decoder.hpp"
#include "gift/model.hpp"
#include "gift/saliency.hpp"
#include "gift/steering.hpp"
#include "gift/text.hpp"

namespace gift {

struct CellBox {
    int row = 0;
    int col = 0;
    int rows = 1;
    int cols = 1;

    int area() const { return rows * cols; }
    bool contains(int cell, int grid_cols) const;
    std::vector<int> cells(int grid_cols) const;
};

struct FixtureParams {
    int grid_rows = 8;
    int grid_cols = 8;
    int layers = 8;
    int heads = 8;
    double c_sink_min = 0.30;
    double c_sink_max = 0.40;
    double visual_budget = 0.90;
    double ramp_lo = 0.05;
    double ramp_hi = 0.45;
    int box_side_min = 2;
    int box_side_max = 4;
    int sink_min = 2;
    int sink_max = 3;
    int peak_layer = 2;  // layer where the planted shift volume peaks
    std::uint64_t seed = 1234;

    void validate() const;  // throws "infeasible mass budget" and friends
};

// A synthetic scene with known salient and sink cells plus a constructed
// attention trace. Sink columns get identical weight in every query row;
// salient columns ramp up monotonically; background absorbs the rest.
struct PlantedFixture {
    std::uint64_t seed = 0;
    int grid_rows = 0;
    int grid_cols = 0;
    CellBox box;
    std::vector<int> sink_cells;
    std::string query;
    InfoRichMask info_rich;  // per query token
    double c_sink = 0.0;
    double visual_budget = 0.0;
    int eval_layer = 0;
    std::vector<double> head_affinity;  // ground-truth head ordering
    AttentionCapture attn;
    Scene scene;
};

std::vector<PlantedFixture> gen_fixtures(const FixtureParams& params, int count,
                                         const Vocabulary& vocab, const Lexicon& lexicon);

// Row sums, causality, disjointness, sink constancy, salient-ramp
// monotonicity. Throws on the first violation.
void validate_fixture(const PlantedFixture& f);

void save_fixture(const std::filesystem::path& dir, int index, const PlantedFixture& f);
PlantedFixture load_fixture(const std::filesystem::path& dir, int index);
int count_fixtures(const std::filesystem::path& dir);

struct FixtureEval {
    int index = 0;
    double static_score = 0.0;
    double shift_score = 0.0;
    double sink_mean_static = 0.0;  // mean raw static saliency over sink cells
    double sink_mean_shift = 0.0;   // mean raw (pre-normalization) shift saliency
    bool shift_win = false;
    bool sink_in_static_top_decile = false;
    bool shift_degenerate = false;
};

struct BenchReport {
    std::string mode;
    int runs = 0;
    int output_len = 0;
    double greedy_median_ms = 0.0;
    double steered_median_ms = 0.0;
    double ratio = 0.0;
    std::vector<double> greedy_ms;
    std::vector<double> steered_ms;
};

struct MetricReport {
    std::vector<FixtureEval> fixtures;
    double win_rate = 0.0;
    double mean_static_score = 0.0;
    double mean_shift_score = 0.0;
    double mean_sink_static = 0.0;
    double mean_sink_shift = 0.0;
    double sink_top_decile_rate = 0.0;
    int degenerate_count = 0;
    std::vector<BenchReport> bench;
};

// Static-vs-shift comparison on the planted ground truth (Sum-normalized
// maps at each fixture's eval layer). Degenerate shift maps are recorded
// as losses. jobs > 1 fans out over fixtures; aggregation order is fixed.
MetricReport eval_saliency(std::span<const PlantedFixture> fixtures, int jobs = 1);

// Median wall-clock of the configured mode vs plain greedy at a fixed
// output length; warmup runs excluded, modes interleaved.
BenchReport bench_latency(const Model& m, const std::vector<PromptInputs>& prompts,
                          const SteeringConfig& cfg, int output_len = 32, int runs = 10,
                          int warmup = 2);

void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report_csv(const std::filesystem::path& path);
void write_report_json(const std::filesystem::path& path, const MetricReport& report);

// Grayscale P6 heatmap, one pixel per grid cell.
void write_heatmap_ppm(const std::filesystem::path& path, std::span<const float> scores, int rows,
                       int cols);

}  // namespace gift
