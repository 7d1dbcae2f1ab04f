#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "gift/model.hpp"
#include "gift/saliency.hpp"

namespace gift {

enum class SteerMode : std::uint8_t { Off, Gift, IncV, CalV, StaticMap };
enum class RatioKind : std::uint8_t { Mass, LiteralSum };
enum class HeadSelection : std::uint8_t { PerStep, Calibrated };

const char* steer_mode_name(SteerMode m);
SteerMode steer_mode_from_name(std::string_view name);
const char* ratio_kind_name(RatioKind k);
RatioKind ratio_kind_from_name(std::string_view name);
const char* head_selection_name(HeadSelection s);
HeadSelection head_selection_from_name(std::string_view name);

struct SteeringConfig {
    double alpha = 5.0;
    double beta = 1.0;
    int saliency_layer = 2;
    std::vector<int> fusion_layers = {3, 4, 5};
    double head_fraction = 0.5;
    float clip_k = 3.0f;
    SteerMode mode = SteerMode::Gift;
    HeadSelection head_selection = HeadSelection::PerStep;
    RatioKind ratio_kind = RatioKind::Mass;
    bool literal_predecessor = false;

    void validate(int total_layers) const;
    ShiftOptions shift_options() const;

    std::string to_json_text() const;
    // Overlays only the keys present in the JSON object.
    void apply_json_overlay(const std::string& json_text);
};

// Published full-scale configurations, kept as documentation presets; the
// desk model ships its own defaults.
struct SteeringPreset {
    double alpha;
    int saliency_layer;
    int fusion_start;
    int fusion_end;
};
const std::map<std::string, SteeringPreset>& steering_presets();

// Per-layer cross-modal fusion diagnostic over output rows.
struct FusionDiagnostic {
    int layers = 0;
    int heads = 0;
    std::vector<std::vector<double>> head_mass_visual;  // [layer][head] mean mass
    std::vector<std::vector<double>> head_mass_query;
    std::vector<std::vector<int>> heads_visual;  // selected top sets per layer
    std::vector<std::vector<int>> heads_query;
    std::vector<double> r_visual;  // per layer
    std::vector<double> r_query;
};

// output_mask flags info-rich generated tokens (already truncated to the
// first sentence by the caller). Throws "empty output mask" when nothing
// is flagged.
FusionDiagnostic fusion_diagnostic(const AttentionCapture& attn, const InfoRichMask& output_mask,
                                   double head_fraction = 0.5);

// Calibration aggregate: mean per-head masses across examples, head sets
// and R values recomputed from the means.
FusionDiagnostic average_diagnostics(std::span<const FusionDiagnostic> diags);

// Contiguous [first layer with R_V >= threshold, last layer with
// R_V >= threshold]. Throws "no fusion band" when no layer qualifies.
std::vector<int> select_fusion_layers(const FusionDiagnostic& diag, double threshold = 0.2);

// ---- row-level steering primitives (rows: [head][key]) ----

// Heads ranked by current-row mass on the segment; top fraction kept,
// ties toward the lower index.
std::vector<int> rank_heads_by_segment_mass(const HeadRows& rows, Span segment,
                                            double head_fraction);

// A[h][j] *= exp(alpha * map[j - visual.start]) for selected heads h and
// visual positions j. No renormalization here.
void amplify_visual(HeadRows& rows, const SegmentLayout& layout, std::span<const float> map,
                    double alpha, std::span<const int> heads);

// Mass: ratio of total visual mass after/before over the selected heads.
// LiteralSum: sum of elementwise after/before ratios, 0/0 counted as 1.
double compute_ratio(const HeadRows& original, const HeadRows& amplified,
                     const SegmentLayout& layout, std::span<const int> heads, RatioKind kind);

// A[h][j] *= beta * ratio for selected heads h and query positions j.
void scale_query(HeadRows& rows, const SegmentLayout& layout, double ratio, double beta,
                 std::span<const int> heads);

// Scales a row to sum 1. Throws on a zero-sum row.
void renormalize(std::span<float> row);

// Composes the per-mode pipeline into a hook over the fusion layers.
// calibrated supplies frozen head sets for HeadSelection::Calibrated.
SteeringHook make_hook(const SteeringConfig& cfg, const SaliencyMap& map, int total_layers,
                       const FusionDiagnostic* calibrated = nullptr);

}  // namespace gift
