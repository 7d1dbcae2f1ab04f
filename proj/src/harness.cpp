#include "gift/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "gift/atn1.hpp"
#include "json.hpp"

namespace gift {

namespace {

// Deterministic across standard libraries: raw mt19937_64 draws only, no
// std distributions.
struct Rng {
    std::mt19937_64 eng;
    explicit Rng(std::uint64_t s) : eng(s) {}
    std::uint64_t raw() { return eng(); }
    int int_in(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(raw() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    double real_in(double lo, double hi) {
        return lo + (static_cast<double>(raw() >> 11) * 0x1.0p-53) * (hi - lo);
    }
};

const std::vector<std::string> kQueryColors = {"red",    "green", "blue", "yellow",
                                               "purple", "orange", "teal"};
const std::vector<std::string> kQueryShapes = {"circle", "square", "triangle",
                                               "star",   "cross",  "ring"};
const std::vector<std::string> kQueryNouns = {"window", "table", "wall",  "door",
                                              "corner", "lamp",  "bench", "sign"};
const std::vector<std::string> kQueryAdjs = {"bright", "small", "large", "dark", "pale", "bold"};

constexpr const char* kSystemText = "observe this scene .";

std::string fill_template(int which, const std::string& color, const std::string& shape,
                          const std::string& noun, const std::string& adj) {
    switch (which) {
        case 0: return "describe the " + color + " " + shape + " near the " + noun + " .";
        case 1: return "find the " + adj + " " + color + " " + shape + " in this scene .";
        case 2: return "tell where the " + color + " " + shape + " sits on the grid .";
        case 3: return "count the " + color + " " + shape + " marks beside the " + noun + " .";
        default: return "what number of " + color + " " + shape + " cells appear here ?";
    }
}

std::string index_name(int index, const char* suffix) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d%s", index, suffix);
    return buf;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

bool CellBox::contains(int cell, int grid_cols) const {
    const int r = cell / grid_cols;
    const int c = cell % grid_cols;
    return r >= row && r < row + rows && c >= col && c < col + cols;
}

std::vector<int> CellBox::cells(int grid_cols) const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(area()));
    for (int r = row; r < row + rows; ++r)
        for (int c = col; c < col + cols; ++c) out.push_back(r * grid_cols + c);
    return out;
}

void FixtureParams::validate() const {
    if (grid_rows <= 0 || grid_cols <= 0) throw std::invalid_argument("fixture: bad grid");
    if (layers <= 0 || heads <= 0) throw std::invalid_argument("fixture: bad tensor dims");
    if (peak_layer < 0 || peak_layer >= layers)
        throw std::invalid_argument("fixture: peak layer out of range");
    if (c_sink_min < 0.3 || c_sink_max < c_sink_min)
        throw std::invalid_argument("fixture: sink mass must be at least 0.3");
    if (box_side_min < 1 || box_side_max < box_side_min ||
        box_side_max > std::min(grid_rows, grid_cols))
        throw std::invalid_argument("fixture: bad box side range");
    if (sink_min < 1 || sink_max < sink_min) throw std::invalid_argument("fixture: bad sink count");
    if (!(ramp_lo >= 0.0) || !(ramp_hi > ramp_lo))
        throw std::invalid_argument("fixture: bad ramp");
    // Worst case: the strongest head at the peak layer must still leave
    // room for background and non-visual mass.
    if (ramp_hi > visual_budget - c_sink_max)
        throw std::runtime_error("infeasible mass budget");
    if (c_sink_max + 0.95 * (visual_budget - c_sink_max) >= 1.0)
        throw std::runtime_error("infeasible mass budget");
}

namespace {

AttentionCapture build_planted_tensor(const FixtureParams& p, const SegmentLayout& layout,
                                      const CellBox& box, const std::vector<int>& sink_cells,
                                      double c_sink, const std::vector<double>& affinity) {
    AttentionCapture cap;
    cap.layers = p.layers;
    cap.heads = p.heads;
    cap.tokens = layout.total();
    cap.layout = layout;
    cap.allocate();

    const int grid = p.grid_rows * p.grid_cols;
    std::vector<std::uint8_t> is_box(static_cast<std::size_t>(grid), 0);
    std::vector<std::uint8_t> is_sink(static_cast<std::size_t>(grid), 0);
    for (int c : box.cells(p.grid_cols)) is_box[static_cast<std::size_t>(c)] = 1;
    for (int c : sink_cells) is_sink[static_cast<std::size_t>(c)] = 1;
    const int n_sink = static_cast<int>(sink_cells.size());
    const int n_box = box.area();
    const int n_bg = grid - n_box - n_sink;

    const Span vis = layout.visual;
    const Span qry = layout.query;
    const float sink_pc = static_cast<float>(c_sink / n_sink);

    for (int l = 0; l < p.layers; ++l) {
        const double gain = 1.0 / (1.0 + std::abs(l - p.peak_layer));
        for (int h = 0; h < p.heads; ++h) {
            const double lam = affinity[static_cast<std::size_t>(h)];
            for (int i = 0; i < cap.tokens; ++i) {
                if (!qry.contains(i)) {
                    const float u = static_cast<float>(1.0 / (i + 1));
                    for (int j = 0; j <= i; ++j) cap.at(l, h, i, j) = u;
                    continue;
                }
                const int qi = i - qry.start;
                const double ramp =
                    p.ramp_lo + (p.ramp_hi - p.ramp_lo) *
                                    (static_cast<double>(qi) / static_cast<double>(qry.len - 1));
                const double s_total = lam * gain * ramp;
                const double bg_total = lam * (p.visual_budget - c_sink) - s_total;
                const double nv_total = 1.0 - c_sink - lam * (p.visual_budget - c_sink);
                const int nv_count = i + 1 - vis.len;
                const float box_pc = static_cast<float>(s_total / n_box);
                const float bg_pc = static_cast<float>(bg_total / n_bg);
                const float nv_pc = static_cast<float>(nv_total / nv_count);

                for (int j = 0; j < vis.start; ++j) cap.at(l, h, i, j) = nv_pc;
                for (int cell = 0; cell < grid; ++cell) {
                    float w = bg_pc;
                    if (is_sink[static_cast<std::size_t>(cell)]) w = sink_pc;
                    else if (is_box[static_cast<std::size_t>(cell)]) w = box_pc;
                    cap.at(l, h, i, vis.start + cell) = w;
                }
                for (int j = qry.start; j <= i; ++j) cap.at(l, h, i, j) = nv_pc;
            }
        }
    }
    return cap;
}

Scene build_planted_scene(const FixtureParams& p, const CellBox& box,
                          const std::vector<int>& sink_cells, const std::string& shape,
                          const std::string& color) {
    Scene s;
    s.rows = p.grid_rows;
    s.cols = p.grid_cols;
    s.cells.assign(static_cast<std::size_t>(p.grid_rows * p.grid_cols),
                   {shape_id("blank"), color_id("gray")});
    for (int c : box.cells(p.grid_cols))
        s.cells[static_cast<std::size_t>(c)] = {shape_id(shape), color_id(color)};
    for (int c : sink_cells)
        s.cells[static_cast<std::size_t>(c)] = {shape_id("wedge"), color_id("gray")};
    return s;
}

}  // namespace

std::vector<PlantedFixture> gen_fixtures(const FixtureParams& params, int count,
                                         const Vocabulary& vocab, const Lexicon& lexicon) {
    params.validate();
    if (count < 0) throw std::invalid_argument("gen_fixtures: negative count");

    const TokenizedText system = tag(tokenize(kSystemText, vocab), lexicon);
    std::vector<PlantedFixture> out;
    out.reserve(static_cast<std::size_t>(count));

    for (int index = 0; index < count; ++index) {
        Rng rng(params.seed ^ (0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(index + 1)));
        PlantedFixture f;
        f.seed = params.seed;
        f.grid_rows = params.grid_rows;
        f.grid_cols = params.grid_cols;
        f.eval_layer = params.peak_layer;
        f.c_sink = rng.real_in(params.c_sink_min, params.c_sink_max);
        f.visual_budget = params.visual_budget;

        f.box.rows = rng.int_in(params.box_side_min, params.box_side_max);
        f.box.cols = rng.int_in(params.box_side_min, params.box_side_max);
        f.box.row = rng.int_in(0, params.grid_rows - f.box.rows);
        f.box.col = rng.int_in(0, params.grid_cols - f.box.cols);

        const int grid = params.grid_rows * params.grid_cols;
        const int sink_count = rng.int_in(params.sink_min, params.sink_max);
        while (static_cast<int>(f.sink_cells.size()) < sink_count) {
            const int cell = rng.int_in(0, grid - 1);
            if (f.box.contains(cell, params.grid_cols)) continue;
            if (std::find(f.sink_cells.begin(), f.sink_cells.end(), cell) != f.sink_cells.end())
                continue;
            f.sink_cells.push_back(cell);
        }
        std::sort(f.sink_cells.begin(), f.sink_cells.end());

        // evenly spaced head affinities, shuffled: ground-truth ranking
        f.head_affinity.resize(static_cast<std::size_t>(params.heads));
        for (int h = 0; h < params.heads; ++h)
            f.head_affinity[static_cast<std::size_t>(h)] =
                0.55 + 0.4 * static_cast<double>(h) / static_cast<double>(params.heads - 1);
        for (int i = params.heads - 1; i > 0; --i) {
            const int j = rng.int_in(0, i);
            std::swap(f.head_affinity[static_cast<std::size_t>(i)],
                      f.head_affinity[static_cast<std::size_t>(j)]);
        }

        const std::string color = kQueryColors[static_cast<std::size_t>(
            rng.int_in(0, static_cast<int>(kQueryColors.size()) - 1))];
        const std::string shape = kQueryShapes[static_cast<std::size_t>(
            rng.int_in(0, static_cast<int>(kQueryShapes.size()) - 1))];
        const std::string noun = kQueryNouns[static_cast<std::size_t>(
            rng.int_in(0, static_cast<int>(kQueryNouns.size()) - 1))];
        const std::string adj = kQueryAdjs[static_cast<std::size_t>(
            rng.int_in(0, static_cast<int>(kQueryAdjs.size()) - 1))];
        f.query = fill_template(rng.int_in(0, 4), color, shape, noun, adj);

        const TokenizedText query = tag(tokenize(f.query, vocab), lexicon);
        f.info_rich = select_info_rich(query);

        SegmentLayout layout;
        layout.system = {0, static_cast<int>(system.size())};
        layout.visual = {layout.system.end(), grid};
        layout.query = {layout.visual.end(), static_cast<int>(query.size())};
        layout.generated = {layout.query.end(), 0};

        f.attn = build_planted_tensor(params, layout, f.box, f.sink_cells, f.c_sink,
                                      f.head_affinity);
        f.scene = build_planted_scene(params, f.box, f.sink_cells, shape, color);
        out.push_back(std::move(f));
    }
    return out;
}

void validate_fixture(const PlantedFixture& f) {
    const AttentionCapture& a = f.attn;
    a.layout.validate(f.grid_rows * f.grid_cols);
    if (a.tokens != a.layout.total()) throw std::runtime_error("fixture: token count mismatch");

    for (int c : f.sink_cells)
        if (f.box.contains(c, f.grid_cols)) throw std::runtime_error("fixture: sink inside box");

    const Span qry = a.layout.query;
    const Span vis = a.layout.visual;
    const auto box_cells = f.box.cells(f.grid_cols);

    for (int l = 0; l < a.layers; ++l) {
        for (int h = 0; h < a.heads; ++h) {
            for (int i = 0; i < a.tokens; ++i) {
                double sum = 0.0;
                for (int j = 0; j < a.tokens; ++j) {
                    const float w = a.at(l, h, i, j);
                    if (j > i && w != 0.0f) throw std::runtime_error("fixture: causality violated");
                    if (w < 0.0f) throw std::runtime_error("fixture: negative weight");
                    sum += w;
                }
                if (std::abs(sum - 1.0) > 1e-5) throw std::runtime_error("fixture: row sum off");
            }
            // sink columns identical across query rows, salient strictly up
            for (int c : f.sink_cells) {
                const float v0 = a.at(l, h, qry.start, vis.start + c);
                for (int i = qry.start + 1; i < qry.end(); ++i)
                    if (a.at(l, h, i, vis.start + c) != v0)
                        throw std::runtime_error("fixture: sink column not constant");
            }
            for (int c : box_cells) {
                for (int i = qry.start + 1; i < qry.end(); ++i)
                    if (!(a.at(l, h, i, vis.start + c) > a.at(l, h, i - 1, vis.start + c)))
                        throw std::runtime_error("fixture: salient ramp not increasing");
            }
        }
    }

    if (!f.sink_cells.empty()) {
        double sink_mass = 0.0;
        for (int c : f.sink_cells) sink_mass += a.at(0, 0, qry.start, vis.start + c);
        if (sink_mass < 0.3 - 1e-6) throw std::runtime_error("fixture: sink mass below 0.3");
    }
}

void save_fixture(const std::filesystem::path& dir, int index, const PlantedFixture& f) {
    std::filesystem::create_directories(dir);

    DenseTensor t;
    t.dims = {static_cast<std::uint32_t>(f.attn.layers), static_cast<std::uint32_t>(f.attn.heads),
              static_cast<std::uint32_t>(f.attn.tokens), static_cast<std::uint32_t>(f.attn.tokens)};
    t.data = f.attn.weights;
    write_atn1(dir / index_name(index, ".atn1"), t);

    f.scene.save(dir / index_name(index, ".scene.json"));

    nlohmann::json j;
    j["seed"] = f.seed;
    j["grid"] = {{"rows", f.grid_rows}, {"cols", f.grid_cols}};
    j["box"] = {{"row", f.box.row}, {"col", f.box.col}, {"rows", f.box.rows}, {"cols", f.box.cols}};
    j["sink_cells"] = f.sink_cells;
    j["query"] = f.query;
    j["info_rich"] = f.info_rich;
    j["c_sink"] = f.c_sink;
    j["visual_budget"] = f.visual_budget;
    j["eval_layer"] = f.eval_layer;
    j["head_affinity"] = f.head_affinity;
    j["layout"] = {{"system", {f.attn.layout.system.start, f.attn.layout.system.len}},
                   {"visual", {f.attn.layout.visual.start, f.attn.layout.visual.len}},
                   {"query", {f.attn.layout.query.start, f.attn.layout.query.len}},
                   {"generated", {f.attn.layout.generated.start, f.attn.layout.generated.len}}};
    std::ofstream meta(dir / index_name(index, ".meta.json"));
    if (!meta) throw std::runtime_error("save_fixture: cannot write meta");
    meta << j.dump(2) << "\n";
}

PlantedFixture load_fixture(const std::filesystem::path& dir, int index) {
    PlantedFixture f;

    std::ifstream meta_in(dir / index_name(index, ".meta.json"));
    if (!meta_in)
        throw std::runtime_error("load_fixture: missing " + index_name(index, ".meta.json"));
    nlohmann::json j = nlohmann::json::parse(meta_in);
    f.seed = j.at("seed").get<std::uint64_t>();
    f.grid_rows = j.at("grid").at("rows").get<int>();
    f.grid_cols = j.at("grid").at("cols").get<int>();
    f.box.row = j.at("box").at("row").get<int>();
    f.box.col = j.at("box").at("col").get<int>();
    f.box.rows = j.at("box").at("rows").get<int>();
    f.box.cols = j.at("box").at("cols").get<int>();
    f.sink_cells = j.at("sink_cells").get<std::vector<int>>();
    f.query = j.at("query").get<std::string>();
    f.info_rich = j.at("info_rich").get<InfoRichMask>();
    f.c_sink = j.at("c_sink").get<double>();
    f.visual_budget = j.at("visual_budget").get<double>();
    f.eval_layer = j.at("eval_layer").get<int>();
    f.head_affinity = j.at("head_affinity").get<std::vector<double>>();

    SegmentLayout lay;
    auto span_of = [&](const char* key) {
        const auto& s = j.at("layout").at(key);
        return Span{s.at(0).get<int>(), s.at(1).get<int>()};
    };
    lay.system = span_of("system");
    lay.visual = span_of("visual");
    lay.query = span_of("query");
    lay.generated = span_of("generated");

    DenseTensor t = read_atn1(dir / index_name(index, ".atn1"));
    if (t.dims.size() != 4) throw std::runtime_error("load_fixture: tensor must be 4-D");
    f.attn.layers = static_cast<int>(t.dims[0]);
    f.attn.heads = static_cast<int>(t.dims[1]);
    f.attn.tokens = static_cast<int>(t.dims[2]);
    if (t.dims[2] != t.dims[3]) throw std::runtime_error("load_fixture: tensor must be square");
    f.attn.layout = lay;
    f.attn.weights = std::move(t.data);
    if (f.attn.tokens != lay.total())
        throw std::runtime_error("load_fixture: layout/tensor size mismatch");

    f.scene = Scene::load(dir / index_name(index, ".scene.json"));
    return f;
}

int count_fixtures(const std::filesystem::path& dir) {
    int count = 0;
    while (std::filesystem::exists(dir / index_name(count, ".meta.json"))) ++count;
    return count;
}

namespace {

FixtureEval eval_one(const PlantedFixture& f, int index) {
    FixtureEval e;
    e.index = index;
    const int layer = f.eval_layer;
    const int grid = f.grid_rows * f.grid_cols;
    const auto box_cells = f.box.cells(f.grid_cols);

    const HeadSet static_heads = select_heads_static(f.attn, layer);
    const std::vector<float> static_raw = static_scores_raw(f.attn, layer, static_heads);
    const HeadSet shift_heads = select_heads_shift(f.attn, layer, f.info_rich);
    const std::vector<float> shift_raw = shift_scores_raw(f.attn, layer, shift_heads, f.info_rich);

    auto sink_mean = [&](const std::vector<float>& raw) {
        if (f.sink_cells.empty()) return 0.0;
        double acc = 0.0;
        for (int c : f.sink_cells) acc += raw[static_cast<std::size_t>(c)];
        return acc / static_cast<double>(f.sink_cells.size());
    };
    e.sink_mean_static = sink_mean(static_raw);
    e.sink_mean_shift = sink_mean(shift_raw);

    SaliencyMap static_map;
    static_map.layer = layer;
    static_map.method = SaliencyMethod::Static;
    static_map.norm = MapNorm::Sum;
    static_map.scores = sum_normalize(static_raw);
    e.static_score = normalized_saliency_score(static_map, box_cells, grid);

    try {
        SaliencyMap shift_map;
        shift_map.layer = layer;
        shift_map.method = SaliencyMethod::Shift;
        shift_map.norm = MapNorm::Sum;
        shift_map.scores = sum_normalize(shift_raw);
        e.shift_score = normalized_saliency_score(shift_map, box_cells, grid);
    } catch (const std::runtime_error&) {
        e.shift_degenerate = true;  // recorded as a loss
        e.shift_score = 0.0;
    }
    e.shift_win = !e.shift_degenerate && e.shift_score > e.static_score;

    // static top decile: does any sink column rank in the top 10% cells?
    const int k = std::max(1, static_cast<int>(std::ceil(grid * 0.1)));
    std::vector<int> order(static_cast<std::size_t>(grid));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return static_raw[static_cast<std::size_t>(a)] > static_raw[static_cast<std::size_t>(b)];
    });
    for (int r = 0; r < k; ++r) {
        if (std::find(f.sink_cells.begin(), f.sink_cells.end(), order[static_cast<std::size_t>(r)]) !=
            f.sink_cells.end()) {
            e.sink_in_static_top_decile = true;
            break;
        }
    }
    return e;
}

void finalize_aggregates(MetricReport& rep) {
    const auto n = static_cast<double>(rep.fixtures.size());
    if (rep.fixtures.empty()) return;
    int wins = 0, decile = 0;
    for (const auto& e : rep.fixtures) {
        rep.mean_static_score += e.static_score;
        rep.mean_shift_score += e.shift_score;
        rep.mean_sink_static += e.sink_mean_static;
        rep.mean_sink_shift += e.sink_mean_shift;
        wins += e.shift_win ? 1 : 0;
        decile += e.sink_in_static_top_decile ? 1 : 0;
        rep.degenerate_count += e.shift_degenerate ? 1 : 0;
    }
    rep.mean_static_score /= n;
    rep.mean_shift_score /= n;
    rep.mean_sink_static /= n;
    rep.mean_sink_shift /= n;
    rep.win_rate = wins / n;
    rep.sink_top_decile_rate = decile / n;
}

}  // namespace

MetricReport eval_saliency(std::span<const PlantedFixture> fixtures, int jobs) {
    MetricReport rep;
    rep.fixtures.resize(fixtures.size());

    if (jobs <= 1 || fixtures.size() < 2) {
        for (std::size_t i = 0; i < fixtures.size(); ++i)
            rep.fixtures[i] = eval_one(fixtures[i], static_cast<int>(i));
    } else {
        const int workers = std::min<int>(jobs, static_cast<int>(fixtures.size()));
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= fixtures.size()) return;
                    rep.fixtures[i] = eval_one(fixtures[i], static_cast<int>(i));
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    finalize_aggregates(rep);
    return rep;
}

BenchReport bench_latency(const Model& m, const std::vector<PromptInputs>& prompts,
                          const SteeringConfig& cfg, int output_len, int runs, int warmup) {
    if (prompts.empty()) throw std::invalid_argument("bench_latency: no prompts");
    if (runs < 1) throw std::invalid_argument("bench_latency: need at least one run");

    DecodeOptions opt;
    opt.max_new_tokens = output_len;
    opt.stop_at_eos = false;  // fixed output length

    using Clock = std::chrono::steady_clock;
    auto time_greedy = [&] {
        const auto t0 = Clock::now();
        for (const auto& p : prompts) greedy_decode(m, p, opt);
        return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    };
    auto time_steered = [&] {
        const auto t0 = Clock::now();
        for (const auto& p : prompts) gift_decode(m, p, cfg, opt);
        return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    };

    for (int w = 0; w < warmup; ++w) {
        time_greedy();
        time_steered();
    }

    BenchReport rep;
    rep.mode = steer_mode_name(cfg.mode);
    rep.runs = runs;
    rep.output_len = output_len;
    for (int r = 0; r < runs; ++r) {
        // alternate order to cancel slow drift
        if (r % 2 == 0) {
            rep.greedy_ms.push_back(time_greedy());
            rep.steered_ms.push_back(time_steered());
        } else {
            rep.steered_ms.push_back(time_steered());
            rep.greedy_ms.push_back(time_greedy());
        }
    }
    rep.greedy_median_ms = median_of(rep.greedy_ms);
    rep.steered_median_ms = median_of(rep.steered_ms);
    rep.ratio = rep.steered_median_ms / rep.greedy_median_ms;
    return rep;
}

// ---------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const MetricReport& rep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_csv: cannot open " + path.string());
    out << "index,static_score,shift_score,sink_mean_static,sink_mean_shift,"
           "shift_win,sink_top_decile,degenerate\n";
    for (const auto& e : rep.fixtures) {
        out << e.index << ',' << fmt_double(e.static_score) << ',' << fmt_double(e.shift_score)
            << ',' << fmt_double(e.sink_mean_static) << ',' << fmt_double(e.sink_mean_shift) << ','
            << (e.shift_win ? 1 : 0) << ',' << (e.sink_in_static_top_decile ? 1 : 0) << ','
            << (e.shift_degenerate ? 1 : 0) << '\n';
    }
    out << "aggregate," << fmt_double(rep.mean_static_score) << ','
        << fmt_double(rep.mean_shift_score) << ',' << fmt_double(rep.mean_sink_static) << ','
        << fmt_double(rep.mean_sink_shift) << ',' << fmt_double(rep.win_rate) << ','
        << fmt_double(rep.sink_top_decile_rate) << ',' << rep.degenerate_count << '\n';
}

MetricReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_report_csv: cannot open " + path.string());
    MetricReport rep;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_report_csv: empty file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (cols.size() != 8) throw std::runtime_error("read_report_csv: bad column count");
        if (cols[0] == "aggregate") {
            rep.mean_static_score = std::stod(cols[1]);
            rep.mean_shift_score = std::stod(cols[2]);
            rep.mean_sink_static = std::stod(cols[3]);
            rep.mean_sink_shift = std::stod(cols[4]);
            rep.win_rate = std::stod(cols[5]);
            rep.sink_top_decile_rate = std::stod(cols[6]);
            rep.degenerate_count = std::stoi(cols[7]);
            break;
        }
        FixtureEval e;
        e.index = std::stoi(cols[0]);
        e.static_score = std::stod(cols[1]);
        e.shift_score = std::stod(cols[2]);
        e.sink_mean_static = std::stod(cols[3]);
        e.sink_mean_shift = std::stod(cols[4]);
        e.shift_win = cols[5] == "1";
        e.sink_in_static_top_decile = cols[6] == "1";
        e.shift_degenerate = cols[7] == "1";
        rep.fixtures.push_back(e);
    }
    return rep;
}

void write_report_json(const std::filesystem::path& path, const MetricReport& rep) {
    nlohmann::json j;
    auto rows = nlohmann::json::array();
    for (const auto& e : rep.fixtures) {
        rows.push_back({{"index", e.index},
                        {"static_score", e.static_score},
                        {"shift_score", e.shift_score},
                        {"sink_mean_static", e.sink_mean_static},
                        {"sink_mean_shift", e.sink_mean_shift},
                        {"shift_win", e.shift_win},
                        {"sink_top_decile", e.sink_in_static_top_decile},
                        {"degenerate", e.shift_degenerate}});
    }
    j["fixtures"] = std::move(rows);
    j["aggregates"] = {{"win_rate", rep.win_rate},
                       {"mean_static_score", rep.mean_static_score},
                       {"mean_shift_score", rep.mean_shift_score},
                       {"mean_sink_static", rep.mean_sink_static},
                       {"mean_sink_shift", rep.mean_sink_shift},
                       {"sink_top_decile_rate", rep.sink_top_decile_rate},
                       {"degenerate_count", rep.degenerate_count}};
    auto bench = nlohmann::json::array();
    for (const auto& b : rep.bench) {
        bench.push_back({{"mode", b.mode},
                         {"runs", b.runs},
                         {"output_len", b.output_len},
                         {"greedy_median_ms", b.greedy_median_ms},
                         {"steered_median_ms", b.steered_median_ms},
                         {"ratio", b.ratio},
                         {"greedy_ms", b.greedy_ms},
                         {"steered_ms", b.steered_ms}});
    }
    j["bench"] = std::move(bench);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_json: cannot open " + path.string());
    out << j.dump(2) << "\n";
}

void write_heatmap_ppm(const std::filesystem::path& path, std::span<const float> scores, int rows,
                       int cols) {
    if (static_cast<int>(scores.size()) != rows * cols)
        throw std::invalid_argument("write_heatmap_ppm: size mismatch");
    float hi = 0.0f;
    for (float v : scores) hi = std::max(hi, v);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_heatmap_ppm: cannot open " + path.string());
    out << "P6\n" << cols << ' ' << rows << "\n255\n";
    for (float v : scores) {
        const int g = hi > 0.0f
                          ? std::clamp(static_cast<int>(std::lround(255.0 * v / hi)), 0, 255)
                          : 0;
        const char byte = static_cast<char>(g);
        out.put(byte).put(byte).put(byte);
    }
    if (!out) throw std::runtime_error("write_heatmap_ppm: write failed");
}

}  // namespace gift
