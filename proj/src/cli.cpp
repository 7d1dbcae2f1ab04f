#include "gift/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gift/atn1.hpp"
#include "gift/decoder.hpp"
#include "gift/harness.hpp"
#include "gift/model.hpp"
#include "gift/saliency.hpp"
#include "gift/steering.hpp"
#include "gift/tensor.hpp"
#include "gift/text.hpp"

#ifndef GIFT_DATA_DIR
#define GIFT_DATA_DIR "data"
#endif

namespace gift {

namespace {

namespace fs = std::filesystem;

// Input problems map to exit code 2; everything unexpected maps to 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Vocabulary load_vocab(const fs::path& path) {
    try {
        return Vocabulary::load(path);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

Lexicon load_lexicon(const fs::path& path) {
    try {
        return Lexicon::load(path);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

Scene load_scene(const fs::path& path) {
    try {
        return Scene::load(path);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

struct MetaSidecar {
    SegmentLayout layout;
    InfoRichMask info_rich;
    int eval_layer = -1;
    int grid_rows = 0;
    int grid_cols = 0;
};

MetaSidecar load_meta(const fs::path& path) {
    try {
        nlohmann::json j = nlohmann::json::parse(slurp(path));
        MetaSidecar meta;
        auto span_of = [&](const char* key) {
            const auto& s = j.at("layout").at(key);
            return Span{s.at(0).get<int>(), s.at(1).get<int>()};
        };
        meta.layout.system = span_of("system");
        meta.layout.visual = span_of("visual");
        meta.layout.query = span_of("query");
        meta.layout.generated = span_of("generated");
        meta.info_rich = j.at("info_rich").get<InfoRichMask>();
        if (j.contains("eval_layer")) meta.eval_layer = j["eval_layer"].get<int>();
        if (j.contains("grid")) {
            meta.grid_rows = j["grid"].at("rows").get<int>();
            meta.grid_cols = j["grid"].at("cols").get<int>();
        } else {
            // assume a square grid when the sidecar does not say
            const int side = static_cast<int>(std::lround(std::sqrt(meta.layout.visual.len)));
            meta.grid_rows = side;
            meta.grid_cols = side > 0 ? meta.layout.visual.len / side : 0;
        }
        return meta;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

AttentionCapture load_capture(const fs::path& atn_path, const SegmentLayout& layout) {
    DenseTensor t = read_atn1(atn_path);  // Atn1Error handled by dispatcher
    if (t.dims.size() != 4) throw DataError(atn_path.string() + ": expected a 4-D tensor");
    if (t.dims[2] != t.dims[3]) throw DataError(atn_path.string() + ": rows/cols mismatch");
    AttentionCapture cap;
    cap.layers = static_cast<int>(t.dims[0]);
    cap.heads = static_cast<int>(t.dims[1]);
    cap.tokens = static_cast<int>(t.dims[2]);
    cap.layout = layout;
    if (cap.tokens != layout.total())
        throw DataError(atn_path.string() + ": tensor does not match layout");
    cap.weights = std::move(t.data);
    return cap;
}

std::vector<int> parse_layer_set(const std::string& text) {
    // "3..5", "3-5", "4", or "3,4,5"
    std::vector<int> out;
    const auto dots = text.find("..");
    const auto dash = text.find('-');
    if (dots != std::string::npos || dash != std::string::npos) {
        const std::size_t sep = dots != std::string::npos ? dots : dash;
        const std::size_t skip = dots != std::string::npos ? 2 : 1;
        const int lo = std::stoi(text.substr(0, sep));
        const int hi = std::stoi(text.substr(sep + skip));
        if (hi < lo) throw DataError("bad layer range: " + text);
        for (int l = lo; l <= hi; ++l) out.push_back(l);
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    if (out.empty()) throw DataError("bad layer set: " + text);
    return out;
}

void parse_grid(const std::string& text, int& rows, int& cols) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw DataError("bad grid spec: " + text);
    rows = std::stoi(text.substr(0, x));
    cols = std::stoi(text.substr(x + 1));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
}

// ------------------------------------------------------------------
// shared option bundles
// ------------------------------------------------------------------

struct DataPaths {
    std::string vocab = std::string(GIFT_DATA_DIR) + "/vocab.txt";
    std::string lexicon = std::string(GIFT_DATA_DIR) + "/lexicon.tsv";
};

void add_data_paths(CLI::App* cmd, DataPaths& paths) {
    cmd->add_option("--vocab", paths.vocab, "vocabulary file (one word per line)");
    cmd->add_option("--lexicon", paths.lexicon, "POS lexicon file (word<TAB>TAG)");
}

struct SteeringFlags {
    double alpha = 0.0;
    double beta = 0.0;
    int saliency_layer = 0;
    std::string fusion_layers;
    double head_fraction = 0.0;
    float clip_k = 0.0f;
    std::string mode;
    std::string heads;
    std::string ratio_kind;
    bool literal_predecessor = false;
    std::string config_file;

    CLI::Option *alpha_o = nullptr, *beta_o = nullptr, *slayer_o = nullptr, *flayers_o = nullptr,
                *fraction_o = nullptr, *clip_o = nullptr, *mode_o = nullptr, *heads_o = nullptr,
                *ratio_o = nullptr, *literal_o = nullptr, *config_o = nullptr;
};

void add_steering_flags(CLI::App* cmd, SteeringFlags& f) {
    f.config_o = cmd->add_option("--config", f.config_file, "steering config JSON file");
    f.alpha_o = cmd->add_option("--alpha", f.alpha, "visual amplification coefficient");
    f.beta_o = cmd->add_option("--beta", f.beta, "query scaling coefficient");
    f.slayer_o = cmd->add_option("--saliency-layer", f.saliency_layer, "layer for the saliency map");
    f.flayers_o = cmd->add_option("--fusion-layers", f.fusion_layers,
                                  "steered layers, e.g. 3..5 or 3,4,5");
    f.fraction_o = cmd->add_option("--fraction", f.head_fraction, "head fraction in (0,1]");
    f.clip_o = cmd->add_option("--clip-k", f.clip_k, "sigma clip for the shift map");
    f.mode_o = cmd->add_option("--mode", f.mode, "off|gift|inc_v|cal_v|static_map");
    f.heads_o = cmd->add_option("--heads", f.heads, "per-step|calibrated head selection");
    f.ratio_o = cmd->add_option("--ratio-kind", f.ratio_kind, "mass|literal-sum");
    f.literal_o = cmd->add_flag("--literal-predecessor", f.literal_predecessor,
                                "literal previous-row semantics for the first query token");
}

// defaults < config file < flags
SteeringConfig resolve_config(const SteeringFlags& f) {
    SteeringConfig cfg;
    try {
        if (f.config_o->count() > 0) cfg.apply_json_overlay(slurp(f.config_file));
        if (f.alpha_o->count() > 0) cfg.alpha = f.alpha;
        if (f.beta_o->count() > 0) cfg.beta = f.beta;
        if (f.slayer_o->count() > 0) cfg.saliency_layer = f.saliency_layer;
        if (f.flayers_o->count() > 0) cfg.fusion_layers = parse_layer_set(f.fusion_layers);
        if (f.fraction_o->count() > 0) cfg.head_fraction = f.head_fraction;
        if (f.clip_o->count() > 0) cfg.clip_k = f.clip_k;
        if (f.mode_o->count() > 0) cfg.mode = steer_mode_from_name(f.mode);
        if (f.heads_o->count() > 0) {
            std::string name = f.heads;
            std::replace(name.begin(), name.end(), '-', '_');
            cfg.head_selection = head_selection_from_name(name);
        }
        if (f.ratio_o->count() > 0) {
            std::string name = f.ratio_kind;
            std::replace(name.begin(), name.end(), '-', '_');
            cfg.ratio_kind = ratio_kind_from_name(name);
        }
        if (f.literal_o->count() > 0) cfg.literal_predecessor = f.literal_predecessor;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"gaze-shift saliency extraction and attention steering toolkit"};
    app.name("gift");
    app.require_subcommand(1);

    // ---- saliency ----
    auto* sal = app.add_subcommand("saliency", "compute a saliency map from an attention dump");
    struct {
        std::string attn, meta, out, ppm;
        std::string mode = "shift", norm = "minmax";
        int layer = -1;
        double fraction = 0.5;
        float clip_k = 3.0f;
        bool literal = false;
        std::uint64_t seed = 42;
        CLI::Option* layer_o = nullptr;
    } sal_v;
    sal->add_option("--attn", sal_v.attn, "ATN1 attention dump (layers x heads x n x n)")
        ->required();
    sal->add_option("--meta", sal_v.meta, "meta JSON with layout and info-rich mask")->required();
    sal->add_option("--out", sal_v.out, "output map (1-D ATN1 + .json sidecar)")->required();
    sal->add_option("--mode", sal_v.mode, "shift|static");
    sal->add_option("--norm", sal_v.norm, "minmax|sum");
    sal_v.layer_o = sal->add_option("--layer", sal_v.layer, "layer index (default: meta eval layer)");
    sal->add_option("--ppm", sal_v.ppm, "also write a grayscale heatmap");
    sal->add_option("--fraction", sal_v.fraction, "head fraction in (0,1]");
    sal->add_option("--clip-k", sal_v.clip_k, "sigma clip (minmax shift maps)");
    sal->add_flag("--literal-predecessor", sal_v.literal, "literal previous-row semantics");
    sal->add_option("--seed", sal_v.seed, "unused here; accepted for uniformity");

    // ---- diagnose layers ----
    auto* diag = app.add_subcommand("diagnose", "layer diagnostics");
    auto* diag_layers = diag->add_subcommand("layers", "pick the saliency layer and fusion band");
    struct {
        std::string fixtures, out;
        int count = 0;
        double threshold = 0.2;
        std::uint64_t seed = 42;
        int decode_tokens = 12;
        DataPaths data;
    } diag_v;
    diag_layers->add_option("--fixtures", diag_v.fixtures, "fixture directory")->required();
    diag_layers->add_option("--count", diag_v.count, "limit the number of fixtures used");
    diag_layers->add_option("--threshold", diag_v.threshold, "visual attention proportion cut");
    diag_layers->add_option("--seed", diag_v.seed, "model seed");
    diag_layers->add_option("--decode-tokens", diag_v.decode_tokens,
                            "tokens decoded per example for the fusion diagnostic");
    diag_layers->add_option("--out", diag_v.out, "write the diagnostic JSON here");
    add_data_paths(diag_layers, diag_v.data);

    // ---- decode ----
    auto* dec = app.add_subcommand("decode", "greedy decode with optional steering");
    struct {
        std::string scene, query, out, resolved;
        std::string system = "observe this scene .";
        int max_new_tokens = 32;
        std::uint64_t seed = 42;
        DataPaths data;
        SteeringFlags steer;
    } dec_v;
    dec->add_option("--scene", dec_v.scene, "scene JSON")->required();
    dec->add_option("--query", dec_v.query, "user query text")->required();
    dec->add_option("--system", dec_v.system, "system text");
    dec->add_option("--max-new-tokens", dec_v.max_new_tokens, "decode budget");
    dec->add_option("--seed", dec_v.seed, "model seed");
    dec->add_option("--out", dec_v.out, "transcript JSON path (default: stdout)");
    dec->add_option("--resolved-config", dec_v.resolved, "dump the effective config JSON");
    add_data_paths(dec, dec_v.data);
    add_steering_flags(dec, dec_v.steer);

    // ---- fixtures gen ----
    auto* fix = app.add_subcommand("fixtures", "planted fixture tooling");
    auto* fix_gen = fix->add_subcommand("gen", "generate planted fixtures");
    struct {
        std::string out;
        int count = 100;
        std::string grid = "8x8";
        FixtureParams params;
        DataPaths data;
    } fix_v;
    fix_gen->add_option("--out", fix_v.out, "output directory")->required();
    fix_gen->add_option("--count", fix_v.count, "number of fixtures");
    fix_gen->add_option("--seed", fix_v.params.seed, "generator seed");
    fix_gen->add_option("--grid", fix_v.grid, "grid as RxC");
    fix_gen->add_option("--layers", fix_v.params.layers, "tensor layer count");
    fix_gen->add_option("--heads", fix_v.params.heads, "tensor head count");
    fix_gen->add_option("--c-sink-min", fix_v.params.c_sink_min, "min sink mass");
    fix_gen->add_option("--c-sink-max", fix_v.params.c_sink_max, "max sink mass");
    fix_gen->add_option("--visual-budget", fix_v.params.visual_budget, "visual mass per row");
    fix_gen->add_option("--peak-layer", fix_v.params.peak_layer, "layer with the largest shifts");
    add_data_paths(fix_gen, fix_v.data);

    // ---- eval planted ----
    auto* ev = app.add_subcommand("eval", "evaluation harness");
    auto* ev_planted = ev->add_subcommand("planted", "static-vs-shift scoring on planted fixtures");
    struct {
        std::string fixtures, report, heatmaps;
        std::string format;
        int jobs = 1;
        int count = 0;
        std::uint64_t seed = 42;
    } ev_v;
    ev_planted->add_option("--fixtures", ev_v.fixtures, "fixture directory")->required();
    ev_planted->add_option("--jobs", ev_v.jobs, "worker threads over fixtures");
    ev_planted->add_option("--count", ev_v.count, "limit the number of fixtures");
    ev_planted->add_option("--report", ev_v.report, "report path (.csv or .json)");
    ev_planted->add_option("--format", ev_v.format, "csv|json (default: by extension)");
    ev_planted->add_option("--heatmaps", ev_v.heatmaps, "directory for per-fixture PPM heatmaps");
    ev_planted->add_option("--seed", ev_v.seed, "unused here; accepted for uniformity");

    // ---- bench latency ----
    auto* bench = app.add_subcommand("bench", "benchmarks");
    auto* bench_lat = bench->add_subcommand("latency", "steered vs greedy wall-clock ratio");
    struct {
        std::string scene, query, out;
        std::string system = "observe this scene .";
        int runs = 10;
        int warmup = 2;
        int output_len = 32;
        std::uint64_t seed = 42;
        DataPaths data;
        SteeringFlags steer;
    } bench_v;
    bench_lat->add_option("--scene", bench_v.scene, "scene JSON")->required();
    bench_lat->add_option("--query", bench_v.query, "user query text")->required();
    bench_lat->add_option("--system", bench_v.system, "system text");
    bench_lat->add_option("--runs", bench_v.runs, "timed runs per mode (median)");
    bench_lat->add_option("--warmup", bench_v.warmup, "warmup runs excluded from timing");
    bench_lat->add_option("--output-len", bench_v.output_len, "fixed output length");
    bench_lat->add_option("--seed", bench_v.seed, "model seed");
    bench_lat->add_option("--out", bench_v.out, "write the bench report JSON here");
    add_data_paths(bench_lat, bench_v.data);
    add_steering_flags(bench_lat, bench_v.steer);

    // ---- parse ----
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sal->parsed()) {
            const MetaSidecar meta = load_meta(sal_v.meta);
            const AttentionCapture cap = load_capture(sal_v.attn, meta.layout);
            int layer = sal_v.layer_o->count() > 0 ? sal_v.layer : meta.eval_layer;
            if (layer < 0) throw DataError("no --layer given and meta has no eval_layer");
            if (layer >= cap.layers)
                throw DataError("layer " + std::to_string(layer) + " not in capture");
            const MapNorm norm = sal_v.norm == "sum" ? MapNorm::Sum : MapNorm::MinMax;

            SaliencyMap map;
            if (sal_v.mode == "static") {
                map = static_saliency(cap, layer, sal_v.fraction, norm);
            } else if (sal_v.mode == "shift") {
                ShiftOptions opt;
                opt.head_fraction = sal_v.fraction;
                opt.literal_predecessor = sal_v.literal;
                opt.clip_k = sal_v.clip_k;
                map = shift_saliency(cap, layer, meta.info_rich, opt, norm);
            } else {
                throw DataError("unknown saliency mode: " + sal_v.mode);
            }

            DenseTensor t;
            t.dims = {static_cast<std::uint32_t>(map.scores.size())};
            t.data = map.scores;
            write_atn1(fs::path(sal_v.out), t);
            nlohmann::json sidecar = {{"layer", map.layer},
                                      {"method", saliency_method_name(map.method)},
                                      {"normalization", map_norm_name(map.norm)}};
            write_text(sal_v.out + ".json", sidecar.dump(2));
            if (!sal_v.ppm.empty())
                write_heatmap_ppm(sal_v.ppm, map.scores, meta.grid_rows, meta.grid_cols);
            std::cout << "wrote " << sal_v.out << " (" << sal_v.mode << ", layer " << layer << ", "
                      << map_norm_name(map.norm) << ")\n";
            return 0;
        }

        if (diag_layers->parsed()) {
            const int available = count_fixtures(diag_v.fixtures);
            if (available == 0) throw DataError("no fixtures in " + diag_v.fixtures);
            const int use = diag_v.count > 0 ? std::min(diag_v.count, available) : available;

            std::vector<PlantedFixture> fixtures;
            fixtures.reserve(static_cast<std::size_t>(use));
            for (int i = 0; i < use; ++i) fixtures.push_back(load_fixture(diag_v.fixtures, i));

            std::vector<AttentionCapture> captures;
            std::vector<InfoRichMask> masks;
            for (const auto& f : fixtures) {
                captures.push_back(f.attn);
                masks.push_back(f.info_rich);
            }
            const int saliency_layer = choose_saliency_layer(captures, masks);

            const Vocabulary vocab = load_vocab(diag_v.data.vocab);
            const Lexicon lexicon = load_lexicon(diag_v.data.lexicon);
            ModelConfig mc;
            mc.seed = diag_v.seed;
            mc.grid_rows = fixtures[0].grid_rows;
            mc.grid_cols = fixtures[0].grid_cols;
            const Model model = build_model(mc);

            DecodeOptions opt;
            opt.max_new_tokens = diag_v.decode_tokens;
            opt.stop_at_eos = false;
            opt.vocab = &vocab;

            std::vector<FusionDiagnostic> diags;
            int skipped = 0;
            for (const auto& f : fixtures) {
                PromptInputs in;
                in.system = tag(tokenize("observe this scene .", vocab), lexicon);
                in.scene = f.scene;
                in.query = tag(tokenize(f.query, vocab), lexicon);
                const OutputCaptureResult cap = decode_with_output_capture(model, in, opt);
                const InfoRichMask mask = output_info_rich_mask(cap.result.tokens, vocab, lexicon);
                try {
                    diags.push_back(fusion_diagnostic(cap.attn, mask));
                } catch (const std::runtime_error&) {
                    ++skipped;  // no info-rich output words in this example
                }
            }
            if (diags.empty()) throw DataError("no example produced info-rich output words");
            const FusionDiagnostic avg = average_diagnostics(diags);
            const std::vector<int> band = select_fusion_layers(avg, diag_v.threshold);

            nlohmann::json j;
            j["saliency_layer"] = saliency_layer;
            j["fusion_layers"] = band;
            j["fusion_band"] = {{"start", band.front()}, {"end", band.back()}};
            j["r_visual"] = avg.r_visual;
            j["r_query"] = avg.r_query;
            j["examples_used"] = diags.size();
            j["examples_skipped"] = skipped;
            const std::string text = j.dump(2);
            if (!diag_v.out.empty()) write_text(diag_v.out, text);
            std::cout << text << "\n";
            return 0;
        }

        if (dec->parsed()) {
            const Vocabulary vocab = load_vocab(dec_v.data.vocab);
            const Lexicon lexicon = load_lexicon(dec_v.data.lexicon);
            const Scene scene = load_scene(dec_v.scene);

            ModelConfig mc;
            mc.seed = dec_v.seed;
            mc.grid_rows = scene.rows;
            mc.grid_cols = scene.cols;
            const Model model = build_model(mc);

            PromptInputs in;
            in.system = tag(tokenize(dec_v.system, vocab), lexicon);
            in.scene = scene;
            try {
                in.query = tag(tokenize(dec_v.query, vocab), lexicon);
            } catch (const std::exception& e) {
                throw DataError(e.what());
            }

            const SteeringConfig cfg = resolve_config(dec_v.steer);
            if (!dec_v.resolved.empty()) {
                nlohmann::json r = nlohmann::json::parse(cfg.to_json_text());
                r["seed"] = dec_v.seed;
                r["max_new_tokens"] = dec_v.max_new_tokens;
                write_text(dec_v.resolved, r.dump(2));
            }

            DecodeOptions opt;
            opt.max_new_tokens = dec_v.max_new_tokens;
            opt.vocab = &vocab;
            const auto [result, map] = gift_decode(model, in, cfg, opt);
            const std::string transcript = transcript_json(result, &cfg);
            if (dec_v.out.empty()) {
                std::cout << transcript << "\n";
            } else {
                write_text(dec_v.out, transcript);
                std::cout << "wrote " << dec_v.out << " (" << result.steps << " tokens"
                          << (result.fallback ? ", fallback" : "") << ")\n";
            }
            return 0;
        }

        if (fix_gen->parsed()) {
            parse_grid(fix_v.grid, fix_v.params.grid_rows, fix_v.params.grid_cols);
            const Vocabulary vocab = load_vocab(fix_v.data.vocab);
            const Lexicon lexicon = load_lexicon(fix_v.data.lexicon);
            const auto fixtures = gen_fixtures(fix_v.params, fix_v.count, vocab, lexicon);
            for (std::size_t i = 0; i < fixtures.size(); ++i) {
                validate_fixture(fixtures[i]);
                save_fixture(fix_v.out, static_cast<int>(i), fixtures[i]);
            }
            std::cout << "generated " << fixtures.size() << " fixtures in " << fix_v.out << "\n";
            return 0;
        }

        if (ev_planted->parsed()) {
            const int available = count_fixtures(ev_v.fixtures);
            if (available == 0) throw DataError("no fixtures in " + ev_v.fixtures);
            const int use = ev_v.count > 0 ? std::min(ev_v.count, available) : available;
            std::vector<PlantedFixture> fixtures;
            fixtures.reserve(static_cast<std::size_t>(use));
            for (int i = 0; i < use; ++i) fixtures.push_back(load_fixture(ev_v.fixtures, i));

            const MetricReport rep = eval_saliency(fixtures, ev_v.jobs);

            if (!ev_v.heatmaps.empty()) {
                fs::create_directories(ev_v.heatmaps);
                for (int i = 0; i < use; ++i) {
                    const auto& f = fixtures[static_cast<std::size_t>(i)];
                    const auto sh = select_heads_static(f.attn, f.eval_layer);
                    const auto st = static_scores_raw(f.attn, f.eval_layer, sh);
                    const auto hh = select_heads_shift(f.attn, f.eval_layer, f.info_rich);
                    const auto sf = shift_scores_raw(f.attn, f.eval_layer, hh, f.info_rich);
                    char name[48];
                    std::snprintf(name, sizeof(name), "%04d.static.ppm", i);
                    write_heatmap_ppm(fs::path(ev_v.heatmaps) / name, st, f.grid_rows, f.grid_cols);
                    std::snprintf(name, sizeof(name), "%04d.shift.ppm", i);
                    write_heatmap_ppm(fs::path(ev_v.heatmaps) / name, sf, f.grid_rows, f.grid_cols);
                }
            }

            if (!ev_v.report.empty()) {
                const bool json = ev_v.format == "json" ||
                                  (ev_v.format.empty() && fs::path(ev_v.report).extension() == ".json");
                if (json) write_report_json(ev_v.report, rep);
                else write_report_csv(ev_v.report, rep);
            }
            std::cout << "fixtures " << rep.fixtures.size() << "  win_rate " << rep.win_rate
                      << "  mean_static " << rep.mean_static_score << "  mean_shift "
                      << rep.mean_shift_score << "  sink_shift_mean " << rep.mean_sink_shift
                      << "  degenerate " << rep.degenerate_count << "\n";
            return 0;
        }

        if (bench_lat->parsed()) {
            const Vocabulary vocab = load_vocab(bench_v.data.vocab);
            const Lexicon lexicon = load_lexicon(bench_v.data.lexicon);
            const Scene scene = load_scene(bench_v.scene);
            ModelConfig mc;
            mc.seed = bench_v.seed;
            mc.grid_rows = scene.rows;
            mc.grid_cols = scene.cols;
            const Model model = build_model(mc);

            PromptInputs in;
            in.system = tag(tokenize(bench_v.system, vocab), lexicon);
            in.scene = scene;
            in.query = tag(tokenize(bench_v.query, vocab), lexicon);

            const SteeringConfig cfg = resolve_config(bench_v.steer);
            const BenchReport rep = bench_latency(model, {in}, cfg, bench_v.output_len,
                                                  bench_v.runs, bench_v.warmup);
            std::cout << "mode " << rep.mode << "  greedy_median_ms " << rep.greedy_median_ms
                      << "  steered_median_ms " << rep.steered_median_ms << "  ratio " << rep.ratio
                      << "\n";
            if (!bench_v.out.empty()) {
                MetricReport wrapper;
                wrapper.bench.push_back(rep);
                write_report_json(bench_v.out, wrapper);
            }
            return 0;
        }
    } catch (const Atn1Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }

    return 1;
}

}  // namespace gift
