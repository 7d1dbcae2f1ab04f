#include "gift/steering.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace gift {

const char* steer_mode_name(SteerMode m) {
    switch (m) {
        case SteerMode::Off: return "off";
        case SteerMode::Gift: return "gift";
        case SteerMode::IncV: return "inc_v";
        case SteerMode::CalV: return "cal_v";
        case SteerMode::StaticMap: return "static_map";
    }
    return "off";
}

SteerMode steer_mode_from_name(std::string_view name) {
    if (name == "off") return SteerMode::Off;
    if (name == "gift") return SteerMode::Gift;
    if (name == "inc_v") return SteerMode::IncV;
    if (name == "cal_v") return SteerMode::CalV;
    if (name == "static_map") return SteerMode::StaticMap;
    throw std::runtime_error("unknown steering mode: " + std::string(name));
}

const char* ratio_kind_name(RatioKind k) {
    return k == RatioKind::Mass ? "mass" : "literal_sum";
}

RatioKind ratio_kind_from_name(std::string_view name) {
    if (name == "mass") return RatioKind::Mass;
    if (name == "literal_sum") return RatioKind::LiteralSum;
    throw std::runtime_error("unknown ratio kind: " + std::string(name));
}

const char* head_selection_name(HeadSelection s) {
    return s == HeadSelection::PerStep ? "per_step" : "calibrated";
}

HeadSelection head_selection_from_name(std::string_view name) {
    if (name == "per_step") return HeadSelection::PerStep;
    if (name == "calibrated") return HeadSelection::Calibrated;
    throw std::runtime_error("unknown head selection: " + std::string(name));
}

void SteeringConfig::validate(int total_layers) const {
    if (alpha < 0.0) throw std::invalid_argument("SteeringConfig: alpha must be non-negative");
    if (beta < 0.0) throw std::invalid_argument("SteeringConfig: beta must be non-negative");
    if (!(head_fraction > 0.0) || head_fraction > 1.0)
        throw std::invalid_argument("SteeringConfig: head_fraction must be in (0,1]");
    if (!(clip_k > 0.0f)) throw std::invalid_argument("SteeringConfig: clip_k must be positive");
    if (saliency_layer < 0 || saliency_layer >= total_layers)
        throw std::invalid_argument("SteeringConfig: saliency_layer out of range");
    if (mode != SteerMode::Off) {
        if (fusion_layers.empty())
            throw std::invalid_argument("SteeringConfig: fusion_layers empty");
        for (int l : fusion_layers)
            if (l < 0 || l >= total_layers)
                throw std::invalid_argument("SteeringConfig: fusion layer out of range");
    }
}

ShiftOptions SteeringConfig::shift_options() const {
    ShiftOptions opt;
    opt.head_fraction = head_fraction;
    opt.literal_predecessor = literal_predecessor;
    opt.clip_k = clip_k;
    return opt;
}

std::string SteeringConfig::to_json_text() const {
    nlohmann::json j;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["saliency_layer"] = saliency_layer;
    j["fusion_layers"] = fusion_layers;
    j["head_fraction"] = head_fraction;
    j["clip_k"] = clip_k;
    j["mode"] = steer_mode_name(mode);
    j["head_selection"] = head_selection_name(head_selection);
    j["ratio_kind"] = ratio_kind_name(ratio_kind);
    j["literal_predecessor"] = literal_predecessor;
    return j.dump(2);
}

void SteeringConfig::apply_json_overlay(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    if (j.contains("alpha")) alpha = j["alpha"].get<double>();
    if (j.contains("beta")) beta = j["beta"].get<double>();
    if (j.contains("saliency_layer")) saliency_layer = j["saliency_layer"].get<int>();
    if (j.contains("fusion_layers")) fusion_layers = j["fusion_layers"].get<std::vector<int>>();
    if (j.contains("head_fraction")) head_fraction = j["head_fraction"].get<double>();
    if (j.contains("clip_k")) clip_k = j["clip_k"].get<float>();
    if (j.contains("mode")) mode = steer_mode_from_name(j["mode"].get<std::string>());
    if (j.contains("head_selection"))
        head_selection = head_selection_from_name(j["head_selection"].get<std::string>());
    if (j.contains("ratio_kind")) ratio_kind = ratio_kind_from_name(j["ratio_kind"].get<std::string>());
    if (j.contains("literal_predecessor")) literal_predecessor = j["literal_predecessor"].get<bool>();
}

const std::map<std::string, SteeringPreset>& steering_presets() {
    static const std::map<std::string, SteeringPreset> presets = {
        {"llava-1.5-7b", {5.0, 11, 12, 22}},
        {"llava-1.5-13b", {5.0, 10, 14, 20}},
        {"qwen2-vl-7b", {4.0, 14, 5, 18}},
    };
    return presets;
}

// ---------------------------------------------------------------------
// Fusion diagnostics
// ---------------------------------------------------------------------

FusionDiagnostic fusion_diagnostic(const AttentionCapture& attn, const InfoRichMask& output_mask,
                                   double head_fraction) {
    const Span gen = attn.layout.generated;
    if (static_cast<int>(output_mask.size()) != gen.len)
        throw std::invalid_argument("fusion_diagnostic: mask length mismatch");
    std::vector<int> rows;
    for (int g = 0; g < gen.len; ++g) {
        if (output_mask[static_cast<std::size_t>(g)]) rows.push_back(gen.start + g);
    }
    if (rows.empty()) throw std::runtime_error("empty output mask");

    const Span vis = attn.layout.visual;
    const Span qry = attn.layout.query;
    FusionDiagnostic diag;
    diag.layers = attn.layers;
    diag.heads = attn.heads;
    diag.head_mass_visual.assign(static_cast<std::size_t>(attn.layers), {});
    diag.head_mass_query.assign(static_cast<std::size_t>(attn.layers), {});
    diag.heads_visual.resize(static_cast<std::size_t>(attn.layers));
    diag.heads_query.resize(static_cast<std::size_t>(attn.layers));
    diag.r_visual.resize(static_cast<std::size_t>(attn.layers));
    diag.r_query.resize(static_cast<std::size_t>(attn.layers));

    const int keep = top_fraction_count(attn.heads, head_fraction);
    for (int l = 0; l < attn.layers; ++l) {
        auto& mv = diag.head_mass_visual[static_cast<std::size_t>(l)];
        auto& mq = diag.head_mass_query[static_cast<std::size_t>(l)];
        mv.assign(static_cast<std::size_t>(attn.heads), 0.0);
        mq.assign(static_cast<std::size_t>(attn.heads), 0.0);
        for (int h = 0; h < attn.heads; ++h) {
            double av = 0.0, aq = 0.0;
            for (int i : rows) {
                for (int j = vis.start; j < vis.end(); ++j) av += attn.at(l, h, i, j);
                for (int j = qry.start; j < qry.end(); ++j) aq += attn.at(l, h, i, j);
            }
            mv[static_cast<std::size_t>(h)] = av / static_cast<double>(rows.size());
            mq[static_cast<std::size_t>(h)] = aq / static_cast<double>(rows.size());
        }

        auto top = [&](const std::vector<double>& mass) {
            std::vector<int> order(mass.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return mass[static_cast<std::size_t>(a)] > mass[static_cast<std::size_t>(b)];
            });
            order.resize(static_cast<std::size_t>(keep));
            std::sort(order.begin(), order.end());
            return order;
        };
        diag.heads_visual[static_cast<std::size_t>(l)] = top(mv);
        diag.heads_query[static_cast<std::size_t>(l)] = top(mq);

        auto mean_over = [](const std::vector<double>& mass, const std::vector<int>& set) {
            double acc = 0.0;
            for (int h : set) acc += mass[static_cast<std::size_t>(h)];
            return acc / static_cast<double>(set.size());
        };
        diag.r_visual[static_cast<std::size_t>(l)] =
            mean_over(mv, diag.heads_visual[static_cast<std::size_t>(l)]);
        diag.r_query[static_cast<std::size_t>(l)] =
            mean_over(mq, diag.heads_query[static_cast<std::size_t>(l)]);
    }
    return diag;
}

FusionDiagnostic average_diagnostics(std::span<const FusionDiagnostic> diags) {
    if (diags.empty()) throw std::invalid_argument("average_diagnostics: empty batch");
    const int layers = diags[0].layers;
    const int heads = diags[0].heads;
    for (const auto& d : diags)
        if (d.layers != layers || d.heads != heads)
            throw std::invalid_argument("average_diagnostics: inconsistent shapes");

    FusionDiagnostic out;
    out.layers = layers;
    out.heads = heads;
    out.head_mass_visual.assign(static_cast<std::size_t>(layers),
                                std::vector<double>(static_cast<std::size_t>(heads), 0.0));
    out.head_mass_query = out.head_mass_visual;
    for (const auto& d : diags) {
        for (int l = 0; l < layers; ++l) {
            for (int h = 0; h < heads; ++h) {
                out.head_mass_visual[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)] +=
                    d.head_mass_visual[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
                out.head_mass_query[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)] +=
                    d.head_mass_query[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)];
            }
        }
    }
    const auto n = static_cast<double>(diags.size());
    out.heads_visual.resize(static_cast<std::size_t>(layers));
    out.heads_query.resize(static_cast<std::size_t>(layers));
    out.r_visual.resize(static_cast<std::size_t>(layers));
    out.r_query.resize(static_cast<std::size_t>(layers));
    const int keep = top_fraction_count(heads, 0.5);
    for (int l = 0; l < layers; ++l) {
        auto& mv = out.head_mass_visual[static_cast<std::size_t>(l)];
        auto& mq = out.head_mass_query[static_cast<std::size_t>(l)];
        for (auto& x : mv) x /= n;
        for (auto& x : mq) x /= n;
        auto top = [&](const std::vector<double>& mass) {
            std::vector<int> order(mass.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return mass[static_cast<std::size_t>(a)] > mass[static_cast<std::size_t>(b)];
            });
            order.resize(static_cast<std::size_t>(keep));
            std::sort(order.begin(), order.end());
            return order;
        };
        out.heads_visual[static_cast<std::size_t>(l)] = top(mv);
        out.heads_query[static_cast<std::size_t>(l)] = top(mq);
        auto mean_over = [](const std::vector<double>& mass, const std::vector<int>& set) {
            double acc = 0.0;
            for (int h : set) acc += mass[static_cast<std::size_t>(h)];
            return acc / static_cast<double>(set.size());
        };
        out.r_visual[static_cast<std::size_t>(l)] =
            mean_over(mv, out.heads_visual[static_cast<std::size_t>(l)]);
        out.r_query[static_cast<std::size_t>(l)] =
            mean_over(mq, out.heads_query[static_cast<std::size_t>(l)]);
    }
    return out;
}

std::vector<int> select_fusion_layers(const FusionDiagnostic& diag, double threshold) {
    int first = -1, last = -1;
    for (int l = 0; l < diag.layers; ++l) {
        if (diag.r_visual[static_cast<std::size_t>(l)] >= threshold) {
            if (first < 0) first = l;
            last = l;
        }
    }
    if (first < 0) throw std::runtime_error("no fusion band");
    std::vector<int> band;
    for (int l = first; l <= last; ++l) band.push_back(l);
    return band;
}

// ---------------------------------------------------------------------
// Row-level steering primitives
// ---------------------------------------------------------------------

namespace {

double segment_mass(const std::vector<float>& row, Span seg) {
    double acc = 0.0;
    const int hi = std::min<int>(seg.end(), static_cast<int>(row.size()));
    for (int j = seg.start; j < hi; ++j) acc += row[static_cast<std::size_t>(j)];
    return acc;
}

}  // namespace

std::vector<int> rank_heads_by_segment_mass(const HeadRows& rows, Span segment,
                                            double head_fraction) {
    const int H = static_cast<int>(rows.size());
    std::vector<double> mass(static_cast<std::size_t>(H), 0.0);
    for (int h = 0; h < H; ++h) mass[static_cast<std::size_t>(h)] = segment_mass(rows[static_cast<std::size_t>(h)], segment);
    std::vector<int> order(static_cast<std::size_t>(H));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return mass[static_cast<std::size_t>(a)] > mass[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(top_fraction_count(H, head_fraction)));
    std::sort(order.begin(), order.end());
    return order;
}

void amplify_visual(HeadRows& rows, const SegmentLayout& layout, std::span<const float> map,
                    double alpha, std::span<const int> heads) {
    if (static_cast<int>(map.size()) != layout.visual.len)
        throw std::invalid_argument("amplify_visual: map length mismatch");
    if (alpha < 0.0) throw std::invalid_argument("amplify_visual: negative alpha");
    for (int h : heads) {
        auto& row = rows[static_cast<std::size_t>(h)];
        const int hi = std::min<int>(layout.visual.end(), static_cast<int>(row.size()));
        for (int j = layout.visual.start; j < hi; ++j) {
            const double factor =
                std::exp(alpha * static_cast<double>(map[static_cast<std::size_t>(j - layout.visual.start)]));
            row[static_cast<std::size_t>(j)] =
                static_cast<float>(static_cast<double>(row[static_cast<std::size_t>(j)]) * factor);
        }
    }
}

double compute_ratio(const HeadRows& original, const HeadRows& amplified,
                     const SegmentLayout& layout, std::span<const int> heads, RatioKind kind) {
    const Span vis = layout.visual;
    if (kind == RatioKind::Mass) {
        double before = 0.0, after = 0.0;
        for (int h : heads) {
            before += segment_mass(original[static_cast<std::size_t>(h)], vis);
            after += segment_mass(amplified[static_cast<std::size_t>(h)], vis);
        }
        if (before <= 0.0) throw std::runtime_error("compute_ratio: zero visual mass");
        return after / before;
    }
    // literal elementwise-ratio sum; 0/0 counts as 1
    double acc = 0.0;
    for (int h : heads) {
        const auto& o = original[static_cast<std::size_t>(h)];
        const auto& a = amplified[static_cast<std::size_t>(h)];
        const int hi = std::min<int>(vis.end(), static_cast<int>(o.size()));
        for (int j = vis.start; j < hi; ++j) {
            const float ov = o[static_cast<std::size_t>(j)];
            const float av = a[static_cast<std::size_t>(j)];
            acc += ov == 0.0f ? 1.0 : static_cast<double>(av) / static_cast<double>(ov);
        }
    }
    return acc;
}

void scale_query(HeadRows& rows, const SegmentLayout& layout, double ratio, double beta,
                 std::span<const int> heads) {
    if (!(ratio > 0.0)) throw std::invalid_argument("scale_query: ratio must be positive");
    const double factor = beta * ratio;
    for (int h : heads) {
        auto& row = rows[static_cast<std::size_t>(h)];
        const int hi = std::min<int>(layout.query.end(), static_cast<int>(row.size()));
        for (int j = layout.query.start; j < hi; ++j)
            row[static_cast<std::size_t>(j)] =
                static_cast<float>(static_cast<double>(row[static_cast<std::size_t>(j)]) * factor);
    }
}

void renormalize(std::span<float> row) {
    double sum = 0.0;
    for (float x : row) sum += x;
    if (sum <= 0.0) throw std::runtime_error("renormalize: zero-sum row");
    for (float& x : row) x = static_cast<float>(static_cast<double>(x) / sum);
}

// ---------------------------------------------------------------------
// Hook composition
// ---------------------------------------------------------------------

SteeringHook make_hook(const SteeringConfig& cfg, const SaliencyMap& map, int total_layers,
                       const FusionDiagnostic* calibrated) {
    cfg.validate(total_layers);
    SteeringHook hook;
    if (cfg.mode == SteerMode::Off) return hook;  // disabled, identity

    if (map.scores.empty()) throw std::runtime_error("make_hook: missing saliency map");
    if (map.norm != MapNorm::MinMax)
        throw std::invalid_argument("make_hook: steering map must be min-max normalized");
    if (cfg.head_selection == HeadSelection::Calibrated && calibrated == nullptr)
        throw std::invalid_argument("make_hook: calibrated head selection needs a diagnostic");

    hook.enabled = true;
    hook.layer_enabled.assign(static_cast<std::size_t>(total_layers), 0);
    for (int l : cfg.fusion_layers) hook.layer_enabled[static_cast<std::size_t>(l)] = 1;

    struct CalibratedSets {
        std::vector<std::vector<int>> visual, query;
    };
    CalibratedSets calib;
    if (cfg.head_selection == HeadSelection::Calibrated) {
        if (calibrated->layers < total_layers)
            throw std::invalid_argument("make_hook: diagnostic does not cover all layers");
        calib.visual = calibrated->heads_visual;
        calib.query = calibrated->heads_query;
    }

    hook.edit = [cfg, scores = map.scores, calib](int layer, HeadRows& rows,
                                                  const SegmentLayout& layout) {
        std::vector<int> h_ov, h_ot;
        if (cfg.head_selection == HeadSelection::PerStep) {
            h_ov = rank_heads_by_segment_mass(rows, layout.visual, cfg.head_fraction);
            h_ot = rank_heads_by_segment_mass(rows, layout.query, cfg.head_fraction);
        } else {
            h_ov = calib.visual[static_cast<std::size_t>(layer)];
            h_ot = calib.query[static_cast<std::size_t>(layer)];
        }

        const HeadRows original = rows;
        amplify_visual(rows, layout, scores, cfg.alpha, h_ov);

        switch (cfg.mode) {
            case SteerMode::Gift:
            case SteerMode::StaticMap: {
                const double r = compute_ratio(original, rows, layout, h_ov, cfg.ratio_kind);
                scale_query(rows, layout, r, cfg.beta, h_ot);
                break;
            }
            case SteerMode::IncV:
                break;
            case SteerMode::CalV: {
                // Restore each head's visual mass so only the distribution
                // within the visual span changes.
                for (int h : h_ov) {
                    auto& row = rows[static_cast<std::size_t>(h)];
                    const double before = segment_mass(original[static_cast<std::size_t>(h)], layout.visual);
                    const double after = segment_mass(row, layout.visual);
                    if (after <= 0.0) continue;
                    const double restore = before / after;
                    const int hi = std::min<int>(layout.visual.end(), static_cast<int>(row.size()));
                    for (int j = layout.visual.start; j < hi; ++j)
                        row[static_cast<std::size_t>(j)] = static_cast<float>(
                            static_cast<double>(row[static_cast<std::size_t>(j)]) * restore);
                }
                break;
            }
            case SteerMode::Off:
                break;
        }

        // Renormalize exactly the rows that changed; untouched heads stay
        // bitwise identical (this is what makes alpha=0, beta=1 a true
        // identity).
        for (std::size_t h = 0; h < rows.size(); ++h) {
            const auto& before = original[h];
            auto& after = rows[h];
            if (before.size() == after.size() &&
                std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0)
                continue;
            renormalize(after);
        }
    };
    return hook;
}

}  // namespace gift
