#include "gift/decoder.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "json.hpp"

namespace gift {

int argmax_lowest(std::span<const float> logits) {
    if (logits.empty()) throw std::invalid_argument("argmax_lowest: empty logits");
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
        if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)]) best = i;
    }
    return best;
}

namespace {

using Clock = std::chrono::steady_clock;

struct SnapshotListener : DecodeSession::StepRowListener {
    const std::vector<int>* layers = nullptr;
    std::vector<SteppedRows>* out = nullptr;
    int step = 0;

    void on_row(int layer, int position, const HeadRows& pre, const HeadRows& post) override {
        if (std::find(layers->begin(), layers->end(), layer) == layers->end()) return;
        SteppedRows s;
        s.step = step;
        s.layer = layer;
        s.position = position;
        s.pre = pre;
        s.post = post;
        out->push_back(std::move(s));
    }
};

std::string render_text(const std::vector<int>& tokens, const Vocabulary* vocab) {
    if (vocab == nullptr) return {};
    std::string text;
    for (int id : tokens) {
        if (!text.empty()) text += ' ';
        text += vocab->word_of(id);
    }
    return text;
}

DecodeResult run_decode(const Model& m, const PromptInputs& in, const SteeringHook* hook,
                        const DecodeOptions& opt) {
    const auto t0 = Clock::now();
    DecodeResult res;

    DecodeSession session(m, in);
    SnapshotListener listener;
    listener.layers = &opt.capture_layers;
    listener.out = &res.row_snapshots;
    DecodeSession::StepRowListener* lp = opt.capture_layers.empty() ? nullptr : &listener;

    for (int t = 0; t < opt.max_new_tokens; ++t) {
        const std::vector<float> logits = session.step(hook, lp);
        listener.step = t + 1;
        const int tok = argmax_lowest(logits);
        if (opt.stop_at_eos && tok == opt.eos_id) break;
        res.tokens.push_back(tok);
        if (t + 1 < opt.max_new_tokens) session.append_generated(tok);
    }

    res.steps = static_cast<int>(res.tokens.size());
    res.text = render_text(res.tokens, opt.vocab);
    res.duration_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
    return res;
}

}  // namespace

DecodeResult greedy_decode(const Model& m, const PromptInputs& in, const DecodeOptions& opt) {
    return run_decode(m, in, nullptr, opt);
}

std::pair<DecodeResult, SaliencyMap> gift_decode(const Model& m, const PromptInputs& in,
                                                 const SteeringConfig& cfg,
                                                 const DecodeOptions& opt,
                                                 const FusionDiagnostic* calibrated) {
    cfg.validate(m.cfg.layers);
    const auto t0 = Clock::now();

    SaliencyMap map;
    if (cfg.mode == SteerMode::Off) {
        DecodeResult res = run_decode(m, in, nullptr, opt);
        res.duration_ns =
            std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
        return {std::move(res), std::move(map)};
    }

    // Phase 1: truncated prefill, saliency at the configured layer.
    bool fallback = false;
    int phase1_layers = 0;
    const InfoRichMask query_mask = select_info_rich(in.query);
    const ShiftOptions sopt = cfg.shift_options();

    const bool needs_shift_rows = cfg.mode != SteerMode::StaticMap;
    bool eligible = true;
    if (needs_shift_rows) {
        // Eligibility is a property of the mask and predecessor rule only;
        // probe it on the layout before paying for the prefill.
        int count = 0;
        for (std::size_t qi = 0; qi < query_mask.size(); ++qi) {
            if (!query_mask[qi]) continue;
            if (qi == 0 && !cfg.literal_predecessor) continue;
            ++count;
        }
        eligible = count > 0;
    }

    if (!eligible) {
        fallback = true;
    } else {
        PrefillResult pre = prefill(m, in, cfg.saliency_layer);
        phase1_layers = pre.layers_run;
        if (cfg.mode == SteerMode::StaticMap) {
            map = static_saliency(pre.attn, cfg.saliency_layer, cfg.head_fraction, MapNorm::MinMax);
        } else {
            map = shift_saliency(pre.attn, cfg.saliency_layer, query_mask, sopt, MapNorm::MinMax);
        }
        if (map.all_zero()) fallback = true;  // flat map carries no signal
    }

    // Phase 2: fresh full prefill inside the session, hooked decode.
    // TODO: reuse phase-1 KV for the layers below the first fusion layer
    // instead of re-prefilling them.
    DecodeResult res;
    if (fallback) {
        res = run_decode(m, in, nullptr, opt);
        res.fallback = true;
        res.steered = false;
    } else {
        const SteeringHook hook = make_hook(cfg, map, m.cfg.layers, calibrated);
        res = run_decode(m, in, &hook, opt);
        res.steered = true;
    }
    res.phase1_layers = phase1_layers;
    res.duration_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
    return {std::move(res), std::move(map)};
}

OutputCaptureResult decode_with_output_capture(const Model& m, const PromptInputs& in,
                                               const DecodeOptions& opt) {
    struct AllRowsListener : DecodeSession::StepRowListener {
        // one entry per processed position: [layer][head][key]
        std::vector<std::pair<int, std::vector<HeadRows>>> rows;
        int layers = 0;
        void on_row(int layer, int position, const HeadRows&, const HeadRows& post) override {
            if (rows.empty() || rows.back().first != position)
                rows.push_back({position, std::vector<HeadRows>(static_cast<std::size_t>(layers))});
            rows.back().second[static_cast<std::size_t>(layer)] = post;
        }
    };

    OutputCaptureResult out;
    const auto t0 = Clock::now();
    DecodeSession session(m, in);
    AllRowsListener listener;
    listener.layers = m.cfg.layers;

    for (int t = 0; t < opt.max_new_tokens; ++t) {
        const std::vector<float> logits = session.step(nullptr, &listener);
        const int tok = argmax_lowest(logits);
        if (opt.stop_at_eos && tok == opt.eos_id) break;
        out.result.tokens.push_back(tok);
        session.append_generated(tok);
    }
    // one extra forward so the final generated token's row is captured
    if (!out.result.tokens.empty()) session.step(nullptr, &listener);

    out.result.steps = static_cast<int>(out.result.tokens.size());
    out.result.text = render_text(out.result.tokens, opt.vocab);
    out.result.duration_ns =
        std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();

    AttentionCapture& cap = out.attn;
    cap.layers = m.cfg.layers;
    cap.heads = m.cfg.heads;
    cap.layout = session.layout();
    cap.tokens = cap.layout.total();
    cap.allocate();
    for (const auto& [position, per_layer] : listener.rows) {
        for (int l = 0; l < cap.layers; ++l) {
            const HeadRows& rows = per_layer[static_cast<std::size_t>(l)];
            for (int h = 0; h < cap.heads; ++h) {
                const auto& r = rows[static_cast<std::size_t>(h)];
                for (int j = 0; j < static_cast<int>(r.size()); ++j)
                    cap.at(l, h, position, j) = r[static_cast<std::size_t>(j)];
            }
        }
    }
    return out;
}

InfoRichMask output_info_rich_mask(const std::vector<int>& tokens, const Vocabulary& vocab,
                                   const Lexicon& lexicon) {
    TokenizedText text;
    text.ids = tokens;
    text.tokens.reserve(tokens.size());
    for (int id : tokens) text.tokens.push_back(vocab.word_of(id));
    text = tag(std::move(text), lexicon);

    const std::size_t sentence = sentence_prefix_length(text.tokens);
    InfoRichMask mask(tokens.size(), 0);
    for (std::size_t i = 0; i < sentence; ++i)
        mask[i] = is_info_rich(text.tags[i]) ? 1 : 0;
    return mask;
}

std::string transcript_json(const DecodeResult& res, const SteeringConfig* cfg) {
    nlohmann::json j;
    j["tokens"] = res.tokens;
    j["text"] = res.text;
    j["steered"] = res.steered;
    j["fallback"] = res.fallback;
    j["steps"] = res.steps;
    j["duration_ns"] = res.duration_ns;
    j["phase1_layers"] = res.phase1_layers;
    if (cfg != nullptr) j["config"] = nlohmann::json::parse(cfg->to_json_text());
    return j.dump(2);
}

}  // namespace gift
