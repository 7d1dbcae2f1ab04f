#include <cmath>

#include "doctest.h"
#include "gift/decoder.hpp"
#include "gift/steering.hpp"
#include "helpers.hpp"
#include "json.hpp"

using namespace gift;

namespace {

SteeringConfig tiny_steering(SteerMode mode = SteerMode::Gift) {
    SteeringConfig cfg;
    cfg.mode = mode;
    cfg.saliency_layer = 1;
    cfg.fusion_layers = {2, 3};
    return cfg;
}

double segment_sum(const std::vector<float>& row, Span seg) {
    double acc = 0.0;
    const int hi = std::min<int>(seg.end(), static_cast<int>(row.size()));
    for (int j = seg.start; j < hi; ++j) acc += row[static_cast<std::size_t>(j)];
    return acc;
}

}  // namespace

TEST_CASE("greedy decode basics") {
    const Model m = build_model(testutil::tiny_config(100));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());

    DecodeOptions zero;
    zero.max_new_tokens = 0;
    CHECK(greedy_decode(m, in, zero).tokens.empty());

    DecodeOptions opt;
    opt.max_new_tokens = 6;
    opt.vocab = &testutil::vocab();
    const DecodeResult a = greedy_decode(m, in, opt);
    const DecodeResult b = greedy_decode(m, in, opt);
    CHECK(a.tokens == b.tokens);  // deterministic
    CHECK(a.steps == static_cast<int>(a.tokens.size()));
    CHECK(static_cast<int>(a.tokens.size()) <= 6);
    CHECK(!a.steered);
    CHECK(a.phase1_layers == 0);
    if (!a.tokens.empty()) CHECK(!a.text.empty());
}

TEST_CASE("argmax breaks ties toward the lower token id") {
    CHECK(argmax_lowest(std::vector<float>{1.0f, 3.0f, 3.0f, 2.0f}) == 1);
    CHECK(argmax_lowest(std::vector<float>{5.0f, 5.0f}) == 0);

    // fabricate an exact logit tie by duplicating the winning lm_head row
    Model m = build_model(testutil::tiny_config(101));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    DecodeSession probe(m, in);
    const int t = argmax_lowest(probe.step());

    const int u = t + 1 < m.cfg.vocab_size ? t + 1 : t - 1;
    const auto d = static_cast<std::size_t>(m.cfg.dim);
    for (std::size_t i = 0; i < d; ++i)
        m.lm_head[static_cast<std::size_t>(u) * d + i] = m.lm_head[static_cast<std::size_t>(t) * d + i];

    DecodeSession tied(m, in);
    const auto logits = tied.step();
    CHECK(logits[static_cast<std::size_t>(t)] == logits[static_cast<std::size_t>(u)]);
    CHECK(argmax_lowest(logits) == std::min(t, u));
}

TEST_CASE("greedy stops at the end token") {
    Model m = build_model(testutil::tiny_config(102));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    DecodeSession probe(m, in);
    const int first = argmax_lowest(probe.step());

    DecodeOptions opt;
    opt.max_new_tokens = 8;
    opt.eos_id = first;  // treat whatever comes first as the terminator
    const DecodeResult r = greedy_decode(m, in, opt);
    CHECK(r.tokens.empty());

    opt.stop_at_eos = false;
    const DecodeResult keep = greedy_decode(m, in, opt);
    CHECK(keep.tokens.size() == 8);
}

TEST_CASE("gift_decode off mode is bitwise greedy") {
    const Model m = build_model(testutil::tiny_config(103));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    DecodeOptions opt;
    opt.max_new_tokens = 8;

    const DecodeResult greedy = greedy_decode(m, in, opt);
    const auto [off, map] = gift_decode(m, in, tiny_steering(SteerMode::Off), opt);
    CHECK(off.tokens == greedy.tokens);
    CHECK(!off.steered);
    CHECK(map.scores.empty());
}

TEST_CASE("gift_decode with alpha 0 reproduces greedy token sequences") {
    const Model m = build_model(testutil::tiny_config(104));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    DecodeOptions opt;
    opt.max_new_tokens = 8;

    SteeringConfig cfg = tiny_steering();
    cfg.alpha = 0.0;
    cfg.beta = 1.0;
    cfg.ratio_kind = RatioKind::Mass;

    const DecodeResult greedy = greedy_decode(m, in, opt);
    const auto [steered, map] = gift_decode(m, in, cfg, opt);
    CHECK(steered.steered);
    CHECK(steered.tokens == greedy.tokens);
    CHECK(map.norm == MapNorm::MinMax);
    CHECK(static_cast<int>(map.scores.size()) == m.cfg.grid_cells());
}

TEST_CASE("gift_decode falls back when the query has no eligible info-rich token") {
    const Model m = build_model(testutil::tiny_config(105));
    DecodeOptions opt;
    opt.max_new_tokens = 5;

    // nothing info-rich at all
    const PromptInputs bland = testutil::make_prompt(testutil::tiny_scene(), "the of and in .");
    const DecodeResult greedy = greedy_decode(m, bland, opt);
    const auto [res, map] = gift_decode(m, bland, tiny_steering(), opt);
    CHECK(res.fallback);
    CHECK(!res.steered);
    CHECK(res.tokens == greedy.tokens);
    CHECK(res.phase1_layers == 0);

    // info-rich only at query position 0: excluded under the default rule
    const PromptInputs only_first = testutil::make_prompt(testutil::tiny_scene(), "describe the of in .");
    const auto [res2, map2] = gift_decode(m, only_first, tiny_steering(), opt);
    CHECK(res2.fallback);

    // the literal predecessor rule makes the same query eligible
    SteeringConfig literal = tiny_steering();
    literal.literal_predecessor = true;
    const auto [res3, map3] = gift_decode(m, only_first, literal, opt);
    CHECK(!res3.fallback);
    CHECK(res3.steered);
}

TEST_CASE("phase-1 prefill stops at the saliency layer") {
    const Model m = build_model(testutil::tiny_config(106));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    DecodeOptions opt;
    opt.max_new_tokens = 2;

    SteeringConfig cfg = tiny_steering();
    cfg.saliency_layer = 1;
    const auto [res, map] = gift_decode(m, in, cfg, opt);
    CHECK(res.phase1_layers == 2);  // layers 0..1
    CHECK(res.phase1_layers < m.cfg.layers);
    CHECK(map.layer == 1);
}

TEST_CASE("steering with alpha 5 lifts attention mass on high-saliency cells") {
    const Model m = build_model(testutil::tiny_config(107));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    SteeringConfig cfg = tiny_steering();
    cfg.alpha = 5.0;

    DecodeOptions opt;
    opt.max_new_tokens = 6;
    opt.stop_at_eos = false;
    opt.capture_layers = cfg.fusion_layers;

    const DecodeResult plain = greedy_decode(m, in, opt);
    const auto [steered, map] = gift_decode(m, in, cfg, opt);
    REQUIRE(steered.steered);
    REQUIRE(!map.scores.empty());

    // "planted" cells: the top half of the saliency map
    std::vector<float> sorted = map.scores;
    std::sort(sorted.begin(), sorted.end());
    const float cut = sorted[sorted.size() / 2];
    std::vector<int> hot;
    for (int c = 0; c < static_cast<int>(map.scores.size()); ++c)
        if (map.scores[static_cast<std::size_t>(c)] > cut) hot.push_back(c);
    REQUIRE(!hot.empty());

    auto hot_mass = [&](const SteppedRows& snap, bool post) {
        double acc = 0.0;
        const HeadRows& rows = post ? snap.post : snap.pre;
        for (const auto& row : rows)
            for (int c : hot)
                acc += row[static_cast<std::size_t>(in.system.size()) + static_cast<std::size_t>(c)];
        return acc;
    };

    REQUIRE(plain.row_snapshots.size() == steered.row_snapshots.size());
    for (std::size_t s = 0; s < steered.row_snapshots.size(); ++s) {
        const auto& unhooked = plain.row_snapshots[s];
        const auto& hooked = steered.row_snapshots[s];
        CHECK(unhooked.layer == hooked.layer);
        CHECK(hot_mass(hooked, true) > hot_mass(unhooked, true));
    }
}

TEST_CASE("cal_v conserves steered visual mass per step") {
    const Model m = build_model(testutil::tiny_config(108));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    SteeringConfig cfg = tiny_steering(SteerMode::CalV);
    cfg.alpha = 4.0;

    DecodeOptions opt;
    opt.max_new_tokens = 5;
    opt.stop_at_eos = false;
    opt.capture_layers = cfg.fusion_layers;

    const auto [res, map] = gift_decode(m, in, cfg, opt);
    REQUIRE(res.steered);
    REQUIRE(!res.row_snapshots.empty());

    const Span visual{static_cast<int>(in.system.size()), m.cfg.grid_cells()};
    for (const auto& snap : res.row_snapshots) {
        const auto h_ov = rank_heads_by_segment_mass(snap.pre, visual, cfg.head_fraction);
        double pre_mass = 0.0, post_mass = 0.0;
        for (int h : h_ov) {
            pre_mass += segment_sum(snap.pre[static_cast<std::size_t>(h)], visual);
            post_mass += segment_sum(snap.post[static_cast<std::size_t>(h)], visual);
        }
        CHECK(std::abs(pre_mass - post_mass) <= 1e-6);
    }
}

TEST_CASE("output info-rich mask truncates at the sentence end") {
    const Vocabulary& v = testutil::vocab();
    const std::vector<int> toks{v.id_of("red"), v.id_of("the"), v.id_of("."), v.id_of("circle")};
    const InfoRichMask mask = output_info_rich_mask(toks, v, testutil::lexicon());
    CHECK(mask == InfoRichMask{1, 0, 0, 0});  // nothing counted past the period
}

TEST_CASE("decode_with_output_capture covers every generated row") {
    const Model m = build_model(testutil::tiny_config(109));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    DecodeOptions opt;
    opt.max_new_tokens = 4;
    opt.stop_at_eos = false;

    const OutputCaptureResult out = decode_with_output_capture(m, in, opt);
    CHECK(out.result.tokens.size() == 4);
    CHECK(out.attn.layout.generated.len == 4);
    CHECK(out.attn.layers == m.cfg.layers);

    const Span gen = out.attn.layout.generated;
    for (int l = 0; l < out.attn.layers; ++l) {
        for (int h = 0; h < out.attn.heads; ++h) {
            for (int g = 0; g < gen.len; ++g) {
                const int i = gen.start + g;
                double sum = 0.0;
                for (int j = 0; j < out.attn.tokens; ++j) {
                    if (j > i) CHECK(out.attn.at(l, h, i, j) == 0.0f);
                    sum += out.attn.at(l, h, i, j);
                }
                CHECK(std::abs(sum - 1.0) < 1e-4);  // the row was really captured
            }
        }
    }
}

TEST_CASE("transcript json carries the run and config") {
    const Model m = build_model(testutil::tiny_config(110));
    const PromptInputs in = testutil::make_prompt(testutil::tiny_scene());
    DecodeOptions opt;
    opt.max_new_tokens = 3;
    opt.vocab = &testutil::vocab();

    SteeringConfig cfg = tiny_steering();
    const auto [res, map] = gift_decode(m, in, cfg, opt);
    const nlohmann::json j = nlohmann::json::parse(transcript_json(res, &cfg));
    CHECK(j.contains("tokens"));
    CHECK(j.contains("text"));
    CHECK(j["steered"].is_boolean());
    CHECK(j["fallback"].is_boolean());
    CHECK(j["duration_ns"].is_number());
    CHECK(j["config"]["mode"] == "gift");
    CHECK(j["tokens"].size() == res.tokens.size());
}
