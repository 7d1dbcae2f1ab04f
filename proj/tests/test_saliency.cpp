#include <cmath>

#include "doctest.h"
#include "gift/saliency.hpp"
#include "oracles.hpp"

using namespace gift;

namespace {

// capture with uniform causal rows; query-row visual weights set per test
AttentionCapture make_capture(int layers, int heads, int sys, int vis, int qlen, int gen = 0) {
    AttentionCapture cap;
    cap.layers = layers;
    cap.heads = heads;
    cap.layout.system = {0, sys};
    cap.layout.visual = {sys, vis};
    cap.layout.query = {sys + vis, qlen};
    cap.layout.generated = {sys + vis + qlen, gen};
    cap.tokens = cap.layout.total();
    cap.allocate();
    for (int l = 0; l < layers; ++l)
        for (int h = 0; h < heads; ++h)
            for (int i = 0; i < cap.tokens; ++i)
                for (int j = 0; j <= i; ++j)
                    cap.at(l, h, i, j) = static_cast<float>(1.0 / (i + 1));
    return cap;
}

// overwrite one query row: given visual weights, remainder parked on col 0
void set_query_row(AttentionCapture& cap, int l, int h, int qi,
                   const std::vector<float>& visual_weights) {
    const int i = cap.layout.query.start + qi;
    double used = 0.0;
    for (int j = 0; j < cap.tokens; ++j) cap.at(l, h, i, j) = 0.0f;
    for (int v = 0; v < static_cast<int>(visual_weights.size()); ++v) {
        cap.at(l, h, i, cap.layout.visual.start + v) = visual_weights[static_cast<std::size_t>(v)];
        used += visual_weights[static_cast<std::size_t>(v)];
    }
    cap.at(l, h, i, 0) = static_cast<float>(1.0 - used);
}

}  // namespace

TEST_CASE("select_heads_static orders by visual mass with low-index ties") {
    // two heads: head0 carries 0.9 visual mass, head1 0.1
    AttentionCapture cap = make_capture(1, 2, 1, 3, 1);
    set_query_row(cap, 0, 0, 0, {0.3f, 0.3f, 0.3f});
    set_query_row(cap, 0, 1, 0, {0.05f, 0.03f, 0.02f});
    CHECK(select_heads_static(cap, 0).heads == std::vector<int>{0});

    // four equal heads: tie-break keeps the lower indices
    AttentionCapture tie = make_capture(1, 4, 1, 3, 1);
    for (int h = 0; h < 4; ++h) set_query_row(tie, 0, h, 0, {0.2f, 0.2f, 0.2f});
    CHECK(select_heads_static(tie, 0).heads == std::vector<int>{0, 1});

    AttentionCapture bad = make_capture(1, 2, 1, 3, 1);
    CHECK_THROWS(select_heads_static(bad, 5));
}

TEST_CASE("static_saliency worked example") {
    AttentionCapture cap = make_capture(1, 1, 1, 3, 1);
    set_query_row(cap, 0, 0, 0, {0.2f, 0.5f, 0.3f});
    const SaliencyMap map = static_saliency(cap, 0);
    CHECK(map.method == SaliencyMethod::Static);
    CHECK(map.norm == MapNorm::MinMax);
    CHECK(map.scores[0] == doctest::Approx(0.0));
    CHECK(map.scores[1] == doctest::Approx(1.0));
    CHECK(map.scores[2] == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("static_saliency averaging over identical rows is idempotent") {
    AttentionCapture one = make_capture(1, 1, 1, 3, 1);
    set_query_row(one, 0, 0, 0, {0.2f, 0.5f, 0.3f});
    AttentionCapture many = make_capture(1, 1, 1, 3, 4);
    for (int qi = 0; qi < 4; ++qi) set_query_row(many, 0, 0, qi, {0.2f, 0.5f, 0.3f});

    const auto a = static_saliency(one, 0).scores;
    const auto b = static_saliency(many, 0).scores;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6);
}

TEST_CASE("shift head selection follows positive deltas only") {
    // head0 flat (zero delta), head1 rises on visual token 0
    AttentionCapture cap = make_capture(1, 2, 1, 3, 2);
    set_query_row(cap, 0, 0, 0, {0.3f, 0.3f, 0.3f});
    set_query_row(cap, 0, 0, 1, {0.3f, 0.3f, 0.3f});
    set_query_row(cap, 0, 1, 0, {0.1f, 0.3f, 0.3f});
    set_query_row(cap, 0, 1, 1, {0.5f, 0.3f, 0.3f});
    const InfoRichMask mask{0, 1};
    CHECK(select_heads_shift(cap, 0, mask).heads == std::vector<int>{1});

    // all deltas non-positive: scores all zero, tie-break keeps head 0
    AttentionCapture flat = make_capture(1, 2, 1, 3, 2);
    for (int h = 0; h < 2; ++h) {
        set_query_row(flat, 0, h, 0, {0.5f, 0.3f, 0.1f});
        set_query_row(flat, 0, h, 1, {0.4f, 0.2f, 0.1f});
    }
    const HeadSet hs = select_heads_shift(flat, 0, mask);
    CHECK(hs.heads == std::vector<int>{0});
    const SaliencyMap map = shift_saliency(flat, 0, mask);
    CHECK(map.all_zero());  // degenerate map normalizes to zeros
}

TEST_CASE("shift_saliency worked example") {
    AttentionCapture cap = make_capture(1, 1, 1, 3, 2);
    set_query_row(cap, 0, 0, 0, {0.2f, 0.5f, 0.3f});
    set_query_row(cap, 0, 0, 1, {0.6f, 0.1f, 0.3f});
    const InfoRichMask mask{0, 1};  // only the second token tracked
    const SaliencyMap map = shift_saliency(cap, 0, mask);
    CHECK(map.method == SaliencyMethod::Shift);
    CHECK(map.scores[0] == doctest::Approx(1.0));
    CHECK(map.scores[1] == doctest::Approx(0.0));
    CHECK(map.scores[2] == doctest::Approx(0.0));
}

TEST_CASE("constant query rows give an all-zero shift map") {
    AttentionCapture cap = make_capture(2, 3, 2, 4, 5);
    const InfoRichMask mask{0, 1, 1, 0, 1};
    const SaliencyMap map = shift_saliency(cap, 1, mask);
    CHECK(map.all_zero());
    // sum form is degenerate
    CHECK_THROWS_WITH(shift_saliency(cap, 1, mask, {}, MapNorm::Sum), "degenerate saliency");
}

TEST_CASE("info-rich token at query position 0 needs the literal rule") {
    AttentionCapture cap = make_capture(1, 1, 1, 3, 2);
    set_query_row(cap, 0, 0, 0, {0.5f, 0.2f, 0.1f});
    set_query_row(cap, 0, 0, 1, {0.5f, 0.2f, 0.1f});
    const InfoRichMask first_only{1, 0};

    CHECK_THROWS_WITH(select_heads_shift(cap, 0, first_only), "no info-rich tokens");

    ShiftOptions literal;
    literal.literal_predecessor = true;
    // predecessor is now the last visual row (uniform 1/(i+1))
    CHECK_NOTHROW(select_heads_shift(cap, 0, first_only, literal));
    const SaliencyMap map = shift_saliency(cap, 0, first_only, literal);
    CHECK(map.scores.size() == 3);
    CHECK(!map.all_zero());  // 0.5 on token 0 beats the uniform predecessor row

    CHECK_THROWS(select_heads_shift(cap, 0, InfoRichMask{0, 0}));
    CHECK_THROWS(select_heads_shift(cap, 0, InfoRichMask{1}));  // length mismatch
}

TEST_CASE("saliency matches the brute-force oracles on random captures") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        oracle::CaptureSpec spec;
        spec.layers = 3;
        spec.heads = 5;
        spec.system = 2;
        spec.visual = 9;
        spec.query = 6;
        spec.generated = 2;
        const AttentionCapture cap = oracle::random_capture(900 + seed, spec);
        const InfoRichMask mask = oracle::random_mask(37 + seed, spec.query);

        for (int layer = 0; layer < spec.layers; ++layer) {
            const HeadSet sh = select_heads_static(cap, layer);
            CHECK(sh.heads == oracle::select_heads_static(cap, layer, 0.5));
            const auto sraw = static_scores_raw(cap, layer, sh);
            const auto sref = oracle::static_map_raw(cap, layer, sh.heads);
            for (std::size_t i = 0; i < sraw.size(); ++i)
                CHECK(std::abs(sraw[i] - sref[i]) <= 1e-6);

            const HeadSet hh = select_heads_shift(cap, layer, mask);
            CHECK(hh.heads == oracle::select_heads_shift(cap, layer, mask, 0.5, false));
            const auto hraw = shift_scores_raw(cap, layer, hh, mask);
            const auto href = oracle::shift_map_raw(cap, layer, hh.heads, mask, false);
            for (std::size_t i = 0; i < hraw.size(); ++i)
                CHECK(std::abs(hraw[i] - href[i]) <= 1e-6);
        }
    }
}

TEST_CASE("permuting non-selected heads never changes the map") {
    oracle::CaptureSpec spec;
    spec.layers = 1;
    spec.heads = 6;
    spec.system = 1;
    spec.visual = 8;
    spec.query = 5;
    spec.generated = 0;
    AttentionCapture cap = oracle::random_capture(55, spec);
    const InfoRichMask mask{0, 1, 1, 1, 0};

    const HeadSet hs = select_heads_shift(cap, 0, mask);
    const auto before = shift_saliency(cap, 0, mask).scores;

    // swap the full rows of two heads outside the selected set
    std::vector<int> outside;
    for (int h = 0; h < spec.heads; ++h)
        if (std::find(hs.heads.begin(), hs.heads.end(), h) == hs.heads.end()) outside.push_back(h);
    REQUIRE(outside.size() >= 2);
    for (int i = 0; i < cap.tokens; ++i)
        for (int j = 0; j < cap.tokens; ++j)
            std::swap(cap.at(0, outside[0], i, j), cap.at(0, outside[1], i, j));

    const auto after = shift_saliency(cap, 0, mask).scores;
    CHECK(before == after);
}

TEST_CASE("choose_saliency_layer picks the argmax with low-layer ties") {
    // layer 1 carries the largest positive shifts; layer 2 smaller; layer 0 none
    AttentionCapture cap = make_capture(3, 1, 1, 3, 2);
    const InfoRichMask mask{0, 1};
    set_query_row(cap, 0, 0, 0, {0.2f, 0.2f, 0.2f});
    set_query_row(cap, 0, 0, 1, {0.2f, 0.2f, 0.2f});  // zero shift
    set_query_row(cap, 1, 0, 0, {0.1f, 0.1f, 0.1f});
    set_query_row(cap, 1, 0, 1, {0.4f, 0.4f, 0.1f});  // sum 0.6
    set_query_row(cap, 2, 0, 0, {0.1f, 0.1f, 0.1f});
    set_query_row(cap, 2, 0, 1, {0.3f, 0.1f, 0.1f});  // sum 0.2
    const std::vector<AttentionCapture> batch{cap};
    const std::vector<InfoRichMask> masks{mask};
    CHECK(choose_saliency_layer(batch, masks) == 1);

    // identical layers tie toward the lower index
    AttentionCapture tie = make_capture(2, 1, 1, 3, 2);
    for (int l = 0; l < 2; ++l) {
        set_query_row(tie, l, 0, 0, {0.1f, 0.1f, 0.1f});
        set_query_row(tie, l, 0, 1, {0.3f, 0.3f, 0.1f});
    }
    const std::vector<AttentionCapture> tb{tie};
    CHECK(choose_saliency_layer(tb, masks) == 0);

    CHECK_THROWS(choose_saliency_layer(std::vector<AttentionCapture>{},
                                       std::vector<InfoRichMask>{}));
}

TEST_CASE("normalized_saliency_score") {
    SaliencyMap uniform;
    uniform.norm = MapNorm::Sum;
    uniform.scores.assign(64, 1.0f / 64.0f);
    const std::vector<int> some_box{0, 1, 8, 9};
    CHECK(normalized_saliency_score(uniform, some_box, 64) == doctest::Approx(1.0).epsilon(1e-6));

    // all mass inside a quarter of the grid scores 4
    SaliencyMap concentrated;
    concentrated.norm = MapNorm::Sum;
    concentrated.scores.assign(64, 0.0f);
    std::vector<int> quarter;
    for (int i = 0; i < 16; ++i) {
        quarter.push_back(i);
        concentrated.scores[static_cast<std::size_t>(i)] = 1.0f / 16.0f;
    }
    CHECK(normalized_saliency_score(concentrated, quarter, 64) ==
          doctest::Approx(4.0).epsilon(1e-6));

    CHECK_THROWS(normalized_saliency_score(uniform, {}, 64));
    CHECK_THROWS(normalized_saliency_score(uniform, {64}, 64));
    SaliencyMap wrong = uniform;
    wrong.norm = MapNorm::MinMax;
    CHECK_THROWS(normalized_saliency_score(wrong, some_box, 64));
}

TEST_CASE("top_fraction_count rounding") {
    CHECK(top_fraction_count(8, 0.5) == 4);
    CHECK(top_fraction_count(7, 0.5) == 4);  // ceil on odd head counts
    CHECK(top_fraction_count(1, 0.5) == 1);
    CHECK(top_fraction_count(10, 0.3) == 3);
    CHECK(top_fraction_count(8, 1.0) == 8);
    CHECK_THROWS(top_fraction_count(8, 0.0));
    CHECK_THROWS(top_fraction_count(8, 1.5));
}
