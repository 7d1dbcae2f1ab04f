// Test-only brute-force oracles. Straight quadruple loops and direct
// formulas, kept independent of the library implementations they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "gift/model.hpp"
#include "gift/text.hpp"

namespace oracle {

// ---- deterministic test RNG (raw draws only) ----
struct TestRng {
    std::mt19937_64 eng;
    explicit TestRng(std::uint64_t seed) : eng(seed) {}
    double unit() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }  // [0,1)
    double in(double lo, double hi) { return lo + unit() * (hi - lo); }
    int int_in(int lo, int hi) {
        return lo + static_cast<int>(eng() % static_cast<std::uint64_t>(hi - lo + 1));
    }
};

// ---- independent scalar kernels ----

inline std::vector<float> softmax_bias(const std::vector<float>& logits,
                                       const std::vector<float>& bias,
                                       const std::vector<std::uint8_t>& masked) {
    long double big = -1e30L;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (masked[i]) continue;
        const long double z = static_cast<long double>(logits[i]) + static_cast<long double>(bias[i]);
        if (z > big) big = z;
    }
    long double total = 0.0L;
    std::vector<long double> e(logits.size(), 0.0L);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (masked[i]) continue;
        e[i] = std::exp(static_cast<long double>(logits[i]) + static_cast<long double>(bias[i]) - big);
        total += e[i];
    }
    std::vector<float> out(logits.size(), 0.0f);
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (!masked[i]) out[i] = static_cast<float>(e[i] / total);
    return out;
}

inline std::vector<float> minmax(const std::vector<float>& v) {
    const float lo = *std::min_element(v.begin(), v.end());
    const float hi = *std::max_element(v.begin(), v.end());
    std::vector<float> out(v.size(), 0.0f);
    if (hi == lo) return out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = static_cast<float>((static_cast<double>(v[i]) - lo) /
                                    (static_cast<double>(hi) - static_cast<double>(lo)));
    return out;
}

inline std::vector<float> clip_k_sigma(const std::vector<float>& v, double k) {
    double mean = 0.0;
    for (float x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (float x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    const float bound = static_cast<float>(mean + k * std::sqrt(var));
    std::vector<float> out(v.begin(), v.end());
    for (float& x : out) x = std::min(x, bound);
    return out;
}

// ---- capture-level oracles (quadruple loops) ----

// ceil(h * fraction) the slow way: smallest k with k >= h * fraction.
inline int top_count(int heads, double fraction) {
    int k = 1;
    while (static_cast<double>(k) < static_cast<double>(heads) * fraction - 1e-9) ++k;
    return std::min(k, heads);
}

// full sort with explicit tie handling toward lower index
inline std::vector<int> rank_desc(const std::vector<double>& score, int keep) {
    std::vector<int> idx(score.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (score[static_cast<std::size_t>(a)] != score[static_cast<std::size_t>(b)])
            return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(keep));
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::vector<int> select_heads_static(const gift::AttentionCapture& a, int layer,
                                            double fraction) {
    std::vector<double> mass(static_cast<std::size_t>(a.heads), 0.0);
    for (int h = 0; h < a.heads; ++h)
        for (int i = a.layout.query.start; i < a.layout.query.end(); ++i)
            for (int j = a.layout.visual.start; j < a.layout.visual.end(); ++j)
                mass[static_cast<std::size_t>(h)] += a.at(layer, h, i, j);
    return rank_desc(mass, top_count(a.heads, fraction));
}

inline std::vector<float> static_map_raw(const gift::AttentionCapture& a, int layer,
                                         const std::vector<int>& heads) {
    std::vector<float> out(static_cast<std::size_t>(a.layout.visual.len), 0.0f);
    for (int j = 0; j < a.layout.visual.len; ++j) {
        double acc = 0.0;
        int terms = 0;
        for (int h : heads) {
            for (int i = a.layout.query.start; i < a.layout.query.end(); ++i) {
                acc += a.at(layer, h, i, a.layout.visual.start + j);
                ++terms;
            }
        }
        out[static_cast<std::size_t>(j)] = static_cast<float>(acc / terms);
    }
    return out;
}

inline std::vector<int> eligible_rows(const gift::AttentionCapture& a,
                                      const gift::InfoRichMask& mask, bool literal) {
    std::vector<int> rows;
    for (int qi = 0; qi < a.layout.query.len; ++qi) {
        if (!mask[static_cast<std::size_t>(qi)]) continue;
        if (qi == 0 && !literal) continue;
        const int i = a.layout.query.start + qi;
        if (i == 0) continue;
        rows.push_back(i);
    }
    return rows;
}

inline std::vector<int> select_heads_shift(const gift::AttentionCapture& a, int layer,
                                           const gift::InfoRichMask& mask, double fraction,
                                           bool literal) {
    const auto rows = eligible_rows(a, mask, literal);
    std::vector<double> gain(static_cast<std::size_t>(a.heads), 0.0);
    for (int h = 0; h < a.heads; ++h)
        for (int i : rows)
            for (int j = a.layout.visual.start; j < a.layout.visual.end(); ++j) {
                const double d = static_cast<double>(a.at(layer, h, i, j)) -
                                 static_cast<double>(a.at(layer, h, i - 1, j));
                if (d > 0.0) gain[static_cast<std::size_t>(h)] += d;
            }
    return rank_desc(gain, top_count(a.heads, fraction));
}

inline std::vector<float> shift_map_raw(const gift::AttentionCapture& a, int layer,
                                        const std::vector<int>& heads,
                                        const gift::InfoRichMask& mask, bool literal) {
    const auto rows = eligible_rows(a, mask, literal);
    std::vector<float> out(static_cast<std::size_t>(a.layout.visual.len), 0.0f);
    for (int j = 0; j < a.layout.visual.len; ++j) {
        double acc = 0.0;
        int terms = 0;
        for (int h : heads) {
            for (int i : rows) {
                const double d =
                    static_cast<double>(a.at(layer, h, i, a.layout.visual.start + j)) -
                    static_cast<double>(a.at(layer, h, i - 1, a.layout.visual.start + j));
                acc += d > 0.0 ? d : 0.0;
                ++terms;
            }
        }
        out[static_cast<std::size_t>(j)] = static_cast<float>(acc / terms);
    }
    return out;
}

struct FusionOracle {
    std::vector<double> r_visual, r_query;
    std::vector<std::vector<int>> heads_visual, heads_query;
};

inline FusionOracle fusion(const gift::AttentionCapture& a, const gift::InfoRichMask& out_mask,
                           double fraction) {
    std::vector<int> rows;
    for (int g = 0; g < a.layout.generated.len; ++g)
        if (out_mask[static_cast<std::size_t>(g)]) rows.push_back(a.layout.generated.start + g);

    FusionOracle fo;
    for (int l = 0; l < a.layers; ++l) {
        std::vector<double> mv(static_cast<std::size_t>(a.heads), 0.0),
            mq(static_cast<std::size_t>(a.heads), 0.0);
        for (int h = 0; h < a.heads; ++h) {
            for (int i : rows) {
                for (int j = a.layout.visual.start; j < a.layout.visual.end(); ++j)
                    mv[static_cast<std::size_t>(h)] += a.at(l, h, i, j);
                for (int j = a.layout.query.start; j < a.layout.query.end(); ++j)
                    mq[static_cast<std::size_t>(h)] += a.at(l, h, i, j);
            }
            mv[static_cast<std::size_t>(h)] /= static_cast<double>(rows.size());
            mq[static_cast<std::size_t>(h)] /= static_cast<double>(rows.size());
        }
        const int keep = top_count(a.heads, fraction);
        fo.heads_visual.push_back(rank_desc(mv, keep));
        fo.heads_query.push_back(rank_desc(mq, keep));
        double rv = 0.0, rq = 0.0;
        for (int h : fo.heads_visual.back()) rv += mv[static_cast<std::size_t>(h)];
        for (int h : fo.heads_query.back()) rq += mq[static_cast<std::size_t>(h)];
        fo.r_visual.push_back(rv / keep);
        fo.r_query.push_back(rq / keep);
    }
    return fo;
}

inline double ratio_mass(const gift::HeadRows& before, const gift::HeadRows& after,
                         const gift::SegmentLayout& lay, const std::vector<int>& heads) {
    double b = 0.0, aa = 0.0;
    for (int h : heads)
        for (int j = lay.visual.start; j < lay.visual.end(); ++j) {
            b += before[static_cast<std::size_t>(h)][static_cast<std::size_t>(j)];
            aa += after[static_cast<std::size_t>(h)][static_cast<std::size_t>(j)];
        }
    return aa / b;
}

inline double ratio_literal(const gift::HeadRows& before, const gift::HeadRows& after,
                            const gift::SegmentLayout& lay, const std::vector<int>& heads) {
    double acc = 0.0;
    for (int h : heads)
        for (int j = lay.visual.start; j < lay.visual.end(); ++j) {
            const float b = before[static_cast<std::size_t>(h)][static_cast<std::size_t>(j)];
            const float a = after[static_cast<std::size_t>(h)][static_cast<std::size_t>(j)];
            acc += b == 0.0f ? 1.0 : static_cast<double>(a) / static_cast<double>(b);
        }
    return acc;
}

// ---- randomized row-stochastic causal captures ----

struct CaptureSpec {
    int layers = 8;
    int heads = 8;
    int system = 8;
    int visual = 64;
    int query = 16;
    int generated = 8;
};

inline gift::AttentionCapture random_capture(std::uint64_t seed, const CaptureSpec& spec = {}) {
    gift::AttentionCapture cap;
    cap.layers = spec.layers;
    cap.heads = spec.heads;
    cap.layout.system = {0, spec.system};
    cap.layout.visual = {spec.system, spec.visual};
    cap.layout.query = {spec.system + spec.visual, spec.query};
    cap.layout.generated = {spec.system + spec.visual + spec.query, spec.generated};
    cap.tokens = cap.layout.total();
    cap.allocate();

    TestRng rng(seed);
    std::vector<double> row(static_cast<std::size_t>(cap.tokens));
    for (int l = 0; l < cap.layers; ++l) {
        for (int h = 0; h < cap.heads; ++h) {
            for (int i = 0; i < cap.tokens; ++i) {
                double total = 0.0;
                for (int j = 0; j <= i; ++j) {
                    row[static_cast<std::size_t>(j)] = rng.in(1e-4, 1.0);
                    total += row[static_cast<std::size_t>(j)];
                }
                for (int j = 0; j <= i; ++j)
                    cap.at(l, h, i, j) = static_cast<float>(row[static_cast<std::size_t>(j)] / total);
            }
        }
    }
    return cap;
}

inline gift::InfoRichMask random_mask(std::uint64_t seed, int len, double density = 0.5) {
    TestRng rng(seed);
    gift::InfoRichMask mask(static_cast<std::size_t>(len), 0);
    int count = 0;
    for (int i = 0; i < len; ++i) {
        if (rng.unit() < density) {
            mask[static_cast<std::size_t>(i)] = 1;
            ++count;
        }
    }
    if (count == 0 && len > 1) mask[1] = 1;  // keep one eligible row
    return mask;
}

}  // namespace oracle
