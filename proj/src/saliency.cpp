#include "gift/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gift {

const char* saliency_method_name(SaliencyMethod m) {
    return m == SaliencyMethod::Static ? "static" : "shift";
}

const char* map_norm_name(MapNorm n) {
    return n == MapNorm::MinMax ? "minmax" : "sum";
}

bool SaliencyMap::all_zero() const {
    return std::all_of(scores.begin(), scores.end(), [](float x) { return x == 0.0f; });
}

int top_fraction_count(int heads, double fraction) {
    if (heads <= 0) throw std::invalid_argument("top_fraction_count: no heads");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("top_fraction_count: fraction must be in (0,1]");
    const int k = static_cast<int>(std::ceil(static_cast<double>(heads) * fraction - 1e-9));
    return std::clamp(k, 1, heads);
}

namespace {

void check_layer(const AttentionCapture& attn, int layer) {
    if (layer < 0 || layer >= attn.layers)
        throw std::invalid_argument("saliency: layer not captured");
}

// Descending by score, ties keep the lower head index.
std::vector<int> top_heads(const std::vector<double>& score, int keep) {
    std::vector<int> order(score.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(keep));
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

HeadSet select_heads_static(const AttentionCapture& attn, int layer, double head_fraction) {
    check_layer(attn, layer);
    if (attn.layout.query.len <= 0) throw std::runtime_error("empty query span");

    std::vector<double> mass(static_cast<std::size_t>(attn.heads), 0.0);
    const Span q = attn.layout.query;
    const Span v = attn.layout.visual;
    for (int h = 0; h < attn.heads; ++h) {
        double acc = 0.0;
        for (int i = q.start; i < q.end(); ++i)
            for (int j = v.start; j < v.end(); ++j) acc += attn.at(layer, h, i, j);
        mass[static_cast<std::size_t>(h)] = acc;
    }
    HeadSet hs;
    hs.layer = layer;
    hs.heads = top_heads(mass, top_fraction_count(attn.heads, head_fraction));
    return hs;
}

std::vector<float> static_scores_raw(const AttentionCapture& attn, int layer, const HeadSet& heads) {
    check_layer(attn, layer);
    const Span q = attn.layout.query;
    const Span v = attn.layout.visual;
    const double denom = static_cast<double>(heads.heads.size()) * static_cast<double>(q.len);
    std::vector<float> out(static_cast<std::size_t>(v.len), 0.0f);
    for (int j = 0; j < v.len; ++j) {
        double acc = 0.0;
        for (int h : heads.heads)
            for (int i = q.start; i < q.end(); ++i) acc += attn.at(layer, h, i, v.start + j);
        out[static_cast<std::size_t>(j)] = static_cast<float>(acc / denom);
    }
    return out;
}

SaliencyMap static_saliency(const AttentionCapture& attn, int layer, double head_fraction,
                            MapNorm norm) {
    const HeadSet hs = select_heads_static(attn, layer, head_fraction);
    const std::vector<float> raw = static_scores_raw(attn, layer, hs);
    SaliencyMap map;
    map.layer = layer;
    map.method = SaliencyMethod::Static;
    map.norm = norm;
    map.scores = norm == MapNorm::MinMax ? minmax_normalize(raw) : sum_normalize(raw);
    return map;
}

std::vector<int> eligible_shift_rows(const AttentionCapture& attn, const InfoRichMask& query_mask,
                                     bool literal_predecessor) {
    const Span q = attn.layout.query;
    if (static_cast<int>(query_mask.size()) != q.len)
        throw std::invalid_argument("eligible_shift_rows: mask length mismatch");
    std::vector<int> rows;
    for (int qi = 0; qi < q.len; ++qi) {
        if (!query_mask[static_cast<std::size_t>(qi)]) continue;
        const int i = q.start + qi;
        if (qi == 0 && !literal_predecessor) continue;  // no query predecessor
        if (i == 0) continue;                           // no row at all before this one
        rows.push_back(i);
    }
    return rows;
}

namespace {

std::vector<int> eligible_or_throw(const AttentionCapture& attn, const InfoRichMask& mask,
                                   bool literal_predecessor) {
    auto rows = eligible_shift_rows(attn, mask, literal_predecessor);
    if (rows.empty()) throw std::runtime_error("no info-rich tokens");
    return rows;
}

}  // namespace

HeadSet select_heads_shift(const AttentionCapture& attn, int layer, const InfoRichMask& query_mask,
                           const ShiftOptions& opt) {
    check_layer(attn, layer);
    const auto rows = eligible_or_throw(attn, query_mask, opt.literal_predecessor);
    const Span v = attn.layout.visual;

    std::vector<double> gain(static_cast<std::size_t>(attn.heads), 0.0);
    for (int h = 0; h < attn.heads; ++h) {
        double acc = 0.0;
        for (int i : rows) {
            for (int j = v.start; j < v.end(); ++j) {
                const double d = static_cast<double>(attn.at(layer, h, i, j)) -
                                 static_cast<double>(attn.at(layer, h, i - 1, j));
                if (d > 0.0) acc += d;
            }
        }
        gain[static_cast<std::size_t>(h)] = acc;
    }
    HeadSet hs;
    hs.layer = layer;
    hs.heads = top_heads(gain, top_fraction_count(attn.heads, opt.head_fraction));
    return hs;
}

std::vector<float> shift_scores_raw(const AttentionCapture& attn, int layer, const HeadSet& heads,
                                    const InfoRichMask& query_mask, bool literal_predecessor) {
    check_layer(attn, layer);
    const auto rows = eligible_or_throw(attn, query_mask, literal_predecessor);
    const Span v = attn.layout.visual;
    const double denom = static_cast<double>(heads.heads.size()) * static_cast<double>(rows.size());

    std::vector<float> out(static_cast<std::size_t>(v.len), 0.0f);
    for (int j = 0; j < v.len; ++j) {
        double acc = 0.0;
        for (int h : heads.heads) {
            for (int i : rows) {
                const double d = static_cast<double>(attn.at(layer, h, i, v.start + j)) -
                                 static_cast<double>(attn.at(layer, h, i - 1, v.start + j));
                if (d > 0.0) acc += d;
            }
        }
        out[static_cast<std::size_t>(j)] = static_cast<float>(acc / denom);
    }
    return out;
}

SaliencyMap shift_saliency(const AttentionCapture& attn, int layer, const InfoRichMask& query_mask,
                           const ShiftOptions& opt, MapNorm norm) {
    const HeadSet hs = select_heads_shift(attn, layer, query_mask, opt);
    const std::vector<float> raw =
        shift_scores_raw(attn, layer, hs, query_mask, opt.literal_predecessor);
    SaliencyMap map;
    map.layer = layer;
    map.method = SaliencyMethod::Shift;
    map.norm = norm;
    if (norm == MapNorm::MinMax) {
        map.scores = minmax_normalize(clip_sigma(raw, opt.clip_k));
    } else {
        map.scores = sum_normalize(raw);  // metric form, no clipping
    }
    return map;
}

int choose_saliency_layer(std::span<const AttentionCapture> batch,
                          std::span<const InfoRichMask> masks, const ShiftOptions& opt) {
    if (batch.empty()) throw std::invalid_argument("choose_saliency_layer: empty batch");
    if (masks.size() != batch.size())
        throw std::invalid_argument("choose_saliency_layer: batch/mask size mismatch");
    const int layers = batch[0].layers;
    for (const auto& c : batch)
        if (c.layers != layers)
            throw std::invalid_argument("choose_saliency_layer: inconsistent layer counts");

    std::vector<double> total(static_cast<std::size_t>(layers), 0.0);
    for (std::size_t e = 0; e < batch.size(); ++e) {
        for (int l = 0; l < layers; ++l) {
            const HeadSet hs = select_heads_shift(batch[e], l, masks[e], opt);
            const auto raw = shift_scores_raw(batch[e], l, hs, masks[e], opt.literal_predecessor);
            total[static_cast<std::size_t>(l)] += sum64(raw);
        }
    }
    int best = 0;
    for (int l = 1; l < layers; ++l) {
        if (total[static_cast<std::size_t>(l)] > total[static_cast<std::size_t>(best)]) best = l;
    }
    return best;
}

double normalized_saliency_score(const SaliencyMap& map, std::span<const int> box_cells,
                                 int grid_cells) {
    if (map.norm != MapNorm::Sum)
        throw std::invalid_argument("normalized_saliency_score: map must be sum-normalized");
    if (box_cells.empty()) throw std::invalid_argument("normalized_saliency_score: empty box");
    if (static_cast<int>(map.scores.size()) != grid_cells)
        throw std::invalid_argument("normalized_saliency_score: map/grid size mismatch");
    double inside = 0.0;
    for (int c : box_cells) {
        if (c < 0 || c >= grid_cells)
            throw std::invalid_argument("normalized_saliency_score: box cell out of bounds");
        inside += map.scores[static_cast<std::size_t>(c)];
    }
    const double area_share = static_cast<double>(box_cells.size()) / static_cast<double>(grid_cells);
    return inside / area_share;
}

}  // namespace gift
