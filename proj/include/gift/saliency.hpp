#pragma once

#include <span>
#include <vector>

#include "gift/model.hpp"
#include "gift/tensor.hpp"
#include "gift/text.hpp"

namespace gift {

enum class SaliencyMethod : std::uint8_t { Static, Shift };
enum class MapNorm : std::uint8_t { MinMax, Sum };

const char* saliency_method_name(SaliencyMethod m);
const char* map_norm_name(MapNorm n);

// One score per visual token. MinMax form feeds steering, Sum form feeds
// the box metric.
struct SaliencyMap {
    int layer = 0;
    SaliencyMethod method = SaliencyMethod::Shift;
    MapNorm norm = MapNorm::MinMax;
    std::vector<float> scores;

    bool all_zero() const;
};

struct HeadSet {
    int layer = 0;
    std::vector<int> heads;
};

struct ShiftOptions {
    double head_fraction = 0.5;
    // Eq-literal predecessor: the row just before the first query token is
    // the last visual row. Default excludes an info-rich token at query
    // position 0 instead, so every delta compares two query rows.
    bool literal_predecessor = false;
    float clip_k = 3.0f;
};

// ceil(heads * fraction), clamped to [1, heads].
int top_fraction_count(int heads, double fraction);

// Heads ranked by cumulative attention from all query rows to visual
// tokens; top fraction kept, ties toward the lower head index.
HeadSet select_heads_static(const AttentionCapture& attn, int layer, double head_fraction = 0.5);

// Mean attention to each visual token over the selected heads and all
// query rows, before any normalization.
std::vector<float> static_scores_raw(const AttentionCapture& attn, int layer, const HeadSet& heads);

SaliencyMap static_saliency(const AttentionCapture& attn, int layer, double head_fraction = 0.5,
                            MapNorm norm = MapNorm::MinMax);

// Absolute row indices eligible for shift tracking under the mask and
// predecessor rule. Throws "no info-rich tokens" via callers when empty.
std::vector<int> eligible_shift_rows(const AttentionCapture& attn, const InfoRichMask& query_mask,
                                     bool literal_predecessor);

// Heads ranked by cumulative positive attention deltas to visual tokens
// across eligible info-rich query rows.
HeadSet select_heads_shift(const AttentionCapture& attn, int layer, const InfoRichMask& query_mask,
                           const ShiftOptions& opt = {});

// Mean positive shift per visual token over selected heads and eligible
// rows, before clipping and normalization.
std::vector<float> shift_scores_raw(const AttentionCapture& attn, int layer, const HeadSet& heads,
                                    const InfoRichMask& query_mask, bool literal_predecessor = false);

// MinMax form: clip at clip_k sigma, then min-max (the steering map).
// Sum form: sum-normalize the raw shift scores (the metric map; throws
// "degenerate saliency" when the raw map is all-zero).
SaliencyMap shift_saliency(const AttentionCapture& attn, int layer, const InfoRichMask& query_mask,
                           const ShiftOptions& opt = {}, MapNorm norm = MapNorm::MinMax);

// Per layer: sum of the raw shift map over visual tokens, averaged across
// the calibration batch; argmax layer, ties toward the lower layer.
int choose_saliency_layer(std::span<const AttentionCapture> batch,
                          std::span<const InfoRichMask> masks, const ShiftOptions& opt = {});

// Fraction of a sum-normalized map inside the box, divided by the box's
// share of the grid. Uniform map -> 1.0 for any box.
double normalized_saliency_score(const SaliencyMap& map, std::span<const int> box_cells,
                                 int grid_cells);

}  // namespace gift
