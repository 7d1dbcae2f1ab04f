#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gift/model.hpp"
#include "gift/saliency.hpp"
#include "gift/steering.hpp"
#include "gift/text.hpp"

namespace gift {

struct DecodeOptions {
    int max_new_tokens = 32;
    bool stop_at_eos = true;
    int eos_id = 1;
    const Vocabulary* vocab = nullptr;  // optional, for rendering text
    // When non-empty, per-step pre/post attention rows are recorded at
    // these layers.
    std::vector<int> capture_layers;
};

// One recorded (step, layer) attention snapshot.
struct SteppedRows {
    int step = 0;
    int layer = 0;
    int position = 0;
    HeadRows pre;   // before the steering hook
    HeadRows post;  // after; identical to pre when no hook edited the row
};

struct DecodeResult {
    std::vector<int> tokens;
    std::string text;
    bool steered = false;
    bool fallback = false;
    int steps = 0;
    long long duration_ns = 0;
    int phase1_layers = 0;
    std::vector<SteppedRows> row_snapshots;
};

int argmax_lowest(std::span<const float> logits);

DecodeResult greedy_decode(const Model& m, const PromptInputs& in, const DecodeOptions& opt = {});

// Two-phase pipeline: truncated prefill -> saliency map at the configured
// layer -> fresh full decode with the steering hook on the fusion layers.
// Falls back to an unsteered decode (flagged) when the query has no
// eligible info-rich token or the map is degenerate.
std::pair<DecodeResult, SaliencyMap> gift_decode(const Model& m, const PromptInputs& in,
                                                 const SteeringConfig& cfg,
                                                 const DecodeOptions& opt = {},
                                                 const FusionDiagnostic* calibrated = nullptr);

// Greedy decode that assembles a square capture holding every generated
// row at every layer (one extra forward covers the final token's row);
// input for fusion diagnostics.
struct OutputCaptureResult {
    DecodeResult result;
    AttentionCapture attn;
};
OutputCaptureResult decode_with_output_capture(const Model& m, const PromptInputs& in,
                                               const DecodeOptions& opt = {});

// Info-rich flags for generated tokens, zeroed past the first sentence
// terminator.
InfoRichMask output_info_rich_mask(const std::vector<int>& tokens, const Vocabulary& vocab,
                                   const Lexicon& lexicon);

std::string transcript_json(const DecodeResult& res, const SteeringConfig* cfg);

}  // namespace gift
