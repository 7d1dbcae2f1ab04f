#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gift/text.hpp"

namespace gift {

struct ModelConfig {
    int layers = 8;
    int heads = 8;
    int dim = 128;
    int head_dim = 16;
    int vocab_size = 512;
    int max_seq = 192;
    int grid_rows = 8;
    int grid_cols = 8;
    std::uint64_t seed = 42;

    int grid_cells() const { return grid_rows * grid_cols; }
    void validate() const;  // throws on dim != heads * head_dim etc.
};

// Half-open-free span: [start, start+len).
struct Span {
    int start = 0;
    int len = 0;
    int end() const { return start + len; }
    bool contains(int i) const { return i >= start && i < end(); }
};

// Index spans of [system; visual; query; generated] within one sequence.
struct SegmentLayout {
    Span system;
    Span visual;
    Span query;
    Span generated;

    int total() const { return generated.end(); }
    int prompt_length() const { return query.end(); }
    void validate(int grid_cells) const;
};

// Categorical per-cell scene features; the source of visual embeddings.
struct Scene {
    int rows = 0;
    int cols = 0;
    struct Cell {
        int shape = 0;
        int color = 0;
    };
    std::vector<Cell> cells;  // row-major, rows*cols entries

    int cell_count() const { return rows * cols; }

    static Scene load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    static Scene from_json_text(const std::string& text);
    std::string to_json_text() const;
};

int shape_id(std::string_view name);  // throws on unknown
int color_id(std::string_view name);
const std::vector<std::string>& shape_names();
const std::vector<std::string>& color_names();

// Captured per-layer, per-head attention rows, [layer][head][row][col].
// Rows are causal (exact zeros above the diagonal) and near-stochastic.
struct AttentionCapture {
    int layers = 0;
    int heads = 0;
    int tokens = 0;
    SegmentLayout layout;
    std::vector<float> weights;

    float at(int l, int h, int i, int j) const {
        return weights[idx(l, h, i, j)];
    }
    float& at(int l, int h, int i, int j) { return weights[idx(l, h, i, j)]; }
    std::size_t idx(int l, int h, int i, int j) const {
        return ((static_cast<std::size_t>(l) * static_cast<std::size_t>(heads) +
                 static_cast<std::size_t>(h)) *
                    static_cast<std::size_t>(tokens) +
                static_cast<std::size_t>(i)) *
                   static_cast<std::size_t>(tokens) +
               static_cast<std::size_t>(j);
    }

    void allocate() {
        weights.assign(static_cast<std::size_t>(layers) * static_cast<std::size_t>(heads) *
                           static_cast<std::size_t>(tokens) * static_cast<std::size_t>(tokens),
                       0.0f);
    }
};

// Per-head attention rows for the position currently being decoded,
// indexed [head][key]. The unit the steering hook edits.
using HeadRows = std::vector<std::vector<float>>;

// Applied per enabled layer to the current row's post-softmax per-head
// attention before the value-weighted sum. When disabled the forward pass
// is bitwise identical to an unhooked one.
struct SteeringHook {
    bool enabled = false;
    std::vector<std::uint8_t> layer_enabled;  // indexed by layer
    std::function<void(int layer, HeadRows& rows, const SegmentLayout& layout)> edit;

    bool active_at(int layer) const {
        return enabled && layer >= 0 && layer < static_cast<int>(layer_enabled.size()) &&
               layer_enabled[static_cast<std::size_t>(layer)] != 0;
    }
};

struct LayerWeights {
    std::vector<float> ln1_g, ln1_b;
    std::vector<float> wq, wk, wv, wo;  // [dim][dim] row-major (in, out)
    std::vector<float> bq, bk, bv, bo;
    std::vector<float> ln2_g, ln2_b;
    std::vector<float> w_up, b_up;      // [dim][4*dim]
    std::vector<float> w_down, b_down;  // [4*dim][dim]
};

// Immutable after build; shareable across threads.
struct Model {
    ModelConfig cfg;
    std::vector<float> tok_emb;    // [vocab][dim]
    std::vector<float> pos_emb;    // [max_seq][dim]
    std::vector<float> shape_emb;  // [n_shapes][dim]
    std::vector<float> color_emb;  // [n_colors][dim]
    std::vector<LayerWeights> layers;
    std::vector<float> lnf_g, lnf_b;
    std::vector<float> lm_head;  // [dim][vocab]
};

// Seeded deterministic init: identical seed => bitwise identical weights.
Model build_model(const ModelConfig& cfg);

// A prompt: tokenized system text, scene grid, tokenized query.
struct PromptInputs {
    TokenizedText system;
    Scene scene;
    TokenizedText query;
};

SegmentLayout make_layout(const ModelConfig& cfg, const PromptInputs& in, int generated = 0);

// Per-position input embeddings for the prompt, [pos][dim].
std::vector<float> embed_prompt(const Model& m, const PromptInputs& in);

struct PrefillResult {
    std::vector<float> hidden;  // [tokens][dim], after the last layer run
    AttentionCapture attn;
    int layers_run = 0;
};

// Eager forward over the whole prompt running layers 0..up_to_layer
// inclusive (all layers when absent), capturing attention for exactly
// those layers. No steering here.
PrefillResult prefill(const Model& m, const PromptInputs& in,
                      std::optional<int> up_to_layer = std::nullopt);

// Incremental decoding with a KV cache. The session prefills every prompt
// position except the last; each step() then processes the oldest pending
// position through all layers, so every row that produces logits passes
// through the hook.
class DecodeSession {
  public:
    struct StepRowListener {
        // rows_pre: post-softmax rows before the hook, rows_post: after.
        // Both valid only during the callback. position is the sequence
        // index of the row.
        virtual void on_row(int layer, int position, const HeadRows& rows_pre,
                            const HeadRows& rows_post) = 0;
        virtual ~StepRowListener() = default;
    };

    DecodeSession(const Model& m, const PromptInputs& in);

    // Processes the pending position; returns next-token logits.
    // Throws if the hook returns negative weights or a wrong-length row.
    std::vector<float> step(const SteeringHook* hook = nullptr,
                            StepRowListener* listener = nullptr);

    void append_generated(int token_id);  // becomes the next pending position

    const SegmentLayout& layout() const { return layout_; }
    int sequence_length() const { return layout_.total(); }
    int pending_position() const { return processed_; }
    long layers_run() const { return layers_run_; }

  private:
    void process_position(const std::vector<float>& embedding, bool want_logits,
                          const SteeringHook* hook, StepRowListener* listener,
                          std::vector<float>* logits_out);

    const Model& model_;
    SegmentLayout layout_;
    std::vector<std::vector<float>> key_cache_;    // per layer: [pos][dim]
    std::vector<std::vector<float>> value_cache_;  // per layer: [pos][dim]
    std::vector<float> pending_embedding_;
    int processed_ = 0;
    long layers_run_ = 0;
};

}  // namespace gift
