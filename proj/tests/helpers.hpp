// Shared fixtures for the unit tests: a small model config and prompt
// builders backed by the shipped vocabulary and lexicon.
#pragma once

#include <string>

#include "gift/model.hpp"
#include "gift/text.hpp"

namespace testutil {

inline const gift::Vocabulary& vocab() {
    static const gift::Vocabulary v =
        gift::Vocabulary::load(std::string(GIFT_DATA_DIR) + "/vocab.txt");
    return v;
}

inline const gift::Lexicon& lexicon() {
    static const gift::Lexicon l =
        gift::Lexicon::load(std::string(GIFT_DATA_DIR) + "/lexicon.tsv");
    return l;
}

// 4 layers x 4 heads, 4x4 grid: fast enough for per-test decodes.
inline gift::ModelConfig tiny_config(std::uint64_t seed = 42) {
    gift::ModelConfig cfg;
    cfg.layers = 4;
    cfg.heads = 4;
    cfg.dim = 32;
    cfg.head_dim = 8;
    cfg.vocab_size = 512;
    cfg.max_seq = 96;
    cfg.grid_rows = 4;
    cfg.grid_cols = 4;
    cfg.seed = seed;
    return cfg;
}

inline gift::Scene tiny_scene(int rows = 4, int cols = 4) {
    gift::Scene s;
    s.rows = rows;
    s.cols = cols;
    s.cells.assign(static_cast<std::size_t>(rows * cols),
                   {gift::shape_id("blank"), gift::color_id("gray")});
    // distinct patch in the top-left corner
    s.cells[0] = {gift::shape_id("circle"), gift::color_id("red")};
    s.cells[1] = {gift::shape_id("circle"), gift::color_id("red")};
    return s;
}

inline gift::PromptInputs make_prompt(const gift::Scene& scene,
                                      const std::string& query = "describe the red circle .",
                                      const std::string& system = "observe this scene .") {
    gift::PromptInputs in;
    in.system = gift::tag(gift::tokenize(system, vocab()), lexicon());
    in.scene = scene;
    in.query = gift::tag(gift::tokenize(query, vocab()), lexicon());
    return in;
}

}  // namespace testutil
