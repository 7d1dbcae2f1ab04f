#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gift {

// Coarse POS tag set. Everything that is not one of the six content
// classes collapses to Other.
enum class PosTag : std::uint8_t { Noun, Propn, Verb, Adj, Adv, Num, Other };

const char* pos_tag_name(PosTag t);
PosTag pos_tag_from_name(std::string_view name);  // throws on unknown tag

// Word id table. Line number in the vocabulary file is the id.
// Id 0 is <unk>, id 1 is <eos> by convention of the shipped file.
struct Vocabulary {
    std::vector<std::string> words;
    std::unordered_map<std::string, int> index;

    int size() const { return static_cast<int>(words.size()); }
    int id_of(const std::string& w) const;  // unk_id when absent
    const std::string& word_of(int id) const;

    int unk_id = 0;
    int eos_id = 1;

    static Vocabulary load(const std::filesystem::path& path);
    static Vocabulary from_words(std::vector<std::string> words);
};

// word<TAB>TAG lines. Lookup happens before the suffix fallback.
struct Lexicon {
    std::unordered_map<std::string, PosTag> tags;

    static Lexicon load(const std::filesystem::path& path);
};

struct TokenizedText {
    std::vector<std::string> tokens;
    std::vector<int> ids;
    std::vector<PosTag> tags;

    std::size_t size() const { return tokens.size(); }
};

// One flag per token; true = information-rich.
using InfoRichMask = std::vector<std::uint8_t>;

// Lowercased word tokens, punctuation split off, unknown words -> unk id.
// Throws on text that is empty after trimming.
TokenizedText tokenize(std::string_view text, const Vocabulary& vocab);

// Assigns one tag per token: lexicon first, then suffix rules
// (-ly -> ADV, -ing/-ed -> VERB, digits -> NUM), else OTHER.
TokenizedText tag(TokenizedText text, const Lexicon& lexicon);

// True for NOUN, PROPN, VERB, ADJ, ADV, NUM.
bool is_info_rich(PosTag t);
InfoRichMask select_info_rich(const TokenizedText& tagged);

// Sentence handling for output diagnostics: the prefix through the first
// '.', '?' or '!' token (whole input if none).
bool is_sentence_end(std::string_view token);
std::size_t sentence_prefix_length(const std::vector<std::string>& tokens);

}  // namespace gift
