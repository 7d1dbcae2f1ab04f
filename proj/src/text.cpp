#include "gift/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

namespace gift {

const char* pos_tag_name(PosTag t) {
    switch (t) {
        case PosTag::Noun: return "NOUN";
        case PosTag::Propn: return "PROPN";
        case PosTag::Verb: return "VERB";
        case PosTag::Adj: return "ADJ";
        case PosTag::Adv: return "ADV";
        case PosTag::Num: return "NUM";
        case PosTag::Other: return "OTHER";
    }
    return "OTHER";
}

PosTag pos_tag_from_name(std::string_view name) {
    if (name == "NOUN") return PosTag::Noun;
    if (name == "PROPN") return PosTag::Propn;
    if (name == "VERB") return PosTag::Verb;
    if (name == "ADJ") return PosTag::Adj;
    if (name == "ADV") return PosTag::Adv;
    if (name == "NUM") return PosTag::Num;
    if (name == "OTHER") return PosTag::Other;
    throw std::runtime_error("unknown POS tag: " + std::string(name));
}

int Vocabulary::id_of(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? unk_id : it->second;
}

const std::string& Vocabulary::word_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::word_of: bad id");
    return words[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::from_words(std::vector<std::string> ws) {
    Vocabulary v;
    v.words = std::move(ws);
    for (int i = 0; i < v.size(); ++i) v.index.emplace(v.words[static_cast<std::size_t>(i)], i);
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path.string());
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        words.push_back(line);
    }
    if (words.empty()) throw std::runtime_error("Vocabulary::load: empty file " + path.string());
    return from_words(std::move(words));
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("Lexicon::load: cannot open " + path.string());
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("Lexicon::load: missing tab on line " + std::to_string(lineno));
        lex.tags[line.substr(0, tab)] = pos_tag_from_name(line.substr(tab + 1));
    }
    return lex;
}

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '\'';
}

bool all_digits(const std::string& w) {
    if (w.empty()) return false;
    return std::all_of(w.begin(), w.end(),
                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

bool ends_with(const std::string& w, std::string_view suffix) {
    return w.size() > suffix.size() &&
           w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab) {
    TokenizedText out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.tokens.push_back(cur);
            cur.clear();
        }
    };
    for (char raw : text) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_word_char(c)) {
            cur.push_back(c);
        } else {
            // punctuation becomes its own token
            flush();
            out.tokens.emplace_back(1, c);
        }
    }
    flush();
    if (out.tokens.empty()) throw std::runtime_error("tokenize: empty text");

    out.ids.reserve(out.tokens.size());
    for (const auto& t : out.tokens) out.ids.push_back(vocab.id_of(t));
    out.tags.assign(out.tokens.size(), PosTag::Other);
    return out;
}

TokenizedText tag(TokenizedText text, const Lexicon& lexicon) {
    text.tags.assign(text.tokens.size(), PosTag::Other);
    for (std::size_t i = 0; i < text.tokens.size(); ++i) {
        const std::string& w = text.tokens[i];
        if (auto it = lexicon.tags.find(w); it != lexicon.tags.end()) {
            text.tags[i] = it->second;
        } else if (all_digits(w)) {
            text.tags[i] = PosTag::Num;
        } else if (ends_with(w, "ly")) {
            text.tags[i] = PosTag::Adv;
        } else if (ends_with(w, "ing") || ends_with(w, "ed")) {
            text.tags[i] = PosTag::Verb;
        }
    }
    return text;
}

bool is_info_rich(PosTag t) {
    return t != PosTag::Other;
}

InfoRichMask select_info_rich(const TokenizedText& tagged) {
    InfoRichMask mask(tagged.tags.size(), 0);
    for (std::size_t i = 0; i < tagged.tags.size(); ++i)
        mask[i] = is_info_rich(tagged.tags[i]) ? 1 : 0;
    return mask;
}

bool is_sentence_end(std::string_view token) {
    return token == "." || token == "?" || token == "!";
}

std::size_t sentence_prefix_length(const std::vector<std::string>& tokens) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (is_sentence_end(tokens[i])) return i + 1;
    }
    return tokens.size();
}

}  // namespace gift
