#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "bionorm/abbrev.hpp"
#include "bionorm/core.hpp"
#include "bionorm/porter.hpp"

namespace bionorm::preprocess {

using Token = std::string;  // lowercase letters and digits only, never empty

namespace detail {

// Minimal UTF-8 decode: returns the codepoint at i and advances i. Invalid
// sequences decode byte-by-byte (those bytes are dropped downstream anyway).
inline std::uint32_t next_codepoint(const std::string& s, std::size_t& i) {
    std::uint8_t b0 = static_cast<std::uint8_t>(s[i]);
    auto cont = [&](std::size_t off) {
        return i + off < s.size() && (static_cast<std::uint8_t>(s[i + off]) & 0xC0u) == 0x80u;
    };
    if (b0 < 0x80u) {
        ++i;
        return b0;
    }
    if ((b0 & 0xE0u) == 0xC0u && cont(1)) {
        std::uint32_t cp = (b0 & 0x1Fu) << 6 | (static_cast<std::uint8_t>(s[i + 1]) & 0x3Fu);
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0u) == 0xE0u && cont(1) && cont(2)) {
        std::uint32_t cp = (b0 & 0x0Fu) << 12 | (static_cast<std::uint8_t>(s[i + 1]) & 0x3Fu) << 6 |
                           (static_cast<std::uint8_t>(s[i + 2]) & 0x3Fu);
        i += 3;
        return cp;
    }
    if ((b0 & 0xF8u) == 0xF0u && cont(1) && cont(2) && cont(3)) {
        std::uint32_t cp = (b0 & 0x07u) << 18 | (static_cast<std::uint8_t>(s[i + 1]) & 0x3Fu) << 12 |
                           (static_cast<std::uint8_t>(s[i + 2]) & 0x3Fu) << 6 |
                           (static_cast<std::uint8_t>(s[i + 3]) & 0x3Fu);
        i += 4;
        return cp;
    }
    ++i;
    return b0;
}

inline bool is_unicode_space(std::uint32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

}  // namespace detail

// Splits on Unicode whitespace, keeps only ASCII letters (lowercased) and
// digits within each piece, and drops pieces that end up empty. Everything
// else — punctuation, symbols, dashes of any kind — is stripped.
inline std::vector<Token> tokenize(const std::string& text) {
    std::vector<Token> out;
    Token cur;
    std::size_t i = 0;
    while (i < text.size()) {
        std::uint32_t cp = detail::next_codepoint(text, i);
        if (detail::is_unicode_space(cp)) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
            continue;
        }
        if (cp >= 'a' && cp <= 'z')
            cur.push_back(static_cast<char>(cp));
        else if (cp >= 'A' && cp <= 'Z')
            cur.push_back(static_cast<char>(cp - 'A' + 'a'));
        else if (cp >= '0' && cp <= '9')
            cur.push_back(static_cast<char>(cp));
        // non-alphanumeric codepoints are dropped in place
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Misspelling -> correction list; keys unique and distinct from values.
class SpellingLexicon {
public:
    void add(const std::string& wrong, const std::string& right) {
        if (wrong == right) throw UserError("spelling entry maps \"" + wrong + "\" to itself");
        if (!map_.emplace(wrong, right).second)
            throw UserError("duplicate spelling entry for \"" + wrong + "\"");
    }

    const std::string* find(const std::string& w) const {
        auto it = map_.find(w);
        return it == map_.end() ? nullptr : &it->second;
    }

    bool empty() const { return map_.empty(); }
    std::size_t size() const { return map_.size(); }

private:
    std::unordered_map<std::string, std::string> map_;
};

// Fixed numeric-word table: cardinals, ordinals, and Roman numerals for one
// through ten, plus "single".
class NumericTable {
public:
    NumericTable() {
        static const char* kCardinals[] = {"one", "two",   "three", "four", "five",
                                           "six", "seven", "eight", "nine", "ten"};
        static const char* kOrdinals[] = {"first", "second", "third",  "fourth", "fifth",
                                          "sixth", "seventh", "eighth", "ninth",  "tenth"};
        static const char* kRoman[] = {"i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x"};
        for (int n = 1; n <= 10; ++n) {
            std::string v = std::to_string(n);
            map_[kCardinals[n - 1]] = v;
            map_[kOrdinals[n - 1]] = v;
            map_[kRoman[n - 1]] = v;
        }
        map_["single"] = "1";
    }

    const std::string* find(const std::string& w) const {
        auto it = map_.find(w);
        return it == map_.end() ? nullptr : &it->second;
    }

    // Digit string -> numeric words, for generators that run the table backwards.
    std::vector<std::string> words_for(const std::string& digits) const {
        std::vector<std::string> out;
        for (const auto& [word, value] : map_)
            if (value == digits) out.push_back(word);
        return out;
    }

private:
    std::map<std::string, std::string> map_;
};

inline std::vector<Token> correct_spelling(const std::vector<Token>& tokens,
                                           const SpellingLexicon& lexicon) {
    std::vector<Token> out;
    out.reserve(tokens.size());
    for (const Token& t : tokens) {
        const std::string* fix = lexicon.find(t);
        if (!fix) {
            out.push_back(t);
            continue;
        }
        if (fix->find(' ') == std::string::npos) {
            out.push_back(*fix);
        } else {
            for (Token& piece : tokenize(*fix)) out.push_back(std::move(piece));
        }
    }
    return out;
}

inline std::vector<Token> resolve_numerics(const std::vector<Token>& tokens,
                                           const NumericTable& table) {
    std::vector<Token> out;
    out.reserve(tokens.size());
    for (const Token& t : tokens) {
        const std::string* v = table.find(t);
        out.push_back(v ? *v : t);
    }
    return out;
}

// Full normalization pipeline: expand abbreviations on the raw string, then
// tokenize, fix spelling, map numeric words to digits, and stem.
inline std::vector<Token> normalize(const std::string& raw_text, const AbbreviationMap& abbrevs,
                                    const SpellingLexicon& lexicon,
                                    const NumericTable& table = NumericTable()) {
    std::string expanded = expand_abbreviation(raw_text, abbrevs);
    std::vector<Token> tokens = tokenize(expanded);
    tokens = correct_spelling(tokens, lexicon);
    tokens = resolve_numerics(tokens, table);
    for (Token& t : tokens) t = porter_stem(std::move(t));
    return tokens;
}

// ---------------------------------------------------------------------------
// Resource files
// ---------------------------------------------------------------------------

namespace detail {

// `key<TAB>value` per line; blank lines and '#' comments ignored.
inline void for_each_tsv_pair(const std::string& path,
                              const std::function<void(std::size_t, std::string, std::string)>& fn) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw UserError(path + ":" + std::to_string(lineno) + ": expected key<TAB>value");
        std::string key = line.substr(0, tab);
        std::string value = line.substr(tab + 1);
        if (key.empty() || value.empty())
            throw UserError(path + ":" + std::to_string(lineno) + ": empty key or value");
        fn(lineno, std::move(key), std::move(value));
    }
}

}  // namespace detail

inline SpellingLexicon load_spelling_lexicon(const std::string& path) {
    SpellingLexicon lex;
    detail::for_each_tsv_pair(path, [&](std::size_t lineno, std::string key, std::string value) {
        for (char c : key + value)
            if (c >= 'A' && c <= 'Z')
                throw UserError(path + ":" + std::to_string(lineno) + ": entries must be lowercase");
        try {
            lex.add(key, value);
        } catch (const UserError& e) {
            throw UserError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    return lex;
}

// Global abbreviation list (short<TAB>long), merged under document-local pairs.
inline AbbreviationMap load_abbreviation_list(const std::string& path) {
    AbbreviationMap map;
    detail::for_each_tsv_pair(path, [&](std::size_t lineno, std::string key, std::string value) {
        if (key.size() > value.size())
            throw UserError(path + ":" + std::to_string(lineno) +
                            ": short form longer than long form");
        map.pairs[std::move(key)] = std::move(value);
    });
    return map;
}

// Bundles every text-normalization resource, with per-document abbreviation
// maps detected from the corpus documents.
struct PreprocessResources {
    SpellingLexicon lexicon;
    AbbreviationMap global_abbrevs;
    std::map<std::string, AbbreviationMap> doc_abbrevs;  // keyed by doc_id
    NumericTable numerics;

    void detect_from_documents(const std::vector<Document>& docs) {
        for (const Document& d : docs) doc_abbrevs[d.id] = detect_abbreviations(d);
    }

    // Document-local definitions shadow the global list.
    AbbreviationMap abbrevs_for(const std::string& doc_id) const {
        AbbreviationMap merged = global_abbrevs;
        auto it = doc_abbrevs.find(doc_id);
        if (it != doc_abbrevs.end())
            for (const auto& [sf, lf] : it->second.pairs) merged.pairs[sf] = lf;
        return merged;
    }

    // Mentions expand abbreviations from their own document plus the global list.
    std::vector<Token> normalize_mention(const Mention& m) const {
        return normalize(m.text, abbrevs_for(m.doc_id), lexicon, numerics);
    }

    // Concept names never contain document-local abbreviations.
    std::vector<Token> normalize_name(const std::string& name) const {
        return normalize(name, AbbreviationMap{}, lexicon, numerics);
    }
};

}  // namespace bionorm::preprocess
