#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <string>

#include "bionorm/core.hpp"

// Abbreviation definitions are mined from "long form (SF)" patterns with the
// Schwartz-Hearst character alignment: walk the short form right to left and
// greedily match each alphanumeric character against the rightmost unused
// occurrence in the preceding text, requiring the first character to land on
// a word start.

namespace bionorm::preprocess {

// Per-document short form -> long form map. Ordered so iteration (and the
// merge in PreprocessResources) is deterministic.
struct AbbreviationMap {
    std::map<std::string, std::string> pairs;

    bool empty() const { return pairs.empty(); }
    std::size_t size() const { return pairs.size(); }

    const std::string* find(const std::string& short_form) const {
        auto it = pairs.find(short_form);
        return it == pairs.end() ? nullptr : &it->second;
    }
};

namespace abbrev_detail {

inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
inline char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool valid_short_form(const std::string& sf) {
    if (sf.size() < 2 || sf.size() > 10) return false;
    int words = 1;
    bool has_letter = false;
    for (char c : sf) {
        if (c == ' ' || c == '\t') ++words;
        if (std::isalpha(static_cast<unsigned char>(c))) has_letter = true;
    }
    if (words > 2) return false;
    if (!has_letter) return false;
    return is_alnum(sf.front());
}

// Right-to-left alignment of sf against text; returns the token suffix of
// text that covers all matched characters, or nullopt if alignment fails.
inline std::optional<std::string> find_best_long_form(const std::string& sf, const std::string& text) {
    int l = static_cast<int>(text.size()) - 1;
    for (int s = static_cast<int>(sf.size()) - 1; s >= 0; --s) {
        char want = lower(sf[static_cast<std::size_t>(s)]);
        if (!is_alnum(sf[static_cast<std::size_t>(s)])) continue;
        while (l >= 0 && (lower(text[static_cast<std::size_t>(l)]) != want ||
                          (s == 0 && l > 0 && is_alnum(text[static_cast<std::size_t>(l) - 1]))))
            --l;
        if (l < 0) return std::nullopt;
        --l;
    }
    // Widen to the start of the token holding the first matched character.
    std::size_t begin = text.rfind(' ', l < 0 ? 0 : static_cast<std::size_t>(l));
    begin = (begin == std::string::npos) ? 0 : begin + 1;
    return text.substr(begin);
}

inline int count_long_form_words(const std::string& lf) {
    int words = 0;
    bool in_word = false;
    for (char c : lf) {
        bool delim = (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '-');
        if (!delim && !in_word) ++words;
        in_word = !delim;
    }
    return words;
}

inline bool accept_pair(const std::string& sf, const std::string& lf) {
    int sf_alnum = 0;
    for (char c : sf)
        if (is_alnum(c)) ++sf_alnum;
    if (sf_alnum > 10) return false;
    if (lf.size() < sf.size()) return false;
    if (lf.find(sf + " ") != std::string::npos) return false;
    if (lf.size() >= sf.size() && lf.compare(lf.size() - sf.size(), sf.size(), sf) == 0) return false;
    int lf_words = count_long_form_words(lf);
    if (lf_words > sf_alnum * 2 || lf_words > sf_alnum + 5) return false;
    return true;
}

// The long-form search window reaches back to the previous sentence break.
inline std::string preceding_window(const std::string& text, std::size_t open_paren) {
    std::size_t begin = 0;
    for (std::size_t i = open_paren; i > 0; --i) {
        char c = text[i - 1];
        if (c == '.' || c == '!' || c == '?' || c == '\n' || c == '(' || c == ')') {
            begin = i;
            break;
        }
    }
    return trim(text.substr(begin, open_paren - begin));
}

}  // namespace abbrev_detail

inline AbbreviationMap detect_abbreviations(const Document& doc) {
    using namespace abbrev_detail;
    AbbreviationMap out;
    const std::string& text = doc.text;
    std::size_t pos = 0;
    while ((pos = text.find('(', pos)) != std::string::npos) {
        std::size_t close = text.find(')', pos + 1);
        if (close == std::string::npos) break;
        std::string sf = trim(text.substr(pos + 1, close - pos - 1));
        std::string window = preceding_window(text, pos);
        pos = close + 1;
        if (!valid_short_form(sf) || window.empty()) continue;
        auto lf = find_best_long_form(sf, window);
        if (!lf || !accept_pair(sf, *lf)) continue;
        out.pairs[sf] = *lf;  // last definition wins
    }
    return out;
}

// Replaces the whole mention if it equals a short form exactly; otherwise
// replaces individual whitespace-separated words that equal short forms.
inline std::string expand_abbreviation(const std::string& mention_text, const AbbreviationMap& abbrevs) {
    if (abbrevs.empty()) return mention_text;
    if (const std::string* lf = abbrevs.find(mention_text)) return *lf;

    std::string out;
    std::size_t i = 0;
    bool changed = false;
    while (i < mention_text.size()) {
        if (std::isspace(static_cast<unsigned char>(mention_text[i]))) {
            out += mention_text[i++];
            continue;
        }
        std::size_t j = i;
        while (j < mention_text.size() && !std::isspace(static_cast<unsigned char>(mention_text[j]))) ++j;
        std::string word = mention_text.substr(i, j - i);
        if (const std::string* lf = abbrevs.find(word)) {
            out += *lf;
            changed = true;
        } else {
            out += word;
        }
        i = j;
    }
    return changed ? out : mention_text;
}

}  // namespace bionorm::preprocess
