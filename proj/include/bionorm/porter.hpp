#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

// Porter's five-step suffix stripper (1980), in the form used by the widely
// deployed reference implementations: words of length <= 2 are left alone,
// step 2 uses BLI->BLE rather than ABLI->ABLE, and step 2 gains LOGI->LOG.

namespace bionorm::preprocess {

namespace porter_detail {

// 'y' counts as a consonant at position 0 or after a vowel.
inline bool is_consonant(const std::string& w, std::size_t i) {
    switch (w[i]) {
        case 'a': case 'e': case 'i': case 'o': case 'u':
            return false;
        case 'y':
            return i == 0 ? true : !is_consonant(w, i - 1);
        default:
            return true;
    }
}

// Measure m of w[0..len): the number of vowel->consonant transitions in the
// [C](VC)^m[V] decomposition.
inline int measure(const std::string& w, std::size_t len) {
    int m = 0;
    for (std::size_t i = 1; i < len; ++i)
        if (is_consonant(w, i) && !is_consonant(w, i - 1)) ++m;
    return m;
}

inline bool has_vowel(const std::string& w, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i)
        if (!is_consonant(w, i)) return true;
    return false;
}

inline bool ends_double_consonant(const std::string& w) {
    std::size_t n = w.size();
    return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

// consonant-vowel-consonant ending at i, where the final consonant is not
// w, x, or y; used to restore a trailing 'e' after short stems.
inline bool cvc_at(const std::string& w, std::size_t i) {
    if (i < 2 || i >= w.size()) return false;
    if (!is_consonant(w, i) || is_consonant(w, i - 1) || !is_consonant(w, i - 2)) return false;
    char c = w[i];
    return c != 'w' && c != 'x' && c != 'y';
}

inline bool ends_with(const std::string& w, std::string_view suf) {
    return w.size() >= suf.size() && w.compare(w.size() - suf.size(), suf.size(), suf) == 0;
}

struct Rule {
    std::string_view suffix;
    std::string_view replacement;
};

// Applies the first rule whose suffix matches; the replacement happens only
// when measure(stem) > min_measure, but a match ends the scan either way.
inline void apply_first(std::string& w, const std::vector<Rule>& rules, int min_measure) {
    for (const Rule& r : rules) {
        if (!ends_with(w, r.suffix)) continue;
        std::size_t stem_len = w.size() - r.suffix.size();
        if (measure(w, stem_len) > min_measure) {
            w.resize(stem_len);
            w.append(r.replacement);
        }
        return;
    }
}

inline void step1ab(std::string& w) {
    if (ends_with(w, "sses")) {
        w.resize(w.size() - 2);
    } else if (ends_with(w, "ies")) {
        w.replace(w.size() - 3, 3, "i");
    } else if (w.back() == 's' && w.size() >= 2 && w[w.size() - 2] != 's') {
        w.pop_back();
    }

    if (ends_with(w, "eed")) {
        if (measure(w, w.size() - 3) > 0) w.pop_back();
        return;
    }
    std::size_t stem_len = 0;
    if (ends_with(w, "ed"))
        stem_len = w.size() - 2;
    else if (ends_with(w, "ing"))
        stem_len = w.size() - 3;
    else
        return;
    if (!has_vowel(w, stem_len)) return;
    w.resize(stem_len);
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
        w.push_back('e');
    } else if (ends_double_consonant(w)) {
        char c = w.back();
        if (c != 'l' && c != 's' && c != 'z') w.pop_back();
    } else if (measure(w, w.size()) == 1 && cvc_at(w, w.size() - 1)) {
        w.push_back('e');
    }
}

inline void step1c(std::string& w) {
    if (w.back() == 'y' && has_vowel(w, w.size() - 1)) w.back() = 'i';
}

inline void step2(std::string& w) {
    static const std::vector<Rule> rules = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
        {"izer", "ize"},    {"bli", "ble"},     {"alli", "al"},   {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
        {"logi", "log"},
    };
    apply_first(w, rules, 0);
}

inline void step3(std::string& w) {
    static const std::vector<Rule> rules = {
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""},
    };
    apply_first(w, rules, 0);
}

inline void step4(std::string& w) {
    static const std::vector<Rule> rules = {
        {"al", ""},    {"ance", ""}, {"ence", ""}, {"er", ""},  {"ic", ""},
        {"able", ""},  {"ible", ""}, {"ant", ""},  {"ement", ""}, {"ment", ""},
        {"ent", ""},   {"ion", ""},  {"ou", ""},   {"ism", ""}, {"ate", ""},
        {"iti", ""},   {"ous", ""},  {"ive", ""},  {"ize", ""},
    };
    for (const Rule& r : rules) {
        if (!ends_with(w, r.suffix)) continue;
        std::size_t stem_len = w.size() - r.suffix.size();
        // "-ion" only counts as a suffix after 's' or 't'.
        if (r.suffix == "ion" && (stem_len == 0 || (w[stem_len - 1] != 's' && w[stem_len - 1] != 't')))
            continue;
        if (measure(w, stem_len) > 1) w.resize(stem_len);
        return;
    }
}

inline void step5(std::string& w) {
    if (w.back() == 'e') {
        int m = measure(w, w.size());
        if (m > 1 || (m == 1 && !cvc_at(w, w.size() - 2))) w.pop_back();
    }
    if (w.back() == 'l' && ends_double_consonant(w) && measure(w, w.size()) > 1) w.pop_back();
}

}  // namespace porter_detail

// Stems a lowercase alphabetic token. Tokens containing anything outside
// [a-z] (digits in particular) and tokens of length <= 2 pass through
// unchanged.
inline std::string porter_stem(std::string token) {
    if (token.size() <= 2) return token;
    for (char c : token)
        if (c < 'a' || c > 'z') return token;
    using namespace porter_detail;
    step1ab(token);
    step1c(token);
    step2(token);
    step3(token);
    step4(token);
    step5(token);
    return token;
}

}  // namespace bionorm::preprocess
