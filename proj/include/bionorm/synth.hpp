#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bionorm/core.hpp"
#include "bionorm/preprocess.hpp"

// Seeded synthetic corpus generator. Concepts are (modifier, head, grade)
// triples whose grade is written in any of four numeric notations. Mentions
// are variations of a concept name: token reorderings, alternate numeric
// notations, injected misspellings (recorded in spelling.tsv), defined
// abbreviations (recorded in docs.jsonl), and appended rare "decor" token
// pairs. Every concept also owns a short synonym made purely of its decor
// pair; when a mention carries another concept's pair, token-overlap
// retrieval prefers that short rare-token name over the mention's true
// concept, while a trained ranker can learn that decor tokens never signal a
// match. NIL mentions use (modifier, head) combinations absent from the KB,
// so they always share tokens with real concepts.

namespace bionorm::synth {

struct SynthSpec {
    std::size_t n_concepts = 300;
    int min_synonyms = 2;
    int max_synonyms = 4;
    std::size_t n_train = 2000;
    std::size_t n_dev = 200;
    std::size_t n_test = 500;
    double nil_fraction = 0.1;
    double p_reorder = 0.5;
    double p_misspell = 0.25;
    double p_abbrev = 0.10;
    double p_decor = 0.5;
    std::uint64_t seed = 7;

    void validate() const {
        if (n_concepts < 10) throw UserError("synth: need at least 10 concepts");
        if (n_concepts > 1500) throw UserError("synth: at most 1500 concepts supported");
        if (min_synonyms < 1 || max_synonyms < min_synonyms || max_synonyms > 4)
            throw UserError("synth: synonym range must satisfy 1 <= min <= max <= 4");
        if (!(nil_fraction >= 0.0 && nil_fraction < 1.0))
            throw UserError("synth: nil_fraction must be in [0,1)");
        for (double p : {p_reorder, p_misspell, p_abbrev, p_decor})
            if (!(p >= 0.0 && p <= 1.0)) throw UserError("synth: probabilities must be in [0,1]");
    }
};

struct SynthOutput {
    KnowledgeBase kb;
    Dataset train, dev, test;
    std::vector<Document> docs;
    std::map<std::string, std::string> spelling;  // misspelled -> correct
};

namespace synth_detail {

inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) { return rng() % n; }

inline std::string make_word(std::mt19937_64& rng, int syllables) {
    static const char* kOnsets[] = {"b",  "d",  "f",  "g",  "k",  "l",  "m",  "n",
                                    "p",  "r",  "s",  "t",  "v",  "z",  "br", "dr",
                                    "gr", "kl", "pr", "st", "tr", "zw"};
    static const char* kNuclei[] = {"a", "e", "i", "o", "u", "ar", "el", "or", "in", "ul"};
    std::string w;
    for (int s = 0; s < syllables; ++s) {
        w += kOnsets[pick(rng, std::size(kOnsets))];
        w += kNuclei[pick(rng, std::size(kNuclei))];
    }
    if (unit(rng) < 0.4) w += "bdkmnrst"[pick(rng, 8)];
    return w;
}

// Content and decor words must map to pairwise-distinct normalized tokens,
// and must not collide with the numeric table.
inline std::vector<std::string> make_pool(std::mt19937_64& rng, std::size_t n, int syllables,
                                          std::set<std::string>& used_stems,
                                          const preprocess::NumericTable& numerics) {
    std::vector<std::string> pool;
    int guard = 0;
    while (pool.size() < n) {
        if (++guard > 200000) throw UserError("synth: could not generate a distinct word pool");
        std::string w = make_word(rng, syllables);
        if (w.size() < 4 || numerics.find(w)) continue;
        std::string stem = preprocess::porter_stem(w);
        if (!used_stems.insert(stem).second) continue;
        pool.push_back(w);
    }
    return pool;
}

// One misspelling per word, stable across the whole corpus: swap two adjacent
// letters (or drop one) such that the result is a fresh, unused form.
inline std::string misspell(const std::string& word, std::mt19937_64& rng,
                            const std::set<std::string>& taken) {
    for (int attempt = 0; attempt < 50; ++attempt) {
        std::string m = word;
        if (attempt % 2 == 0 && word.size() >= 3) {
            std::size_t i = 1 + pick(rng, word.size() - 2);
            std::swap(m[i], m[i + 1]);
        } else {
            std::size_t i = 1 + pick(rng, word.size() - 1);
            m.erase(i, 1);
        }
        if (m != word && m.size() >= 2 && !taken.count(m)) return m;
    }
    return word + "q";  // deterministic fallback, still distinct
}

struct NumericForms {
    // notations for value 1..10: cardinal, ordinal, roman, digits
    static std::string form(int value, int notation) {
        static const char* kCardinals[] = {"one", "two",   "three", "four", "five",
                                           "six", "seven", "eight", "nine", "ten"};
        static const char* kOrdinals[] = {"first", "second",  "third",  "fourth", "fifth",
                                          "sixth", "seventh", "eighth", "ninth",  "tenth"};
        static const char* kRoman[] = {"i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x"};
        switch (notation % 4) {
            case 0: return kCardinals[value - 1];
            case 1: return kOrdinals[value - 1];
            case 2: return kRoman[value - 1];
            default: return std::to_string(value);
        }
    }
};

inline std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace synth_detail

inline SynthOutput generate(const SynthSpec& spec) {
    using namespace synth_detail;
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    preprocess::NumericTable numerics;

    // ---- token pools ------------------------------------------------------
    // Small pools keep the vocabulary dense: every surface token recurs often
    // enough for a from-scratch model to learn its embedding.
    std::set<std::string> used_stems;
    std::size_t pool_side = 8;
    while (pool_side * pool_side < spec.n_concepts + 225) ++pool_side;  // enough unused combos
    std::vector<std::string> mods = make_pool(rng, pool_side, 2, used_stems, numerics);
    std::vector<std::string> heads = make_pool(rng, pool_side, 3, used_stems, numerics);
    // Each pair is the trap synonym of ~5 concepts: few enough that a true
    // concept still reaches the candidate list past the traps at k=10.
    std::size_t n_decor_pairs = std::max<std::size_t>(12, spec.n_concepts / 5);
    std::vector<std::string> decor =
        make_pool(rng, 2 * n_decor_pairs, 2, used_stems, numerics);

    // ---- concepts ---------------------------------------------------------
    struct ConceptPlan {
        std::size_t mod, head;
        int grade = 1;
        std::size_t decor_pair;
    };
    std::vector<std::pair<std::size_t, std::size_t>> combos;
    for (std::size_t m = 0; m < mods.size(); ++m)
        for (std::size_t h = 0; h < heads.size(); ++h) combos.emplace_back(m, h);
    for (std::size_t i = combos.size(); i > 1; --i) std::swap(combos[i - 1], combos[pick(rng, i)]);

    SynthOutput out;
    std::vector<ConceptPlan> plans;
    for (std::size_t c = 0; c < spec.n_concepts; ++c) {
        ConceptPlan p;
        p.mod = combos[c].first;
        p.head = combos[c].second;
        p.grade = 1 + static_cast<int>(c % 10);
        p.decor_pair = c % n_decor_pairs;
        plans.push_back(p);

        const std::string& mod = mods[p.mod];
        const std::string& head = heads[p.head];
        const std::string& d1 = decor[2 * p.decor_pair];
        const std::string& d2 = decor[2 * p.decor_pair + 1];

        std::vector<std::string> names;
        auto push_name = [&](std::vector<std::string> toks) {
            std::string s = join(toks);
            if (std::find(names.begin(), names.end(), s) == names.end()) names.push_back(s);
        };
        push_name({mod, head, NumericForms::form(p.grade, 0)});
        push_name({d1, d2});  // the short rare-token synonym
        push_name({head, mod, NumericForms::form(p.grade, 1)});
        push_name({mod, head, NumericForms::form(p.grade, 2)});
        int want = spec.min_synonyms +
                   static_cast<int>(c % static_cast<std::size_t>(spec.max_synonyms - spec.min_synonyms + 1));
        names.resize(static_cast<std::size_t>(std::min<int>(want, static_cast<int>(names.size()))));

        Concept entry;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "C%04zu", c + 1);
        entry.id = ConceptId(idbuf);
        entry.names = std::move(names);
        out.kb.add(std::move(entry));
    }

    // Unused combos feed the NIL mentions.
    std::vector<std::pair<std::size_t, std::size_t>> nil_combos(
        combos.begin() + static_cast<std::ptrdiff_t>(spec.n_concepts),
        combos.begin() + static_cast<std::ptrdiff_t>(std::min(combos.size(), spec.n_concepts + 200)));

    // ---- shared corpus state ---------------------------------------------
    std::set<std::string> taken_forms;  // every surface word ever emitted
    for (const auto& w : mods) taken_forms.insert(w);
    for (const auto& w : heads) taken_forms.insert(w);
    for (const auto& w : decor) taken_forms.insert(w);
    std::map<std::string, std::string> misspelling_of;  // correct -> misspelled

    out.docs.push_back({"d0", "routine clinical notes with no definitions."});
    std::size_t doc_seq = 0;

    auto misspelled_form = [&](const std::string& word) {
        auto it = misspelling_of.find(word);
        if (it != misspelling_of.end()) return it->second;
        std::string m = misspell(word, rng, taken_forms);
        taken_forms.insert(m);
        misspelling_of[word] = m;
        out.spelling[m] = word;
        return m;
    };

    auto make_mention = [&](bool linkable) {
        Mention mention;
        mention.doc_id = "d0";
        std::vector<std::string> toks;
        std::string mod, head;
        int grade = 0;
        std::size_t own_decor_pair = n_decor_pairs;  // sentinel: no own pair

        if (linkable) {
            std::size_t c = pick(rng, plans.size());
            const ConceptPlan& p = plans[c];
            mod = mods[p.mod];
            head = heads[p.head];
            grade = p.grade;
            own_decor_pair = p.decor_pair;
            char idbuf[16];
            std::snprintf(idbuf, sizeof(idbuf), "C%04zu", c + 1);
            mention.gold = GoldLabel::linked(ConceptId(idbuf));
        } else {
            const auto& combo = nil_combos[pick(rng, nil_combos.size())];
            mod = mods[combo.first];
            head = heads[combo.second];
            grade = 1 + static_cast<int>(pick(rng, 10));
            mention.gold = GoldLabel::nil();
        }

        // Abbreviation form: the mention is just the short form; its document
        // defines it. Linkable mentions only, and no other variation.
        if (linkable && unit(rng) < spec.p_abbrev) {
            std::string sf;
            sf += static_cast<char>(std::toupper(static_cast<unsigned char>(mod[0])));
            sf += static_cast<char>(std::toupper(static_cast<unsigned char>(head[0])));
            sf += std::to_string(grade);
            std::string doc_id = "d" + std::to_string(++doc_seq);
            out.docs.push_back({doc_id, mod + " " + head + " " + std::to_string(grade) + " (" +
                                            sf + ") was recorded."});
            mention.doc_id = doc_id;
            mention.text = sf;
            return mention;
        }

        toks.push_back(mod);
        toks.push_back(head);
        if (grade) toks.push_back(NumericForms::form(grade, static_cast<int>(pick(rng, 4))));
        if (unit(rng) < spec.p_reorder)
            for (std::size_t i = toks.size(); i > 1; --i) std::swap(toks[i - 1], toks[pick(rng, i)]);
        if (linkable && unit(rng) < spec.p_misspell) {
            std::size_t which = pick(rng, 2);  // mod or head position, wherever it landed
            const std::string& target = which == 0 ? mod : head;
            for (auto& t : toks)
                if (t == target) {
                    t = misspelled_form(target);
                    break;
                }
        }
        if (unit(rng) < spec.p_decor) {
            // someone else's decor pair: the lexical trap
            std::size_t pair;
            if (own_decor_pair < n_decor_pairs) {
                pair = pick(rng, n_decor_pairs - 1);
                if (pair >= own_decor_pair) ++pair;
            } else {
                pair = pick(rng, n_decor_pairs);
            }
            toks.push_back(decor[2 * pair]);
            toks.push_back(decor[2 * pair + 1]);
        }
        mention.text = join(toks);
        return mention;
    };

    // nil count rounded to nearest (llround); NIL positions then shuffled in
    auto make_dataset = [&](std::size_t n, SplitTag tag) {
        Dataset ds;
        ds.split_tag = tag;
        std::size_t n_nil = static_cast<std::size_t>(std::llround(spec.nil_fraction * static_cast<double>(n)));
        for (std::size_t i = 0; i < n; ++i) ds.mentions.push_back(make_mention(i < n - n_nil));
        for (std::size_t i = ds.mentions.size(); i > 1; --i)
            std::swap(ds.mentions[i - 1], ds.mentions[pick(rng, i)]);
        return ds;
    };

    out.train = make_dataset(spec.n_train, SplitTag::Train);
    out.dev = make_dataset(spec.n_dev, SplitTag::Dev);
    out.test = make_dataset(spec.n_test, SplitTag::Test);
    return out;
}

inline void write_synth(const SynthOutput& out, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UserError("cannot create output directory " + dir + ": " + ec.message());
    save_kb(out.kb, dir + "/kb.jsonl");
    save_dataset(out.train, dir + "/train.jsonl");
    save_dataset(out.dev, dir + "/dev.jsonl");
    save_dataset(out.test, dir + "/test.jsonl");
    save_documents(out.docs, dir + "/docs.jsonl");
    std::ofstream sp(dir + "/spelling.tsv", std::ios::binary);
    if (!sp) throw UserError("cannot open output file: " + dir + "/spelling.tsv");
    sp << "# generated misspelling lexicon\n";
    for (const auto& [wrong, right] : out.spelling) sp << wrong << "\t" << right << "\n";
}

}  // namespace bionorm::synth
