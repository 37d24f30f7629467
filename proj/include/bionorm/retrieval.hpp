#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bionorm/binio.hpp"
#include "bionorm/core.hpp"
#include "bionorm/fingerprint.hpp"
#include "bionorm/preprocess.hpp"

namespace bionorm::retrieval {

using preprocess::Token;

// One searchable unit: a concept name or a linkable training mention.
struct NameDoc {
    std::uint32_t doc_ord = 0;
    ConceptId concept_id;
    std::string raw_name;
    std::vector<Token> tokens;

    std::size_t length() const { return tokens.size(); }
};

struct BuildReport {
    std::uint64_t n_name_docs = 0;     // from KB concept names
    std::uint64_t n_mention_docs = 0;  // from linkable training mentions
    std::uint64_t n_excluded = 0;      // inputs that normalized to zero tokens
    std::vector<std::string> excluded;  // their raw strings
};

struct Posting {
    std::uint32_t doc_ord;
    std::uint32_t tf;
};

struct Index {
    std::map<Token, std::vector<Posting>> postings;  // lists sorted by doc_ord
    std::vector<NameDoc> docs;
    double avgdl = 0.0;
    double k1 = 1.2;
    double b = 0.75;
    BuildReport report;
    std::uint64_t input_fingerprint = 0;  // of the kb + training data it was built from

    std::size_t N() const { return docs.size(); }

    std::uint32_t df(const Token& t) const {
        auto it = postings.find(t);
        return it == postings.end() ? 0 : static_cast<std::uint32_t>(it->second.size());
    }

    double idf(const Token& t) const {
        double n = static_cast<double>(N());
        double d = static_cast<double>(df(t));
        return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
    }
};

struct Candidate {
    ConceptId concept_id;
    std::string matched_name;  // raw_name of the concept's best-scoring NameDoc
    double bm25 = 0.0;
};

// Fingerprint of the retrieval inputs, chained into the index artifact so
// downstream artifacts can detect mismatched data.
inline std::uint64_t fingerprint_inputs(const KnowledgeBase& kb, const Dataset& training) {
    Fingerprint fp;
    fp.update("bionorm-index-inputs");
    fp.update_u64(kb.size());
    for (const Concept& c : kb.concepts()) {
        fp.update(c.id.value);
        fp.update_u64(c.names.size());
        for (const std::string& n : c.names) fp.update(n);
    }
    fp.update_u64(training.size());
    for (const Mention& m : training.mentions) {
        fp.update(m.doc_id);
        fp.update(m.text);
        fp.update_u64(static_cast<std::uint64_t>(m.gold.kind));
        if (m.gold.is_concept()) fp.update(m.gold.id.value);
    }
    return fp.value();
}

inline Index build_index(const KnowledgeBase& kb, const Dataset& training,
                         const preprocess::PreprocessResources& resources, double k1 = 1.2,
                         double b = 0.75) {
    if (kb.empty()) throw UserError("cannot build an index from an empty knowledge base");
    Index index;
    index.k1 = k1;
    index.b = b;
    index.input_fingerprint = fingerprint_inputs(kb, training);

    auto add_doc = [&](const ConceptId& id, const std::string& raw, std::vector<Token> tokens,
                       bool from_mention) {
        if (tokens.empty()) {
            ++index.report.n_excluded;
            index.report.excluded.push_back(raw);
            return;
        }
        NameDoc doc;
        doc.doc_ord = static_cast<std::uint32_t>(index.docs.size());
        doc.concept_id = id;
        doc.raw_name = raw;
        doc.tokens = std::move(tokens);
        index.docs.push_back(std::move(doc));
        (from_mention ? index.report.n_mention_docs : index.report.n_name_docs)++;
    };

    for (const Concept& c : kb.concepts())
        for (const std::string& name : c.names)
            add_doc(c.id, name, resources.normalize_name(name), false);

    for (const Mention& m : training.mentions) {
        if (!m.gold.is_concept()) continue;  // NIL and Unknown carry no concept id
        add_doc(m.gold.id, m.text, resources.normalize_mention(m), true);
    }

    double total_len = 0.0;
    for (const NameDoc& d : index.docs) {
        total_len += static_cast<double>(d.length());
        std::map<Token, std::uint32_t> tf;
        for (const Token& t : d.tokens) ++tf[t];
        for (const auto& [term, count] : tf)
            index.postings[term].push_back({d.doc_ord, count});
    }
    index.avgdl = index.docs.empty() ? 0.0 : total_len / static_cast<double>(index.docs.size());
    // postings arrive in doc_ord order by construction; keep the invariant explicit
    for (auto& [term, list] : index.postings)
        std::sort(list.begin(), list.end(),
                  [](const Posting& x, const Posting& y) { return x.doc_ord < y.doc_ord; });
    return index;
}

// Okapi BM25 with unique-term query semantics.
inline double bm25_score(const Index& index, const std::vector<Token>& query,
                         std::uint32_t doc_ord) {
    if (doc_ord >= index.docs.size()) throw UserError("bm25_score: doc_ord out of range");
    const NameDoc& doc = index.docs[doc_ord];
    std::set<Token> unique(query.begin(), query.end());
    double len = static_cast<double>(doc.length());
    double score = 0.0;
    for (const Token& t : unique) {
        auto it = index.postings.find(t);
        if (it == index.postings.end()) continue;
        const auto& list = it->second;
        auto p = std::lower_bound(list.begin(), list.end(), doc_ord,
                                  [](const Posting& x, std::uint32_t ord) { return x.doc_ord < ord; });
        if (p == list.end() || p->doc_ord != doc_ord) continue;
        double tf = static_cast<double>(p->tf);
        double denom = tf + index.k1 * (1.0 - index.b + index.b * len / index.avgdl);
        score += index.idf(t) * tf * (index.k1 + 1.0) / denom;
    }
    return score;
}

// Scores every doc sharing a term with the query, orders by (score desc,
// doc_ord asc), collapses to distinct concepts, and returns the first k.
inline std::vector<Candidate> retrieve_candidates(const Index& index,
                                                  const std::vector<Token>& mention_tokens,
                                                  std::size_t k = 10) {
    if (k < 1) throw UserError("retrieve_candidates: k must be >= 1");
    std::set<Token> unique(mention_tokens.begin(), mention_tokens.end());

    std::map<std::uint32_t, double> scores;  // doc_ord -> accumulated score
    for (const Token& t : unique) {
        auto it = index.postings.find(t);
        if (it == index.postings.end()) continue;
        double idf = index.idf(t);
        for (const Posting& p : it->second) {
            double len = static_cast<double>(index.docs[p.doc_ord].length());
            double tf = static_cast<double>(p.tf);
            double denom = tf + index.k1 * (1.0 - index.b + index.b * len / index.avgdl);
            scores[p.doc_ord] += idf * tf * (index.k1 + 1.0) / denom;
        }
    }

    std::vector<std::pair<std::uint32_t, double>> ranked(scores.begin(), scores.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.second != y.second) return x.second > y.second;
        return x.first < y.first;
    });

    std::vector<Candidate> out;
    std::set<std::string> seen;
    for (const auto& [ord, score] : ranked) {
        const NameDoc& doc = index.docs[ord];
        if (!seen.insert(doc.concept_id.value).second) continue;
        out.push_back({doc.concept_id, doc.raw_name, score});
        if (out.size() == k) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: "BNIX" binary artifact
// ---------------------------------------------------------------------------

inline constexpr char kIndexMagic[4] = {'B', 'N', 'I', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;

inline void save_index(const Index& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot open output file: " + path);
    out.write(kIndexMagic, 4);
    binio::write_u32(out, kIndexVersion);
    binio::write_u64(out, index.input_fingerprint);
    binio::write_f64(out, index.k1);
    binio::write_f64(out, index.b);
    binio::write_f64(out, index.avgdl);

    binio::write_u64(out, index.docs.size());
    for (const NameDoc& d : index.docs) {
        binio::write_str(out, d.concept_id.value);
        binio::write_str(out, d.raw_name);
        binio::write_u64(out, d.tokens.size());
        for (const Token& t : d.tokens) binio::write_str(out, t);
    }

    binio::write_u64(out, index.postings.size());
    for (const auto& [term, list] : index.postings) {
        binio::write_str(out, term);
        binio::write_u64(out, list.size());
        for (const Posting& p : list) {
            binio::write_u32(out, p.doc_ord);
            binio::write_u32(out, p.tf);
        }
    }

    binio::write_u64(out, index.report.n_name_docs);
    binio::write_u64(out, index.report.n_mention_docs);
    binio::write_u64(out, index.report.n_excluded);
    binio::write_u64(out, index.report.excluded.size());
    for (const std::string& s : index.report.excluded) binio::write_str(out, s);
    if (!out) throw UserError("failed writing index to " + path);
}

inline Index load_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open file: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kIndexMagic, 4) != 0)
        throw UserError(path + " is not an index file");
    std::uint32_t version = binio::read_u32(in, path);
    if (version != kIndexVersion)
        throw UserError(path + ": unsupported index version " + std::to_string(version));

    Index index;
    index.input_fingerprint = binio::read_u64(in, path);
    index.k1 = binio::read_f64(in, path);
    index.b = binio::read_f64(in, path);
    index.avgdl = binio::read_f64(in, path);

    std::uint64_t n_docs = binio::read_u64(in, path);
    index.docs.reserve(n_docs);
    for (std::uint64_t i = 0; i < n_docs; ++i) {
        NameDoc d;
        d.doc_ord = static_cast<std::uint32_t>(i);
        d.concept_id = ConceptId(binio::read_str(in, path));
        d.raw_name = binio::read_str(in, path);
        std::uint64_t n_tok = binio::read_u64(in, path);
        d.tokens.reserve(n_tok);
        for (std::uint64_t j = 0; j < n_tok; ++j) d.tokens.push_back(binio::read_str(in, path));
        index.docs.push_back(std::move(d));
    }

    std::uint64_t n_terms = binio::read_u64(in, path);
    for (std::uint64_t i = 0; i < n_terms; ++i) {
        Token term = binio::read_str(in, path);
        std::uint64_t n_post = binio::read_u64(in, path);
        std::vector<Posting> list;
        list.reserve(n_post);
        for (std::uint64_t j = 0; j < n_post; ++j) {
            Posting p;
            p.doc_ord = binio::read_u32(in, path);
            p.tf = binio::read_u32(in, path);
            list.push_back(p);
        }
        index.postings.emplace(std::move(term), std::move(list));
    }

    index.report.n_name_docs = binio::read_u64(in, path);
    index.report.n_mention_docs = binio::read_u64(in, path);
    index.report.n_excluded = binio::read_u64(in, path);
    std::uint64_t n_exc = binio::read_u64(in, path);
    for (std::uint64_t i = 0; i < n_exc; ++i) index.report.excluded.push_back(binio::read_str(in, path));
    return index;
}

// Fingerprint of the index artifact itself, for chaining into checkpoints.
inline std::uint64_t index_fingerprint(const Index& index) {
    Fingerprint fp;
    fp.update("bionorm-index");
    fp.update_u64(index.input_fingerprint);
    fp.update_u64(index.N());
    fp.update_u64(static_cast<std::uint64_t>(index.report.n_excluded));
    fp.update_f64(index.k1);
    fp.update_f64(index.b);
    fp.update_f64(index.avgdl);
    for (const NameDoc& d : index.docs) {
        fp.update(d.concept_id.value);
        fp.update(d.raw_name);
        for (const Token& t : d.tokens) fp.update(t);
    }
    return fp.value();
}

}  // namespace bionorm::retrieval
