#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bionorm/core.hpp"
#include "bionorm/preprocess.hpp"
#include "bionorm/ranker.hpp"
#include "bionorm/retrieval.hpp"

namespace bionorm::linker {

struct NilThreshold {
    double tau = 0.0;  // in [0,1]
};

struct LinkDecision {
    std::string doc_id;
    std::string mention_text;
    GoldLabel predicted;  // Concept or Nil
    double score = 0.0;   // 0 when no candidates existed
    std::vector<ranker::RankedCandidate> candidate_dump;  // optional diagnostics
};

struct LinkPipeline {
    const retrieval::Index* index = nullptr;
    const ranker::CrossEncoderModel* model = nullptr;
    const preprocess::PreprocessResources* resources = nullptr;
    NilThreshold tau;
    std::size_t top_k = 10;
    bool keep_candidate_dump = false;
};

// Retrieve, rank, and apply the strict score > tau rule; no candidates means
// NIL with score 0.
inline LinkDecision link(const Mention& mention, const LinkPipeline& pipeline) {
    LinkDecision d;
    d.doc_id = mention.doc_id;
    d.mention_text = mention.text;

    std::vector<preprocess::Token> tokens = pipeline.resources->normalize_mention(mention);
    std::vector<retrieval::Candidate> cands =
        tokens.empty() ? std::vector<retrieval::Candidate>{}
                       : retrieval::retrieve_candidates(*pipeline.index, tokens, pipeline.top_k);
    if (cands.empty()) {
        d.predicted = GoldLabel::nil();
        d.score = 0.0;
        return d;
    }
    std::vector<ranker::RankedCandidate> ranked =
        ranker::rank_candidates(*pipeline.model, tokens, cands, *pipeline.resources);
    const ranker::RankedCandidate& best = ranked.front();
    d.score = best.score;
    d.predicted = best.score > pipeline.tau.tau ? GoldLabel::linked(best.candidate.concept_id)
                                                : GoldLabel::nil();
    if (pipeline.keep_candidate_dump) d.candidate_dump = std::move(ranked);
    return d;
}

inline std::vector<LinkDecision> link_dataset(const Dataset& ds, const LinkPipeline& pipeline) {
    std::vector<LinkDecision> out;
    out.reserve(ds.size());
    for (const Mention& m : ds.mentions) out.push_back(link(m, pipeline));
    return out;
}

inline double evaluate(const std::vector<LinkDecision>& decisions, const Dataset& gold) {
    if (decisions.size() != gold.size())
        throw UserError("evaluate: " + std::to_string(decisions.size()) + " decisions vs " +
                        std::to_string(gold.size()) + " gold mentions");
    gold.require_no_unknown("evaluate");
    if (decisions.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const GoldLabel& p = decisions[i].predicted;
        const GoldLabel& g = gold.mentions[i].gold;
        if ((p.is_nil() && g.is_nil()) || (p.is_concept() && g.is_concept() && p.id == g.id))
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(decisions.size());
}

// ---------------------------------------------------------------------------
// Threshold learning
// ---------------------------------------------------------------------------

// What threshold selection needs to know about one scored dev mention.
struct ScoredMention {
    bool has_candidates = false;
    double top_score = 0.0;
    bool top_is_gold = false;  // head candidate equals the gold concept
    bool gold_is_nil = false;
};

// Scores each dev mention once through the full pipeline (tau plays no role
// here: only (c*, s) matters).
inline std::vector<ScoredMention> score_dataset(const Dataset& dev, const LinkPipeline& pipeline) {
    dev.require_no_unknown("threshold learning");
    std::vector<ScoredMention> out;
    out.reserve(dev.size());
    for (const Mention& m : dev.mentions) {
        ScoredMention s;
        s.gold_is_nil = m.gold.is_nil();
        std::vector<preprocess::Token> tokens = pipeline.resources->normalize_mention(m);
        std::vector<retrieval::Candidate> cands =
            tokens.empty() ? std::vector<retrieval::Candidate>{}
                           : retrieval::retrieve_candidates(*pipeline.index, tokens, pipeline.top_k);
        if (!cands.empty()) {
            std::vector<ranker::RankedCandidate> ranked =
                ranker::rank_candidates(*pipeline.model, tokens, cands, *pipeline.resources);
            s.has_candidates = true;
            s.top_score = ranked.front().score;
            s.top_is_gold = m.gold.is_concept() && ranked.front().candidate.concept_id == m.gold.id;
        }
        out.push_back(s);
    }
    return out;
}

inline std::size_t accuracy_count_at_tau(const std::vector<ScoredMention>& scored, double tau) {
    std::size_t correct = 0;
    for (const ScoredMention& s : scored) {
        bool predict_nil = !s.has_candidates || !(s.top_score > tau);
        if (predict_nil ? s.gold_is_nil : s.top_is_gold) ++correct;
    }
    return correct;
}

// Exhaustive scan over {0} ∪ {observed top scores} ∪ {1}: dev accuracy as a
// function of tau is a step function that only changes at observed scores,
// so this candidate set contains a global maximizer. Ties go to the smallest
// tau.
inline NilThreshold choose_tau(const std::vector<ScoredMention>& scored) {
    if (scored.empty()) throw UserError("cannot learn a NIL threshold from an empty development set");
    std::set<double> taus = {0.0, 1.0};
    for (const ScoredMention& s : scored)
        if (s.has_candidates) taus.insert(s.top_score);

    double best_tau = 0.0;
    std::size_t best_correct = 0;
    bool first = true;
    for (double t : taus) {  // std::set iterates ascending, so ties keep the smallest
        std::size_t c = accuracy_count_at_tau(scored, t);
        if (first || c > best_correct) {
            first = false;
            best_correct = c;
            best_tau = t;
        }
    }
    return NilThreshold{best_tau};
}

inline NilThreshold learn_nil_threshold(const ranker::CrossEncoderModel& model,
                                        const retrieval::Index& index, const Dataset& dev,
                                        const preprocess::PreprocessResources& resources,
                                        std::size_t top_k = 10) {
    if (dev.size() == 0) throw UserError("cannot learn a NIL threshold from an empty development set");
    LinkPipeline pipeline;
    pipeline.index = &index;
    pipeline.model = &model;
    pipeline.resources = &resources;
    pipeline.top_k = top_k;
    return choose_tau(score_dataset(dev, pipeline));
}

// Last 10% of the training set by position (at least one mention) serves as
// the held-out dev split when no explicit dev file is given.
inline std::pair<Dataset, Dataset> split_train_dev(const Dataset& training) {
    if (training.size() < 2)
        throw UserError("training dataset too small to hold out a development split");
    std::size_t dev_n = std::max<std::size_t>(1, training.size() / 10);
    std::size_t train_n = training.size() - dev_n;
    Dataset train_part, dev_part;
    train_part.split_tag = SplitTag::Train;
    dev_part.split_tag = SplitTag::Dev;
    train_part.mentions.assign(training.mentions.begin(),
                               training.mentions.begin() + static_cast<std::ptrdiff_t>(train_n));
    dev_part.mentions.assign(training.mentions.begin() + static_cast<std::ptrdiff_t>(train_n),
                             training.mentions.end());
    return {std::move(train_part), std::move(dev_part)};
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline void save_predictions(const std::vector<LinkDecision>& decisions, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot open output file: " + path);
    for (const LinkDecision& d : decisions) {
        nlohmann::json obj;
        obj["doc_id"] = d.doc_id;
        obj["mention"] = d.mention_text;
        obj["predicted"] = d.predicted.is_nil() ? "NIL" : d.predicted.id.value;
        obj["score"] = d.score;
        out << obj.dump() << "\n";
    }
    if (!out) throw UserError("failed writing predictions to " + path);
}

struct EvalReport {
    double accuracy = 0.0;
    std::size_t n = 0;
    std::size_t n_nil_gold = 0;
    std::size_t n_nil_pred = 0;
};

inline EvalReport make_eval_report(const std::vector<LinkDecision>& decisions, const Dataset& gold) {
    EvalReport r;
    r.accuracy = evaluate(decisions, gold);
    r.n = decisions.size();
    r.n_nil_gold = gold.unlinkable_count();
    for (const LinkDecision& d : decisions)
        if (d.predicted.is_nil()) ++r.n_nil_pred;
    return r;
}

inline void save_eval_report(const EvalReport& r, std::ostream& out) {
    nlohmann::json obj;
    obj["accuracy"] = r.accuracy;
    obj["n"] = r.n;
    obj["n_nil_gold"] = r.n_nil_gold;
    obj["n_nil_pred"] = r.n_nil_pred;
    out << obj.dump() << "\n";
}

// ---------------------------------------------------------------------------
// Threshold persistence (JSON, with artifact chain fingerprints)
// ---------------------------------------------------------------------------

inline void save_threshold(const NilThreshold& tau, std::uint64_t checkpoint_fp,
                           std::uint64_t index_fp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot open output file: " + path);
    nlohmann::json obj;
    obj["tau"] = tau.tau;
    obj["checkpoint_fingerprint"] = checkpoint_fp;
    obj["index_fingerprint"] = index_fp;
    out << obj.dump(2) << "\n";
}

struct StoredThreshold {
    NilThreshold tau;
    std::uint64_t checkpoint_fingerprint = 0;
    std::uint64_t index_fingerprint = 0;
};

inline StoredThreshold load_threshold(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open file: " + path);
    nlohmann::json obj;
    try {
        in >> obj;
    } catch (const nlohmann::json::parse_error& e) {
        throw UserError(path + ": malformed threshold file: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("tau") || !obj["tau"].is_number())
        throw UserError(path + ": threshold file must contain a numeric \"tau\"");
    StoredThreshold st;
    st.tau.tau = obj["tau"].get<double>();
    if (st.tau.tau < 0.0 || st.tau.tau > 1.0)
        throw UserError(path + ": tau must lie in [0,1]");
    if (obj.contains("checkpoint_fingerprint"))
        st.checkpoint_fingerprint = obj["checkpoint_fingerprint"].get<std::uint64_t>();
    if (obj.contains("index_fingerprint"))
        st.index_fingerprint = obj["index_fingerprint"].get<std::uint64_t>();
    return st;
}

}  // namespace bionorm::linker
