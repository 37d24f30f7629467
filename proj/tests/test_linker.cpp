#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bionorm/linker.hpp"

using namespace bionorm;
using namespace bionorm::linker;
using preprocess::Token;

namespace {

ScoredMention linkable(double top, bool top_is_gold) {
    ScoredMention s;
    s.has_candidates = true;
    s.top_score = top;
    s.top_is_gold = top_is_gold;
    return s;
}

ScoredMention nil_gold(double top) {
    ScoredMention s;
    s.has_candidates = true;
    s.top_score = top;
    s.gold_is_nil = true;
    return s;
}

ScoredMention no_candidates(bool gold_nil) {
    ScoredMention s;
    s.gold_is_nil = gold_nil;
    return s;
}

// Independent check: dense 1e-3 grid, accuracy recounted from first
// principles (prediction is NIL unless the top score strictly exceeds tau).
std::pair<double, std::size_t> grid_best(const std::vector<ScoredMention>& scored) {
    double best_tau = 0.0;
    std::size_t best = 0;
    for (int i = 0; i <= 1000; ++i) {
        double tau = static_cast<double>(i) / 1000.0;
        std::size_t correct = 0;
        for (const auto& s : scored) {
            bool links = s.has_candidates && s.top_score > tau;
            if (links ? s.top_is_gold : s.gold_is_nil) ++correct;
        }
        if (correct > best) {
            best = correct;
            best_tau = tau;
        }
    }
    return {best_tau, best};
}

// True iff no observed top score separates the two thresholds, i.e. they sit
// in the same step of the accuracy function.
bool same_gap(const std::vector<ScoredMention>& scored, double a, double b) {
    double lo = std::min(a, b), hi = std::max(a, b);
    for (const auto& s : scored)
        if (s.has_candidates && s.top_score > lo && s.top_score <= hi &&
            s.top_score != lo && s.top_score != hi)
            return false;
    return true;
}

}  // namespace

TEST_CASE("threshold choice matches a dense-grid maximizer on fixtures") {
    SECTION("all linkable: zero threshold is optimal") {
        std::vector<ScoredMention> scored = {linkable(0.9, true), linkable(0.8, true),
                                             linkable(0.3, false)};
        NilThreshold t = choose_tau(scored);
        auto [grid_tau, grid_correct] = grid_best(scored);
        CHECK(accuracy_count_at_tau(scored, t.tau) == grid_correct);
        CHECK(same_gap(scored, t.tau, grid_tau));
        CHECK(t.tau == 0.0);
    }
    SECTION("all NIL: threshold rises to reject every candidate") {
        std::vector<ScoredMention> scored = {nil_gold(0.7), nil_gold(0.2), no_candidates(true)};
        NilThreshold t = choose_tau(scored);
        auto [grid_tau, grid_correct] = grid_best(scored);
        CHECK(accuracy_count_at_tau(scored, t.tau) == 3);
        CHECK(accuracy_count_at_tau(scored, t.tau) == grid_correct);
        CHECK(same_gap(scored, t.tau, grid_tau));
        CHECK(t.tau == 0.7);  // smallest tau achieving the optimum
    }
    SECTION("mixed: interior threshold separates the two score bands") {
        std::vector<ScoredMention> scored = {linkable(0.9, true), linkable(0.85, true),
                                             nil_gold(0.4), nil_gold(0.3), no_candidates(true)};
        NilThreshold t = choose_tau(scored);
        auto [grid_tau, grid_correct] = grid_best(scored);
        CHECK(accuracy_count_at_tau(scored, t.tau) == 5);
        CHECK(accuracy_count_at_tau(scored, t.tau) == grid_correct);
        CHECK(same_gap(scored, t.tau, grid_tau));
        CHECK(t.tau == 0.4);
    }
    SECTION("randomized fixtures never fall below the grid optimum") {
        std::mt19937_64 rng(555);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<ScoredMention> scored;
            std::size_t n = 1 + rng() % 20;
            for (std::size_t i = 0; i < n; ++i) {
                double s = static_cast<double>(rng() % 1000) / 999.0;
                switch (rng() % 3) {
                    case 0: scored.push_back(linkable(s, rng() % 2 == 0)); break;
                    case 1: scored.push_back(nil_gold(s)); break;
                    default: scored.push_back(no_candidates(rng() % 2 == 0)); break;
                }
            }
            NilThreshold t = choose_tau(scored);
            auto [grid_tau, grid_correct] = grid_best(scored);
            INFO("trial " << trial);
            // Scores are multiples of 1/999, so every accuracy step is wider
            // than the 1e-3 grid spacing: the two maximizers must agree on the
            // count and land in the same inter-score gap, with the exhaustive
            // scan sitting at the gap's left edge.
            REQUIRE(accuracy_count_at_tau(scored, t.tau) == grid_correct);
            CHECK(same_gap(scored, t.tau, grid_tau));
            CHECK(t.tau <= grid_tau);
        }
    }
    SECTION("empty dev set is an error") {
        CHECK_THROWS_AS(choose_tau({}), UserError);
    }
}

TEST_CASE("NIL prediction count is non-decreasing in tau") {
    std::mt19937_64 rng(99);
    std::vector<ScoredMention> scored;
    for (int i = 0; i < 60; ++i)
        scored.push_back(linkable(static_cast<double>(rng() % 1000) / 999.0, rng() % 2 == 0));
    for (int i = 0; i < 20; ++i) scored.push_back(no_candidates(true));

    std::size_t prev = 0;
    for (int i = 0; i < 100; ++i) {
        double tau = static_cast<double>(i) / 99.0;
        std::size_t nil_count = 0;
        for (const auto& s : scored)
            if (!s.has_candidates || !(s.top_score > tau)) ++nil_count;
        CHECK(nil_count >= prev);
        prev = nil_count;
    }
    CHECK(prev == scored.size());  // at tau = 1 everything is NIL
}

namespace {

struct SmallWorld {
    KnowledgeBase kb;
    Dataset dev;
    preprocess::PreprocessResources res;
    retrieval::Index index;
    ranker::CrossEncoderModel model;

    SmallWorld() {
        kb.add({ConceptId("C1"), {"alpha disease"}});
        kb.add({ConceptId("C2"), {"beta disorder"}});
        kb.add({ConceptId("C3"), {"gamma syndrome"}});
        dev.mentions.push_back({"d1", "alpha disease", std::nullopt,
                                GoldLabel::linked(ConceptId("C1"))});
        dev.mentions.push_back({"d1", "beta disorder", std::nullopt,
                                GoldLabel::linked(ConceptId("C2"))});
        dev.mentions.push_back({"d2", "qqq zzz", std::nullopt, GoldLabel::nil()});
        index = retrieval::build_index(kb, Dataset{}, res);
        ranker::Hyperparams h;
        h.hidden = 8;
        h.layers = 1;
        h.heads = 2;
        h.max_len = 8;
        h.dropout = 0.0;
        h.seed = 17;
        model = ranker::CrossEncoderModel::create(ranker::build_vocab(kb, dev, res), h);
    }

    LinkPipeline pipeline(double tau) const {
        LinkPipeline p;
        p.index = &index;
        p.model = &model;
        p.resources = &res;
        p.tau.tau = tau;
        return p;
    }
};

}  // namespace

TEST_CASE("link applies retrieval, ranking, and the strict threshold rule") {
    SmallWorld w;
    SECTION("tau 0 links every mention with candidates") {
        auto d = link(w.dev.mentions[0], w.pipeline(0.0));
        CHECK(d.predicted.is_concept());
        CHECK(d.score > 0.0);
        CHECK(d.candidate_dump.empty());
    }
    SECTION("unmatchable tokens give NIL with score 0") {
        auto d = link(w.dev.mentions[2], w.pipeline(0.0));
        CHECK(d.predicted.is_nil());
        CHECK(d.score == 0.0);
    }
    SECTION("threshold equal to the top score forces NIL (strict >)") {
        auto first = link(w.dev.mentions[0], w.pipeline(0.0));
        auto d = link(w.dev.mentions[0], w.pipeline(first.score));
        CHECK(d.predicted.is_nil());
        CHECK(d.score == first.score);  // score reported regardless of the decision
    }
    SECTION("tau 1 forces NIL everywhere") {
        for (const auto& m : w.dev.mentions) {
            auto d = link(m, w.pipeline(1.0));
            CHECK(d.predicted.is_nil());
        }
    }
    SECTION("candidate dump is kept on request") {
        LinkPipeline p = w.pipeline(0.0);
        p.keep_candidate_dump = true;
        auto d = link(w.dev.mentions[0], p);
        CHECK_FALSE(d.candidate_dump.empty());
    }
    SECTION("link_dataset preserves order and size") {
        auto ds = link_dataset(w.dev, w.pipeline(0.0));
        REQUIRE(ds.size() == 3);
        CHECK(ds[0].mention_text == "alpha disease");
        CHECK(ds[2].predicted.is_nil());
    }
}

TEST_CASE("learn_nil_threshold agrees with the grid on a live pipeline") {
    SmallWorld w;
    NilThreshold t = learn_nil_threshold(w.model, w.index, w.dev, w.res);
    auto scored = score_dataset(w.dev, w.pipeline(0.0));
    auto [grid_tau, grid_correct] = grid_best(scored);
    CHECK(accuracy_count_at_tau(scored, t.tau) >= grid_correct);
    CHECK(same_gap(scored, t.tau, grid_tau));

    CHECK_THROWS_AS(learn_nil_threshold(w.model, w.index, Dataset{}, w.res), UserError);
}

TEST_CASE("evaluate counts exact concept matches and NIL agreement") {
    Dataset gold;
    gold.mentions.push_back({"d", "a", std::nullopt, GoldLabel::linked(ConceptId("C1"))});
    gold.mentions.push_back({"d", "b", std::nullopt, GoldLabel::linked(ConceptId("C2"))});
    gold.mentions.push_back({"d", "c", std::nullopt, GoldLabel::nil()});

    std::vector<LinkDecision> dec(3);
    dec[0].predicted = GoldLabel::linked(ConceptId("C1"));  // right
    dec[1].predicted = GoldLabel::linked(ConceptId("C9"));  // wrong concept
    dec[2].predicted = GoldLabel::nil();                    // right
    CHECK(evaluate(dec, gold) == Catch::Approx(2.0 / 3.0));

    SECTION("NIL prediction on a linkable mention is simply wrong") {
        dec[0].predicted = GoldLabel::nil();
        CHECK(evaluate(dec, gold) == Catch::Approx(1.0 / 3.0));
    }
    SECTION("size mismatch is an error") {
        dec.pop_back();
        CHECK_THROWS_AS(evaluate(dec, gold), UserError);
    }
    SECTION("unannotated gold is an error") {
        gold.mentions[1].gold = GoldLabel::unknown();
        CHECK_THROWS_AS(evaluate(dec, gold), UserError);
    }
}

TEST_CASE("eval report tallies NIL counts on both sides") {
    Dataset gold;
    gold.mentions.push_back({"d", "a", std::nullopt, GoldLabel::linked(ConceptId("C1"))});
    gold.mentions.push_back({"d", "b", std::nullopt, GoldLabel::nil()});
    std::vector<LinkDecision> dec(2);
    dec[0].predicted = GoldLabel::nil();
    dec[1].predicted = GoldLabel::nil();
    EvalReport r = make_eval_report(dec, gold);
    CHECK(r.n == 2);
    CHECK(r.n_nil_gold == 1);
    CHECK(r.n_nil_pred == 2);
    CHECK(r.accuracy == Catch::Approx(0.5));
}

TEST_CASE("train/dev split holds out the last tenth, at least one mention") {
    Dataset d;
    for (int i = 0; i < 20; ++i)
        d.mentions.push_back({"d", "m" + std::to_string(i), std::nullopt, GoldLabel::nil()});
    auto [train, dev] = split_train_dev(d);
    CHECK(train.size() == 18);
    CHECK(dev.size() == 2);
    CHECK(train.split_tag == SplitTag::Train);
    CHECK(dev.split_tag == SplitTag::Dev);
    CHECK(dev.mentions.front().text == "m18");

    Dataset tiny;
    for (int i = 0; i < 5; ++i)
        tiny.mentions.push_back({"d", "m" + std::to_string(i), std::nullopt, GoldLabel::nil()});
    auto [t2, d2] = split_train_dev(tiny);
    CHECK(t2.size() == 4);
    CHECK(d2.size() == 1);

    Dataset one;
    one.mentions.push_back({"d", "m", std::nullopt, GoldLabel::nil()});
    CHECK_THROWS_AS(split_train_dev(one), UserError);
}

TEST_CASE("threshold files round-trip and validate") {
    auto path = (std::filesystem::temp_directory_path() / "bionorm_test_tau.json").string();
    save_threshold(NilThreshold{0.375}, 111, 222, path);
    StoredThreshold st = load_threshold(path);
    CHECK(st.tau.tau == 0.375);
    CHECK(st.checkpoint_fingerprint == 111);
    CHECK(st.index_fingerprint == 222);

    SECTION("tau outside [0,1] is rejected") {
        std::ofstream out(path);
        out << "{\"tau\": 1.5}";
        out.close();
        CHECK_THROWS_AS(load_threshold(path), UserError);
    }
    SECTION("malformed json is rejected") {
        std::ofstream out(path);
        out << "{tau:";
        out.close();
        CHECK_THROWS_AS(load_threshold(path), UserError);
    }
    SECTION("missing tau is rejected") {
        std::ofstream out(path);
        out << "{\"other\": 1}";
        out.close();
        CHECK_THROWS_AS(load_threshold(path), UserError);
    }
    std::remove(path.c_str());
}

TEST_CASE("prediction files carry one json object per decision") {
    auto path = (std::filesystem::temp_directory_path() / "bionorm_test_preds.jsonl").string();
    std::vector<LinkDecision> dec(2);
    dec[0] = {"d1", "heart failure", GoldLabel::linked(ConceptId("C1")), 0.9, {}};
    dec[1] = {"d2", "odd thing", GoldLabel::nil(), 0.05, {}};
    save_predictions(dec, path);

    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    auto obj = nlohmann::json::parse(line);
    CHECK(obj["doc_id"] == "d1");
    CHECK(obj["mention"] == "heart failure");
    CHECK(obj["predicted"] == "C1");
    CHECK(obj["score"] == 0.9);
    REQUIRE(std::getline(in, line));
    obj = nlohmann::json::parse(line);
    CHECK(obj["predicted"] == "NIL");
    REQUIRE_FALSE(std::getline(in, line));
    std::remove(path.c_str());
}
