#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bionorm/ranker.hpp"
#include "support/encoder_reference.hpp"

using namespace bionorm;
using namespace bionorm::ranker;
using preprocess::Token;

namespace {

Vocab tiny_vocab() {
    Vocab v;
    for (const char* t : {"alpha", "beta", "gamma", "delta", "eps", "zeta"}) v.add(t);
    return v;
}

// Deterministic "hand-set" fill: every tensor gets distinct, asymmetric,
// non-tiny values so nothing cancels by accident.
void pattern_fill(Tensors& t) {
    int which = 0;
    for (auto& [name, mat] : t.entries()) {
        ++which;
        for (Eigen::Index i = 0; i < mat->rows(); ++i)
            for (Eigen::Index j = 0; j < mat->cols(); ++j) {
                int v = (which * 31 + static_cast<int>(i) * 7 + static_cast<int>(j) * 3) % 11 - 5;
                (*mat)(i, j) = static_cast<double>(v) / 17.0;
            }
    }
}

}  // namespace

TEST_CASE("vocabulary: specials, insertion order, unknown fallback") {
    Vocab v = tiny_vocab();
    CHECK(v.id_of("[PAD]") == Vocab::kPad);
    CHECK(v.id_of("[UNK]") == Vocab::kUnk);
    CHECK(v.id_of("[CLS]") == Vocab::kCls);
    CHECK(v.id_of("[SEP]") == Vocab::kSep);
    CHECK(v.id_of("alpha") == 4);
    CHECK(v.id_of("zeta") == 9);
    CHECK(v.id_of("never-seen") == Vocab::kUnk);
    CHECK(v.add("alpha") == 4);  // re-adding is a lookup
    CHECK(v.size() == 10);
}

TEST_CASE("build_vocab pulls tokens from names and mentions, rejects empty") {
    KnowledgeBase kb;
    kb.add({ConceptId("C1"), {"heart failure"}});
    Dataset ds;
    ds.mentions.push_back({"d1", "renal issue", std::nullopt, GoldLabel::linked(ConceptId("C1"))});
    ds.mentions.push_back({"d1", "odd nil thing", std::nullopt, GoldLabel::nil()});
    preprocess::PreprocessResources res;
    Vocab v = build_vocab(kb, ds, res);
    CHECK(v.id_of("heart") == 4);
    CHECK(v.id_of("failur") == 5);
    CHECK(v.id_of("renal") == 6);
    // NIL mentions contribute vocabulary too (their tokens are real text).
    CHECK(v.id_of("nil") != Vocab::kUnk);

    KnowledgeBase empty_kb;
    Dataset empty_ds;
    CHECK_THROWS_AS(build_vocab(empty_kb, empty_ds, res), UserError);
}

TEST_CASE("hyperparameter validation enforces the documented grid") {
    Hyperparams h;
    h.hidden = 8;
    h.layers = 1;
    h.heads = 2;
    h.max_len = 8;
    CHECK_NOTHROW(h.validate());
    SECTION("batch size off the grid") {
        h.batch_size = 48;
        CHECK_THROWS_AS(h.validate(), UserError);
        h.allow_any_batch_size = true;
        CHECK_NOTHROW(h.validate());
    }
    SECTION("heads must divide hidden") {
        h.heads = 3;
        CHECK_THROWS_AS(h.validate(), UserError);
    }
    SECTION("epochs bounded to 1..10") {
        h.epochs = 0;
        CHECK_THROWS_AS(h.validate(), UserError);
        h.epochs = 11;
        CHECK_THROWS_AS(h.validate(), UserError);
    }
    SECTION("dropout in [0,1)") {
        h.dropout = 1.0;
        CHECK_THROWS_AS(h.validate(), UserError);
        h.dropout = -0.1;
        CHECK_THROWS_AS(h.validate(), UserError);
    }
    SECTION("learning rate positive") {
        h.learning_rate = 0.0;
        CHECK_THROWS_AS(h.validate(), UserError);
    }
}

TEST_CASE("pair sequences: layout, segments, padding, truncation") {
    Vocab v = tiny_vocab();
    SECTION("basic layout") {
        PairSequence s = build_pair_sequence({"alpha", "beta"}, {"gamma"}, v, 8);
        CHECK(s.token_ids == std::vector<int>{Vocab::kCls, 4, 5, Vocab::kSep, 6, 0, 0, 0});
        CHECK(s.segment_ids == std::vector<int>{0, 0, 0, 0, 1, 0, 0, 0});
        CHECK(s.attention_mask == std::vector<int>{1, 1, 1, 1, 1, 0, 0, 0});
        CHECK(s.real_len() == 5);
    }
    SECTION("unknown tokens map to [UNK]") {
        PairSequence s = build_pair_sequence({"mystery"}, {"alpha"}, v, 6);
        CHECK(s.token_ids[1] == Vocab::kUnk);
    }
    SECTION("truncation drops from the longer side, concept first on ties") {
        // m=3, c=2, max_len=4: trim m, then tie -> trim c, then m>c -> trim m.
        PairSequence s = build_pair_sequence({"alpha", "beta", "gamma"}, {"delta", "eps"}, v, 4);
        CHECK(s.token_ids == std::vector<int>{Vocab::kCls, 4, Vocab::kSep, 7});
        CHECK(s.real_len() == 4);
    }
    SECTION("one side may be empty") {
        PairSequence s = build_pair_sequence({}, {"alpha"}, v, 4);
        CHECK(s.token_ids == std::vector<int>{Vocab::kCls, Vocab::kSep, 4, 0});
        CHECK(s.segment_ids == std::vector<int>{0, 0, 1, 0});
    }
    SECTION("errors") {
        CHECK_THROWS_AS(build_pair_sequence({}, {}, v, 8), UserError);
        CHECK_THROWS_AS(build_pair_sequence({"alpha"}, {"beta"}, v, 3), UserError);
    }
}

TEST_CASE("forward pass matches the loop-arithmetic reference") {
    SECTION("one layer, hidden 2, hand-set weights") {
        Hyperparams h;
        h.hidden = 2;
        h.layers = 1;
        h.heads = 1;
        h.max_len = 6;
        h.dropout = 0.0;
        CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);
        pattern_fill(model.params);

        PairSequence seq = build_pair_sequence({"alpha", "beta"}, {"beta"}, model.vocab, 6);
        ForwardResult got = forward(model, seq);
        encoder_ref::Output want = encoder_ref::forward(model, seq);

        REQUIRE(got.c.size() == 2);
        for (int j = 0; j < 2; ++j) {
            CHECK(std::abs(got.c(j) - want.c[static_cast<std::size_t>(j)]) < 1e-9);
            CHECK(std::abs(got.probs(j) - want.probs[static_cast<std::size_t>(j)]) < 1e-9);
            CHECK(std::abs(got.logits(j) - want.logits[static_cast<std::size_t>(j)]) < 1e-9);
        }
        CHECK(std::abs(got.probs.sum() - 1.0) < 1e-12);
    }
    SECTION("two layers, four heads, random init, several sequences") {
        Hyperparams h;
        h.hidden = 8;
        h.layers = 2;
        h.heads = 4;
        h.max_len = 10;
        h.dropout = 0.0;
        h.seed = 99;
        CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);

        for (auto& [m, c] : std::vector<std::pair<std::vector<Token>, std::vector<Token>>>{
                 {{"alpha"}, {"alpha"}},
                 {{"alpha", "beta", "gamma"}, {"delta", "eps", "zeta"}},
                 {{"zeta", "zeta", "zeta", "zeta"}, {"zeta"}},
             }) {
            PairSequence seq = build_pair_sequence(m, c, model.vocab, h.max_len);
            ForwardResult got = forward(model, seq);
            encoder_ref::Output want = encoder_ref::forward(model, seq);
            for (int j = 0; j < h.hidden; ++j)
                CHECK(std::abs(got.c(j) - want.c[static_cast<std::size_t>(j)]) < 1e-9);
            for (int j = 0; j < 2; ++j)
                CHECK(std::abs(got.probs(j) - want.probs[static_cast<std::size_t>(j)]) < 1e-9);
        }
    }
}

TEST_CASE("padding positions can never influence the result") {
    Hyperparams h;
    h.hidden = 8;
    h.layers = 1;
    h.heads = 2;
    h.max_len = 10;
    h.dropout = 0.0;
    CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);

    PairSequence clean = build_pair_sequence({"alpha", "beta"}, {"gamma"}, model.vocab, 10);
    PairSequence dirty = clean;
    for (std::size_t i = 0; i < dirty.token_ids.size(); ++i)
        if (dirty.attention_mask[i] == 0) dirty.token_ids[i] = 5;  // garbage under the mask

    ForwardResult a = forward(model, clean);
    ForwardResult b = forward(model, dirty);
    CHECK((a.c - b.c).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.probs - b.probs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax handles extreme logits and score_pair stays in (0,1)") {
    SECTION("direct softmax contracts") {
        Eigen::VectorXd big(2);
        big << 1e4, -1e4;
        Eigen::VectorXd p = softmax_stable(big);
        CHECK(std::isfinite(p(0)));
        CHECK(std::isfinite(p(1)));
        CHECK(std::abs(p.sum() - 1.0) < 1e-9);
        CHECK(p(0) > p(1));

        Eigen::VectorXd same(2);
        same << 1e4, 1e4;
        p = softmax_stable(same);
        CHECK(std::abs(p(0) - 0.5) < 1e-12);
        CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    }
    SECTION("score_pair over random models") {
        std::mt19937_64 seeds(7);
        for (int trial = 0; trial < 5; ++trial) {
            Hyperparams h;
            h.hidden = 4;
            h.layers = 1;
            h.heads = 2;
            h.max_len = 8;
            h.seed = seeds();
            CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);
            double s = score_pair(model, {"alpha", "beta"}, {"gamma", "delta"});
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    Hyperparams h;
    h.hidden = 8;
    h.layers = 1;
    h.heads = 2;
    h.max_len = 8;
    h.dropout = 0.0;

    for (std::uint64_t seed : {11ull, 12ull}) {
        h.seed = seed;
        CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);

        EncodedPair ex;
        ex.seq = build_pair_sequence({"alpha", "beta", "gamma"}, {"delta", "eps"}, model.vocab, 8);
        ex.label = static_cast<int>(seed % 2);

        Tensors grads = Tensors::zeros(h, model.vocab.size());
        example_loss_and_grad(model, ex, &grads);

        const double step = 1e-5;
        double worst = 0.0;
        auto p_entries = model.params.entries();
        auto g_entries = grads.entries();
        for (std::size_t t = 0; t < p_entries.size(); ++t) {
            Mat& p = *p_entries[t].second;
            const Mat& g = *g_entries[t].second;
            for (Eigen::Index i = 0; i < p.rows(); ++i)
                for (Eigen::Index j = 0; j < p.cols(); ++j) {
                    double saved = p(i, j);
                    p(i, j) = saved + step;
                    double up = example_loss_and_grad(model, ex, nullptr);
                    p(i, j) = saved - step;
                    double down = example_loss_and_grad(model, ex, nullptr);
                    p(i, j) = saved;
                    double numeric = (up - down) / (2.0 * step);
                    double denom = std::max({std::abs(numeric), std::abs(g(i, j)), 1e-4});
                    worst = std::max(worst, std::abs(numeric - g(i, j)) / denom);
                }
        }
        INFO("seed " << seed << " worst relative error " << worst);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("training pair construction follows the retrieval results") {
    KnowledgeBase kb;
    kb.add({ConceptId("C1"), {"heart failure", "cardiac failure"}});
    kb.add({ConceptId("C2"), {"renal failure"}});
    kb.add({ConceptId("C3"), {"liver disease"}});
    preprocess::PreprocessResources res;

    SECTION("gold retrieved: one positive with the matched name, negatives for the rest") {
        Dataset train;
        train.mentions.push_back({"d1", "heart failure", std::nullopt,
                                  GoldLabel::linked(ConceptId("C1"))});
        retrieval::Index index = retrieval::build_index(kb, Dataset{}, res);
        auto pairs = make_training_pairs(train, index, kb, res, 10);
        // Candidates: C1 and C2 share "failur"; C3 shares nothing.
        REQUIRE(pairs.size() == 2);
        CHECK(pairs[0].label == 1);
        CHECK(pairs[0].concept_tokens == std::vector<Token>{"heart", "failur"});
        CHECK(pairs[1].label == 0);
        CHECK(pairs[1].concept_tokens == std::vector<Token>{"renal", "failur"});
    }
    SECTION("gold missed by retrieval: positive falls back to the preferred name") {
        Dataset train;
        train.mentions.push_back({"d1", "renal failure", std::nullopt,
                                  GoldLabel::linked(ConceptId("C3"))});  // gold shares no token
        retrieval::Index index = retrieval::build_index(kb, Dataset{}, res);
        auto pairs = make_training_pairs(train, index, kb, res, 10);
        // C1, C2 retrieved as negatives; positive comes from C3's preferred name.
        REQUIRE(pairs.size() == 3);
        CHECK(pairs[0].label == 1);
        CHECK(pairs[0].concept_tokens == std::vector<Token>{"liver", "diseas"});
        CHECK(pairs[1].label == 0);
        CHECK(pairs[2].label == 0);
    }
    SECTION("NIL mentions contribute nothing") {
        Dataset train;
        train.mentions.push_back({"d1", "heart failure", std::nullopt, GoldLabel::nil()});
        retrieval::Index index = retrieval::build_index(kb, Dataset{}, res);
        CHECK(make_training_pairs(train, index, kb, res, 10).empty());
    }
    SECTION("gold concept missing from the KB is an error") {
        Dataset train;
        train.mentions.push_back({"d1", "heart failure", std::nullopt,
                                  GoldLabel::linked(ConceptId("C404"))});
        retrieval::Index index = retrieval::build_index(kb, Dataset{}, res);
        CHECK_THROWS_AS(make_training_pairs(train, index, kb, res, 10), UserError);
    }
}

namespace {

// Linearly separable toy task: positives pair a mention with its own token,
// negatives with a disjoint token set.
std::vector<PairExample> toy_pairs(int n) {
    std::vector<PairExample> pairs;
    for (int i = 0; i < n; ++i) {
        pairs.push_back({{"alpha", "beta"}, {"alpha", "beta"}, 1});
        pairs.push_back({{"alpha", "beta"}, {"gamma", "delta"}, 0});
    }
    return pairs;
}

}  // namespace

TEST_CASE("training lowers the loss on a separable toy task") {
    Hyperparams h;
    h.hidden = 8;
    h.layers = 1;
    h.heads = 2;
    h.max_len = 8;
    h.batch_size = 16;
    h.epochs = 5;
    h.learning_rate = 1e-3;
    h.dropout = 0.1;
    h.seed = 5;
    CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);
    TrainResult r = train(model, toy_pairs(16));
    REQUIRE(r.epochs.size() == 5);
    CHECK(r.epochs.back().mean_loss < r.epochs.front().mean_loss);
    CHECK(r.best_epoch == 5);  // no dev set: last epoch kept
    for (const auto& e : r.epochs) CHECK_FALSE(e.dev_accuracy.has_value());
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    auto run = [](std::uint64_t seed) {
        Hyperparams h;
        h.hidden = 8;
        h.layers = 1;
        h.heads = 2;
        h.max_len = 8;
        h.batch_size = 16;
        h.epochs = 2;
        h.dropout = 0.1;
        h.seed = seed;
        CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);
        train(model, toy_pairs(8));
        return checkpoint_fingerprint(model);
    };
    CHECK(run(3) == run(3));
    CHECK(run(3) != run(4));
}

TEST_CASE("dev evaluation drives best-epoch selection") {
    Hyperparams h;
    h.hidden = 8;
    h.layers = 1;
    h.heads = 2;
    h.max_len = 8;
    h.batch_size = 16;
    h.epochs = 4;
    h.dropout = 0.0;
    CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);

    // A rigged evaluator that peaks at epoch 2: the kept parameters must be
    // the ones seen at that call, not the final ones.
    int call = 0;
    std::uint64_t fp_at_peak = 0;
    TrainResult r = train(model, toy_pairs(8), [&](const CrossEncoderModel& m) {
        ++call;
        if (call == 2) fp_at_peak = checkpoint_fingerprint(m);
        return call == 2 ? 1.0 : 0.1;
    });
    CHECK(r.best_epoch == 2);
    REQUIRE(r.epochs.size() == 4);
    CHECK(r.epochs[1].dev_accuracy.value() == 1.0);
    CHECK(checkpoint_fingerprint(model) == fp_at_peak);
}

TEST_CASE("train rejects an empty pair list") {
    Hyperparams h;
    h.hidden = 8;
    h.layers = 1;
    h.heads = 2;
    h.max_len = 8;
    CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);
    CHECK_THROWS_AS(train(model, {}), UserError);
}

TEST_CASE("rank_candidates orders by score with BM25 rank as tie-break") {
    Hyperparams h;
    h.hidden = 8;
    h.layers = 1;
    h.heads = 2;
    h.max_len = 8;
    h.dropout = 0.0;
    CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);
    preprocess::PreprocessResources res;

    std::vector<retrieval::Candidate> cands = {
        {ConceptId("C1"), "alpha beta", 3.0},
        {ConceptId("C2"), "alpha beta", 2.0},   // identical name => identical score
        {ConceptId("C3"), "gamma delta", 1.0},
    };
    auto ranked = rank_candidates(model, {"alpha"}, cands, res);
    REQUIRE(ranked.size() == 3);
    // C1/C2 tie on score; original retrieval order must hold between them.
    auto pos = [&](const char* id) {
        for (std::size_t i = 0; i < ranked.size(); ++i)
            if (ranked[i].candidate.concept_id.value == id) return i;
        return std::size_t{99};
    };
    CHECK(pos("C1") < pos("C2"));
    CHECK(ranked[0].score >= ranked[1].score);
    CHECK(ranked[1].score >= ranked[2].score);
}

TEST_CASE("checkpoints round-trip exactly") {
    Hyperparams h;
    h.hidden = 8;
    h.layers = 2;
    h.heads = 2;
    h.max_len = 8;
    h.seed = 21;
    CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);
    model.index_fingerprint = 0xdeadbeefcafef00dull;

    auto path = (std::filesystem::temp_directory_path() / "bionorm_test_ckpt.bin").string();
    save_checkpoint(model, path);
    CrossEncoderModel back = load_checkpoint(path);

    CHECK(back.index_fingerprint == model.index_fingerprint);
    CHECK(back.hyper.hidden == 8);
    CHECK(back.hyper.layers == 2);
    CHECK(back.hyper.seed == 21);
    CHECK(back.vocab.size() == model.vocab.size());
    CHECK(checkpoint_fingerprint(back) == checkpoint_fingerprint(model));
    // Identical behaviour, not just identical bytes.
    CHECK(score_pair(back, {"alpha"}, {"beta"}) == score_pair(model, {"alpha"}, {"beta"}));

    SECTION("truncated files are rejected") {
        std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
        CHECK_THROWS_AS(load_checkpoint(path), UserError);
    }
    SECTION("wrong magic is rejected") {
        std::ofstream out(path, std::ios::binary);
        out << "GARBAGEGARBAGE";
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path), UserError);
    }
    std::remove(path.c_str());
}

TEST_CASE("gaussian initialization is seed-deterministic with the expected scale") {
    GaussianSampler a(123), b(123), c(321);
    bool any_diff = false;
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double x = a(0.02);
        CHECK(x == b(0.02));
        if (x != c(0.02)) any_diff = true;
        sum += x;
        sq += x * x;
    }
    CHECK(any_diff);
    double mean = sum / n;
    double stddev = std::sqrt(sq / n - mean * mean);
    CHECK(std::abs(mean) < 0.001);
    CHECK(std::abs(stddev - 0.02) < 0.002);

    // Biases start zero, layer-norm gains one, weights non-zero.
    Hyperparams h;
    h.hidden = 8;
    h.layers = 1;
    h.heads = 2;
    h.max_len = 8;
    CrossEncoderModel model = CrossEncoderModel::create(tiny_vocab(), h);
    CHECK(model.params.layers[0].bq.isZero());
    CHECK(model.params.cls_b.isZero());
    CHECK(model.params.layers[0].ln1_g.isOnes());
    CHECK_FALSE(model.params.tok.isZero());
    CHECK_FALSE(model.params.layers[0].wq.isZero());
}
