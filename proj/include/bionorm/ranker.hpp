#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "bionorm/binio.hpp"
#include "bionorm/core.hpp"
#include "bionorm/fingerprint.hpp"
#include "bionorm/preprocess.hpp"
#include "bionorm/retrieval.hpp"

namespace bionorm::ranker {

using preprocess::Token;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;

    Vocab() {
        for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) add(s);
    }

    int add(const std::string& token) {
        auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
        if (inserted) tokens_.push_back(token);
        return it->second;
    }

    int id_of(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    const std::string& token_of(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// Specials + every normalized token from KB names and training mentions, in
// first-seen order.
inline Vocab build_vocab(const KnowledgeBase& kb, const Dataset& training,
                         const preprocess::PreprocessResources& resources) {
    Vocab vocab;
    for (const Concept& c : kb.concepts())
        for (const std::string& name : c.names)
            for (const Token& t : resources.normalize_name(name)) vocab.add(t);
    for (const Mention& m : training.mentions)
        for (const Token& t : resources.normalize_mention(m)) vocab.add(t);
    if (vocab.size() == 4)
        throw UserError("vocabulary is empty: no tokens survived normalization");
    return vocab;
}

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

struct Hyperparams {
    int hidden = 64;        // H
    int layers = 2;         // L
    int heads = 4;          // A
    int max_len = 32;
    int batch_size = 16;    // 16 or 32
    double learning_rate = 1e-3;  // 2e-5 is the documented fine-tuning value
    int epochs = 10;        // 1..10; best epoch kept when a dev set is given
    std::uint64_t seed = 1;
    double dropout = 0.1;
    bool allow_any_batch_size = false;  // escape hatch for tiny test runs

    void validate() const {
        if (hidden < 1) throw UserError("hidden size must be positive");
        if (layers < 1) throw UserError("layer count must be positive");
        if (heads < 1 || hidden % heads != 0)
            throw UserError("head count must be positive and divide the hidden size");
        if (max_len < 4) throw UserError("max_len must be at least 4");
        if (!allow_any_batch_size && batch_size != 16 && batch_size != 32)
            throw UserError("batch_size must be 16 or 32");
        if (batch_size < 1) throw UserError("batch_size must be positive");
        if (!(learning_rate > 0.0)) throw UserError("learning_rate must be positive");
        if (epochs < 1 || epochs > 10) throw UserError("epochs must be between 1 and 10");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw UserError("dropout must be in [0,1)");
    }
};

// ---------------------------------------------------------------------------
// Input sequences
// ---------------------------------------------------------------------------

struct PairSequence {
    std::vector<int> token_ids;      // length max_len, [PAD]-padded
    std::vector<int> segment_ids;    // 0 through the [SEP], 1 on concept tokens, 0 on pads
    std::vector<int> attention_mask; // 1 on real tokens

    int real_len() const {
        return static_cast<int>(std::count(attention_mask.begin(), attention_mask.end(), 1));
    }
};

// [CLS] m [SEP] c, padded to max_len. Over-long inputs lose tokens from the
// right of whichever side is currently longer (the concept side on ties).
inline PairSequence build_pair_sequence(const std::vector<Token>& mention_tokens,
                                        const std::vector<Token>& concept_tokens,
                                        const Vocab& vocab, int max_len) {
    if (max_len < 4) throw UserError("max_len must be at least 4");
    if (mention_tokens.empty() && concept_tokens.empty())
        throw UserError("cannot build a sequence from two empty token lists");

    std::size_t m = mention_tokens.size();
    std::size_t c = concept_tokens.size();
    while (2 + m + c > static_cast<std::size_t>(max_len)) {
        if (m > c)
            --m;
        else
            --c;
    }

    PairSequence seq;
    seq.token_ids.reserve(static_cast<std::size_t>(max_len));
    seq.token_ids.push_back(Vocab::kCls);
    for (std::size_t i = 0; i < m; ++i) seq.token_ids.push_back(vocab.id_of(mention_tokens[i]));
    seq.token_ids.push_back(Vocab::kSep);
    for (std::size_t i = 0; i < c; ++i) seq.token_ids.push_back(vocab.id_of(concept_tokens[i]));

    int real = static_cast<int>(seq.token_ids.size());
    seq.token_ids.resize(static_cast<std::size_t>(max_len), Vocab::kPad);
    seq.segment_ids.assign(static_cast<std::size_t>(max_len), 0);
    for (std::size_t i = 2 + m; i < static_cast<std::size_t>(real); ++i) seq.segment_ids[i] = 1;
    seq.attention_mask.assign(static_cast<std::size_t>(max_len), 0);
    for (int i = 0; i < real; ++i) seq.attention_mask[static_cast<std::size_t>(i)] = 1;
    return seq;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct LayerParams {
    Mat wq, bq, wk, bk, wv, bv, wo, bo;  // attention; biases are 1×H
    Mat ln1_g, ln1_b;                    // 1×H
    Mat w1, b1, w2, b2;                  // feed-forward H→4H→H
    Mat ln2_g, ln2_b;
};

struct Tensors {
    Mat tok, pos, seg;  // V×H, max_len×H, 2×H
    std::vector<LayerParams> layers;
    Mat cls_w, cls_b;  // K×H, 1×K

    static Tensors zeros(const Hyperparams& h, int vocab_size) {
        int H = h.hidden;
        Tensors t;
        t.tok = Mat::Zero(vocab_size, H);
        t.pos = Mat::Zero(h.max_len, H);
        t.seg = Mat::Zero(2, H);
        t.layers.resize(static_cast<std::size_t>(h.layers));
        for (LayerParams& l : t.layers) {
            l.wq = Mat::Zero(H, H); l.bq = Mat::Zero(1, H);
            l.wk = Mat::Zero(H, H); l.bk = Mat::Zero(1, H);
            l.wv = Mat::Zero(H, H); l.bv = Mat::Zero(1, H);
            l.wo = Mat::Zero(H, H); l.bo = Mat::Zero(1, H);
            l.ln1_g = Mat::Zero(1, H); l.ln1_b = Mat::Zero(1, H);
            l.w1 = Mat::Zero(H, 4 * H); l.b1 = Mat::Zero(1, 4 * H);
            l.w2 = Mat::Zero(4 * H, H); l.b2 = Mat::Zero(1, H);
            l.ln2_g = Mat::Zero(1, H); l.ln2_b = Mat::Zero(1, H);
        }
        t.cls_w = Mat::Zero(2, H);
        t.cls_b = Mat::Zero(1, 2);
        return t;
    }

    // Manifest order; also the initialization draw order and checkpoint layout.
    std::vector<std::pair<std::string, Mat*>> entries() {
        std::vector<std::pair<std::string, Mat*>> out;
        out.emplace_back("tok_emb", &tok);
        out.emplace_back("pos_emb", &pos);
        out.emplace_back("seg_emb", &seg);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            std::string p = "layer" + std::to_string(i) + ".";
            LayerParams& l = layers[i];
            out.emplace_back(p + "attn.wq", &l.wq);
            out.emplace_back(p + "attn.bq", &l.bq);
            out.emplace_back(p + "attn.wk", &l.wk);
            out.emplace_back(p + "attn.bk", &l.bk);
            out.emplace_back(p + "attn.wv", &l.wv);
            out.emplace_back(p + "attn.bv", &l.bv);
            out.emplace_back(p + "attn.wo", &l.wo);
            out.emplace_back(p + "attn.bo", &l.bo);
            out.emplace_back(p + "ln1.gamma", &l.ln1_g);
            out.emplace_back(p + "ln1.beta", &l.ln1_b);
            out.emplace_back(p + "ffn.w1", &l.w1);
            out.emplace_back(p + "ffn.b1", &l.b1);
            out.emplace_back(p + "ffn.w2", &l.w2);
            out.emplace_back(p + "ffn.b2", &l.b2);
            out.emplace_back(p + "ln2.gamma", &l.ln2_g);
            out.emplace_back(p + "ln2.beta", &l.ln2_b);
        }
        out.emplace_back("cls.w", &cls_w);
        out.emplace_back("cls.b", &cls_b);
        return out;
    }

    std::vector<std::pair<std::string, const Mat*>> entries() const {
        auto mut = const_cast<Tensors*>(this)->entries();
        std::vector<std::pair<std::string, const Mat*>> out;
        out.reserve(mut.size());
        for (auto& [name, m] : mut) out.emplace_back(name, m);
        return out;
    }
};

// Seeded Box-Muller sampler, so initialization is identical across standard
// libraries and platforms.
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    double operator()(double stddev) {
        if (have_spare_) {
            have_spare_ = false;
            return spare_ * stddev;
        }
        double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1p-53;  // (0,1]
        double u2 = static_cast<double>(rng_() >> 11) * 0x1p-53;          // [0,1)
        constexpr double kTwoPi = 6.283185307179586476925286766559;
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(kTwoPi * u2);
        have_spare_ = true;
        return r * std::cos(kTwoPi * u2) * stddev;
    }

private:
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct CrossEncoderModel {
    Vocab vocab;
    Hyperparams hyper;
    Tensors params;
    std::uint64_t index_fingerprint = 0;  // of the index the model was trained against

    static CrossEncoderModel create(Vocab vocab, const Hyperparams& hyper) {
        hyper.validate();
        CrossEncoderModel model;
        model.vocab = std::move(vocab);
        model.hyper = hyper;
        model.params = Tensors::zeros(hyper, model.vocab.size());
        model.init_parameters();
        return model;
    }

    // Weight matrices draw N(0, 0.02²) in manifest order, row-major within
    // each tensor; biases start at zero, layer-norm gains at one.
    void init_parameters() {
        GaussianSampler gauss(hyper.seed);
        auto fill = [&](Mat& m) {
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = gauss(0.02);
        };
        fill(params.tok);
        fill(params.pos);
        fill(params.seg);
        for (LayerParams& l : params.layers) {
            fill(l.wq);
            fill(l.wk);
            fill(l.wv);
            fill(l.wo);
            l.ln1_g.setOnes();
            l.ln1_b.setZero();
            fill(l.w1);
            fill(l.w2);
            l.ln2_g.setOnes();
            l.ln2_b.setZero();
        }
        fill(params.cls_w);
    }
};

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

inline constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad(double x) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// Max-subtracted softmax over a vector; stable for logits up to ±1e4 and far
// beyond.
inline Eigen::VectorXd softmax_stable(const Eigen::VectorXd& logits) {
    double mx = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
    return e / e.sum();
}

constexpr double kLayerNormEps = 1e-12;

namespace fwd_detail {

struct LNCache {
    Mat xhat;
    Eigen::VectorXd inv_std;
};

// Row-wise layer norm with population variance.
inline Mat layer_norm(const Mat& x, const Mat& gamma, const Mat& beta, LNCache* cache) {
    Mat out(x.rows(), x.cols());
    if (cache) {
        cache->xhat.resize(x.rows(), x.cols());
        cache->inv_std.resize(x.rows());
    }
    double h = static_cast<double>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mu = x.row(r).mean();
        double var = (x.row(r).array() - mu).square().sum() / h;
        double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        Eigen::RowVectorXd xhat = ((x.row(r).array() - mu) * inv).matrix();
        out.row(r) = (xhat.array() * gamma.row(0).array() + beta.row(0).array()).matrix();
        if (cache) {
            cache->xhat.row(r) = xhat;
            cache->inv_std(r) = inv;
        }
    }
    return out;
}

struct LayerCache {
    Mat x_in;                      // layer input
    Mat q, k, v;                   // n×H
    std::vector<Mat> probs;        // per head, post-softmax pre-dropout
    std::vector<Mat> probs_used;   // after dropout (== probs at inference)
    std::vector<Mat> drop_probs;   // per-head attention dropout masks (training only)
    Mat ctx;                       // concatenated head outputs
    Mat attn_res_in;               // x_in + attention output (input to ln1)
    LNCache ln1;
    Mat x_mid;                     // after ln1
    Mat f1;                        // pre-GELU
    Mat g;                         // post-GELU
    Mat ffn_res_in;                // x_mid + ffn output (input to ln2)
    LNCache ln2;
    // dropout masks (inverted scaling already applied), empty at inference
    Mat drop_attn_out, drop_ffn;
};

struct ForwardCache {
    int n = 0;
    std::vector<int> ids, segs;
    Mat x0;  // embedding sum (post-dropout when training)
    Mat drop_emb;
    std::vector<LayerCache> layers;
    Eigen::VectorXd c;       // final [CLS] hidden state
    Eigen::VectorXd logits;  // K
    Eigen::VectorXd probs;   // K
};

// Bernoulli keep-mask with inverted scaling, drawn row-major.
inline Mat dropout_mask(std::mt19937_64& rng, double p, Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    double keep = 1.0 - p;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            double u = static_cast<double>(rng() >> 11) * 0x1p-53;
            m(i, j) = u < keep ? 1.0 / keep : 0.0;
        }
    return m;
}

}  // namespace fwd_detail

struct ForwardResult {
    Eigen::VectorXd c;
    Eigen::VectorXd probs;
    Eigen::VectorXd logits;
};

// Runs the encoder over the unpadded prefix of seq. Padding positions are
// trailing and masked keys would receive zero attention weight, so excluding
// them entirely is arithmetically identical for C and the probabilities
// (checked independently by the padding-invariance and oracle tests).
// `cache`/`rng` are used only by training (dropout + backprop bookkeeping).
inline ForwardResult forward(const CrossEncoderModel& model, const PairSequence& seq,
                             fwd_detail::ForwardCache* cache = nullptr,
                             std::mt19937_64* rng = nullptr) {
    const Hyperparams& hp = model.hyper;
    const Tensors& P = model.params;
    if (static_cast<int>(seq.token_ids.size()) != hp.max_len)
        throw UserError("sequence length does not match the model's max_len");

    int n = seq.real_len();
    if (n < 1) throw UserError("sequence has no real tokens");
    int H = hp.hidden;
    int A = hp.heads;
    int dh = H / A;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    bool training = rng != nullptr && hp.dropout > 0.0;

    Mat x(n, H);
    for (int p = 0; p < n; ++p) {
        int id = seq.token_ids[static_cast<std::size_t>(p)];
        int sg = seq.segment_ids[static_cast<std::size_t>(p)];
        if (id < 0 || id >= model.vocab.size()) throw UserError("token id out of vocabulary range");
        x.row(p) = P.tok.row(id) + P.pos.row(p) + P.seg.row(sg);
    }
    if (cache) {
        cache->n = n;
        cache->ids.assign(seq.token_ids.begin(), seq.token_ids.begin() + n);
        cache->segs.assign(seq.segment_ids.begin(), seq.segment_ids.begin() + n);
        cache->layers.assign(static_cast<std::size_t>(hp.layers), {});
    }
    if (training) {
        Mat mask = fwd_detail::dropout_mask(*rng, hp.dropout, n, H);
        x = x.cwiseProduct(mask);
        if (cache) cache->drop_emb = std::move(mask);
    }
    if (cache) cache->x0 = x;

    for (int li = 0; li < hp.layers; ++li) {
        const LayerParams& L = P.layers[static_cast<std::size_t>(li)];
        fwd_detail::LayerCache* lc = cache ? &cache->layers[static_cast<std::size_t>(li)] : nullptr;
        if (lc) lc->x_in = x;

        Mat q = (x * L.wq).rowwise() + L.bq.row(0);
        Mat k = (x * L.wk).rowwise() + L.bk.row(0);
        Mat v = (x * L.wv).rowwise() + L.bv.row(0);
        if (lc) {
            lc->q = q;
            lc->k = k;
            lc->v = v;
            lc->probs.resize(static_cast<std::size_t>(A));
            lc->probs_used.resize(static_cast<std::size_t>(A));
            lc->drop_probs.resize(static_cast<std::size_t>(A));
        }

        Mat ctx(n, H);
        for (int h = 0; h < A; ++h) {
            auto qh = q.middleCols(h * dh, dh);
            auto kh = k.middleCols(h * dh, dh);
            auto vh = v.middleCols(h * dh, dh);
            Mat scores = qh * kh.transpose() * scale;
            Mat probs(n, n);
            for (int r = 0; r < n; ++r) {
                double mx = scores.row(r).maxCoeff();
                Eigen::RowVectorXd e = (scores.row(r).array() - mx).exp().matrix();
                probs.row(r) = e / e.sum();
            }
            Mat used = probs;
            if (training) {
                Mat mask = fwd_detail::dropout_mask(*rng, hp.dropout, n, n);
                used = probs.cwiseProduct(mask);
                if (lc) lc->drop_probs[static_cast<std::size_t>(h)] = std::move(mask);
            }
            ctx.middleCols(h * dh, dh) = used * vh;
            if (lc) {
                lc->probs[static_cast<std::size_t>(h)] = std::move(probs);
                lc->probs_used[static_cast<std::size_t>(h)] = std::move(used);
            }
        }
        if (lc) lc->ctx = ctx;

        Mat attn_out = (ctx * L.wo).rowwise() + L.bo.row(0);
        if (training) {
            Mat mask = fwd_detail::dropout_mask(*rng, hp.dropout, n, H);
            attn_out = attn_out.cwiseProduct(mask);
            if (lc) lc->drop_attn_out = std::move(mask);
        }
        Mat res1 = x + attn_out;
        if (lc) lc->attn_res_in = res1;
        Mat x_mid = fwd_detail::layer_norm(res1, L.ln1_g, L.ln1_b, lc ? &lc->ln1 : nullptr);
        if (lc) lc->x_mid = x_mid;

        Mat f1 = (x_mid * L.w1).rowwise() + L.b1.row(0);
        Mat g = f1.unaryExpr([](double t) { return gelu(t); });
        if (lc) {
            lc->f1 = f1;
            lc->g = g;
        }
        Mat ffn_out = (g * L.w2).rowwise() + L.b2.row(0);
        if (training) {
            Mat mask = fwd_detail::dropout_mask(*rng, hp.dropout, n, H);
            ffn_out = ffn_out.cwiseProduct(mask);
            if (lc) lc->drop_ffn = std::move(mask);
        }
        Mat res2 = x_mid + ffn_out;
        if (lc) lc->ffn_res_in = res2;
        x = fwd_detail::layer_norm(res2, L.ln2_g, L.ln2_b, lc ? &lc->ln2 : nullptr);
    }

    ForwardResult out;
    out.c = x.row(0).transpose();
    out.logits = (P.cls_w * out.c) + P.cls_b.row(0).transpose();
    out.probs = softmax_stable(out.logits);
    if (cache) {
        cache->c = out.c;
        cache->logits = out.logits;
        cache->probs = out.probs;
    }
    return out;
}

// P(label=1 | m, c); dropout off, deterministic.
inline double score_pair(const CrossEncoderModel& model, const std::vector<Token>& mention_tokens,
                         const std::vector<Token>& concept_tokens) {
    PairSequence seq =
        build_pair_sequence(mention_tokens, concept_tokens, model.vocab, model.hyper.max_len);
    return forward(model, seq).probs(1);
}

// ---------------------------------------------------------------------------
// Training pairs
// ---------------------------------------------------------------------------

struct PairExample {
    std::vector<Token> mention_tokens;
    std::vector<Token> concept_tokens;
    int label = 0;
};

// One positive per linkable mention (the gold concept's retrieved name, or
// its preferred name when retrieval missed it) plus one negative per
// non-gold candidate.
inline std::vector<PairExample> make_training_pairs(const Dataset& training,
                                                    const retrieval::Index& index,
                                                    const KnowledgeBase& kb,
                                                    const preprocess::PreprocessResources& resources,
                                                    std::size_t k = 10) {
    std::vector<PairExample> out;
    for (const Mention& m : training.mentions) {
        if (!m.gold.is_concept()) continue;
        std::vector<Token> mention_tokens = resources.normalize_mention(m);
        if (mention_tokens.empty()) continue;
        std::vector<retrieval::Candidate> cands = retrieval::retrieve_candidates(index, mention_tokens, k);

        const retrieval::Candidate* gold_cand = nullptr;
        for (const auto& c : cands)
            if (c.concept_id == m.gold.id) {
                gold_cand = &c;
                break;
            }

        std::string positive_name;
        if (gold_cand) {
            positive_name = gold_cand->matched_name;
        } else {
            const Concept* gold = kb.find(m.gold.id);
            if (!gold)
                throw UserError("training mention \"" + m.text + "\" has gold concept " +
                                m.gold.id.value + " which is not in the knowledge base");
            positive_name = gold->preferred_name();
        }
        std::vector<Token> pos_tokens = resources.normalize_name(positive_name);
        if (!pos_tokens.empty()) out.push_back({mention_tokens, std::move(pos_tokens), 1});

        for (const auto& c : cands) {
            if (c.concept_id == m.gold.id) continue;
            std::vector<Token> neg_tokens = resources.normalize_name(c.matched_name);
            if (!neg_tokens.empty()) out.push_back({mention_tokens, std::move(neg_tokens), 0});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace bwd_detail {

using fwd_detail::ForwardCache;
using fwd_detail::LayerCache;
using fwd_detail::LNCache;

inline void layer_norm_backward(const Mat& dy, const LNCache& ln, const Mat& gamma, Mat& dx,
                                Mat& dgamma, Mat& dbeta) {
    double h = static_cast<double>(dy.cols());
    dx.resize(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        dgamma.row(0).array() += dy.row(r).array() * ln.xhat.row(r).array();
        dbeta.row(0).array() += dy.row(r).array();
        Eigen::RowVectorXd dxhat = (dy.row(r).array() * gamma.row(0).array()).matrix();
        double mean_dxhat = dxhat.mean();
        double mean_dxhat_xhat = (dxhat.array() * ln.xhat.row(r).array()).sum() / h;
        dx.row(r) = (ln.inv_std(r) *
                     (dxhat.array() - mean_dxhat - ln.xhat.row(r).array() * mean_dxhat_xhat))
                        .matrix();
    }
}

// Accumulates dLoss/dparams for one example into `grads`, given the cache of
// its forward pass and dLoss/dlogits.
inline void backward(const CrossEncoderModel& model, const ForwardCache& cache,
                     const Eigen::VectorXd& dlogits, Tensors& grads) {
    const Hyperparams& hp = model.hyper;
    const Tensors& P = model.params;
    int n = cache.n;
    int H = hp.hidden;
    int A = hp.heads;
    int dh = H / A;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    bool had_dropout = cache.drop_emb.size() > 0;

    grads.cls_w += dlogits * cache.c.transpose();
    grads.cls_b.row(0) += dlogits.transpose();
    Eigen::VectorXd dc = P.cls_w.transpose() * dlogits;

    Mat dx = Mat::Zero(n, H);
    dx.row(0) = dc.transpose();

    for (int li = hp.layers - 1; li >= 0; --li) {
        const LayerParams& L = P.layers[static_cast<std::size_t>(li)];
        const LayerCache& lc = cache.layers[static_cast<std::size_t>(li)];
        LayerParams& G = grads.layers[static_cast<std::size_t>(li)];

        // x = ln2(x_mid + ffn_out)
        Mat dres2;
        layer_norm_backward(dx, lc.ln2, L.ln2_g, dres2, G.ln2_g, G.ln2_b);
        Mat dffn_out = dres2;
        if (had_dropout) dffn_out = dffn_out.cwiseProduct(lc.drop_ffn);
        Mat dx_mid = dres2;

        // ffn_out = gelu(x_mid·w1 + b1)·w2 + b2
        G.w2 += lc.g.transpose() * dffn_out;
        G.b2.row(0) += dffn_out.colwise().sum();
        Mat dg = dffn_out * L.w2.transpose();
        Mat df1 = dg.cwiseProduct(lc.f1.unaryExpr([](double t) { return gelu_grad(t); }));
        G.w1 += lc.x_mid.transpose() * df1;
        G.b1.row(0) += df1.colwise().sum();
        dx_mid += df1 * L.w1.transpose();

        // x_mid = ln1(x_in + attn_out)
        Mat dres1;
        layer_norm_backward(dx_mid, lc.ln1, L.ln1_g, dres1, G.ln1_g, G.ln1_b);
        Mat dattn_out = dres1;
        if (had_dropout) dattn_out = dattn_out.cwiseProduct(lc.drop_attn_out);
        Mat dx_in = dres1;

        // attn_out = ctx·wo + bo
        G.wo += lc.ctx.transpose() * dattn_out;
        G.bo.row(0) += dattn_out.colwise().sum();
        Mat dctx = dattn_out * L.wo.transpose();

        Mat dq = Mat::Zero(n, H), dk = Mat::Zero(n, H), dv = Mat::Zero(n, H);
        for (int h = 0; h < A; ++h) {
            auto qh = lc.q.middleCols(h * dh, dh);
            auto kh = lc.k.middleCols(h * dh, dh);
            auto vh = lc.v.middleCols(h * dh, dh);
            auto dctx_h = dctx.middleCols(h * dh, dh);
            const Mat& probs = lc.probs[static_cast<std::size_t>(h)];
            const Mat& used = lc.probs_used[static_cast<std::size_t>(h)];

            Mat dused = dctx_h * vh.transpose();
            dv.middleCols(h * dh, dh) = used.transpose() * dctx_h;
            Mat dprobs = had_dropout
                             ? dused.cwiseProduct(lc.drop_probs[static_cast<std::size_t>(h)]).eval()
                             : dused;
            // softmax backward, row-wise
            Mat dscores(n, n);
            for (int r = 0; r < n; ++r) {
                double dot = dprobs.row(r).dot(probs.row(r));
                dscores.row(r) = probs.row(r).array() * (dprobs.row(r).array() - dot);
            }
            dscores *= scale;
            dq.middleCols(h * dh, dh) = dscores * kh;
            dk.middleCols(h * dh, dh) = dscores.transpose() * qh;
        }

        G.wq += lc.x_in.transpose() * dq;
        G.bq.row(0) += dq.colwise().sum();
        G.wk += lc.x_in.transpose() * dk;
        G.bk.row(0) += dk.colwise().sum();
        G.wv += lc.x_in.transpose() * dv;
        G.bv.row(0) += dv.colwise().sum();
        dx_in += dq * L.wq.transpose() + dk * L.wk.transpose() + dv * L.wv.transpose();
        dx = std::move(dx_in);
    }

    if (had_dropout) dx = dx.cwiseProduct(cache.drop_emb);
    for (int p = 0; p < n; ++p) {
        grads.tok.row(cache.ids[static_cast<std::size_t>(p)]) += dx.row(p);
        grads.pos.row(p) += dx.row(p);
        grads.seg.row(cache.segs[static_cast<std::size_t>(p)]) += dx.row(p);
    }
}

}  // namespace bwd_detail

// Loss and gradient of one encoded example; used by training and by the
// finite-difference checks.
struct EncodedPair {
    PairSequence seq;
    int label = 0;
};

inline double example_loss_and_grad(const CrossEncoderModel& model, const EncodedPair& ex,
                                    Tensors* grads, std::mt19937_64* rng = nullptr) {
    fwd_detail::ForwardCache cache;
    ForwardResult r = forward(model, ex.seq, grads ? &cache : nullptr, rng);
    double mx = r.logits.maxCoeff();
    double log_z = mx + std::log((r.logits.array() - mx).exp().sum());
    double loss = log_z - r.logits(ex.label);
    if (grads) {
        Eigen::VectorXd dlogits = r.probs;
        dlogits(ex.label) -= 1.0;
        bwd_detail::backward(model, cache, dlogits, *grads);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainReportEntry {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    std::optional<double> dev_accuracy;
};

struct TrainResult {
    std::vector<TrainReportEntry> epochs;
    int best_epoch = 0;  // 1-based; the epoch whose parameters were kept
};

// Optional end-to-end dev evaluation supplied by the caller (the linker wires
// threshold learning + accuracy through this).
using DevEvaluator = std::function<double(const CrossEncoderModel&)>;

inline std::vector<EncodedPair> encode_pairs(const std::vector<PairExample>& pairs,
                                             const Vocab& vocab, int max_len) {
    std::vector<EncodedPair> out;
    out.reserve(pairs.size());
    for (const PairExample& p : pairs)
        out.push_back({build_pair_sequence(p.mention_tokens, p.concept_tokens, vocab, max_len),
                       p.label});
    return out;
}

// Adam over shuffled mini-batches of the mean cross-entropy. One RNG, seeded
// by hyper.seed, drives both the per-epoch shuffles and dropout, so runs are
// bit-reproducible.
inline TrainResult train(CrossEncoderModel& model, const std::vector<PairExample>& pairs,
                         const DevEvaluator& dev_eval = nullptr) {
    const Hyperparams& hp = model.hyper;
    hp.validate();
    if (pairs.empty()) throw UserError("no training pairs; cannot train");

    std::vector<EncodedPair> data = encode_pairs(pairs, model.vocab, hp.max_len);
    std::mt19937_64 rng(hp.seed);

    Tensors m_state = Tensors::zeros(hp, model.vocab.size());
    Tensors v_state = Tensors::zeros(hp, model.vocab.size());
    auto m_entries = m_state.entries();
    auto v_entries = v_state.entries();
    std::int64_t step = 0;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

    TrainResult result;
    Tensors best_params;
    double best_dev = -1.0;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        // Fisher-Yates with our own rng so the permutation is library-independent
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(order[i - 1], order[j]);
        }

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(hp.batch_size)) {
            std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(hp.batch_size));
            Tensors grads = Tensors::zeros(hp, model.vocab.size());
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i)
                batch_loss += example_loss_and_grad(model, data[order[i]], &grads,
                                                    hp.dropout > 0.0 ? &rng : nullptr);
            double inv = 1.0 / static_cast<double>(end - start);
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw UserError("training diverged: non-finite loss in epoch " +
                                std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                                "; try a lower learning rate");
            epoch_loss += batch_loss * static_cast<double>(end - start);

            ++step;
            double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
            auto p_entries = model.params.entries();
            auto g_entries = grads.entries();
            for (std::size_t t = 0; t < p_entries.size(); ++t) {
                Mat& p = *p_entries[t].second;
                Mat g = *g_entries[t].second * inv;
                Mat& m = *m_entries[t].second;
                Mat& v = *v_entries[t].second;
                m = kBeta1 * m + (1.0 - kBeta1) * g;
                v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
                p.array() -= hp.learning_rate * (m.array() / bc1) /
                             ((v.array() / bc2).sqrt() + kEps);
            }
            ++batch_index;
        }

        TrainReportEntry entry;
        entry.epoch = epoch;
        entry.mean_loss = epoch_loss / static_cast<double>(data.size());
        if (dev_eval) {
            double acc = dev_eval(model);
            entry.dev_accuracy = acc;
            if (acc > best_dev) {
                best_dev = acc;
                best_params = model.params;
                result.best_epoch = epoch;
            }
        } else {
            result.best_epoch = epoch;
        }
        result.epochs.push_back(entry);
    }

    if (dev_eval && best_dev >= 0.0) model.params = std::move(best_params);
    return result;
}

// ---------------------------------------------------------------------------
// Candidate ranking
// ---------------------------------------------------------------------------

struct RankedCandidate {
    retrieval::Candidate candidate;
    double score = 0.0;
};

// Scores candidates by their matched names; sorts by (score desc, BM25 rank
// asc, concept id asc). The head of the result is c*.
inline std::vector<RankedCandidate> rank_candidates(
    const CrossEncoderModel& model, const std::vector<Token>& mention_tokens,
    const std::vector<retrieval::Candidate>& candidates,
    const preprocess::PreprocessResources& resources) {
    std::vector<RankedCandidate> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        std::vector<Token> name_tokens = resources.normalize_name(candidates[i].matched_name);
        double s = name_tokens.empty() && mention_tokens.empty()
                       ? 0.0
                       : score_pair(model, mention_tokens, name_tokens);
        out.push_back({candidates[i], s});
    }
    std::vector<std::size_t> idx(out.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Keys: score desc, then original BM25 rank asc (total already; concept
    // ids are pairwise distinct coming out of retrieval).
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (out[a].score != out[b].score) return out[a].score > out[b].score;
        return a < b;
    });
    std::vector<RankedCandidate> sorted;
    sorted.reserve(out.size());
    for (std::size_t i : idx) sorted.push_back(std::move(out[i]));
    return sorted;
}

// ---------------------------------------------------------------------------
// Checkpoint persistence: "BNCK"
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'B', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const CrossEncoderModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot open output file: " + path);
    out.write(kCheckpointMagic, 4);
    binio::write_u32(out, kCheckpointVersion);
    binio::write_u64(out, model.index_fingerprint);

    const Hyperparams& hp = model.hyper;
    binio::write_u32(out, static_cast<std::uint32_t>(hp.hidden));
    binio::write_u32(out, static_cast<std::uint32_t>(hp.layers));
    binio::write_u32(out, static_cast<std::uint32_t>(hp.heads));
    binio::write_u32(out, static_cast<std::uint32_t>(hp.max_len));
    binio::write_u32(out, static_cast<std::uint32_t>(hp.batch_size));
    binio::write_f64(out, hp.learning_rate);
    binio::write_u32(out, static_cast<std::uint32_t>(hp.epochs));
    binio::write_u64(out, hp.seed);
    binio::write_f64(out, hp.dropout);

    binio::write_u64(out, static_cast<std::uint64_t>(model.vocab.size()));
    for (const std::string& t : model.vocab.tokens()) binio::write_str(out, t);

    auto entries = model.params.entries();
    binio::write_u64(out, entries.size());
    for (const auto& [name, mat] : entries) {
        binio::write_str(out, name);
        binio::write_u64(out, static_cast<std::uint64_t>(mat->rows()));
        binio::write_u64(out, static_cast<std::uint64_t>(mat->cols()));
        for (Eigen::Index i = 0; i < mat->rows(); ++i)
            for (Eigen::Index j = 0; j < mat->cols(); ++j) binio::write_f64(out, (*mat)(i, j));
    }
    if (!out) throw UserError("failed writing checkpoint to " + path);
}

inline CrossEncoderModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open file: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw UserError(path + " is not a checkpoint file");
    std::uint32_t version = binio::read_u32(in, path);
    if (version != kCheckpointVersion)
        throw UserError(path + ": unsupported checkpoint version " + std::to_string(version));

    CrossEncoderModel model;
    model.index_fingerprint = binio::read_u64(in, path);
    Hyperparams hp;
    hp.hidden = static_cast<int>(binio::read_u32(in, path));
    hp.layers = static_cast<int>(binio::read_u32(in, path));
    hp.heads = static_cast<int>(binio::read_u32(in, path));
    hp.max_len = static_cast<int>(binio::read_u32(in, path));
    hp.batch_size = static_cast<int>(binio::read_u32(in, path));
    hp.learning_rate = binio::read_f64(in, path);
    hp.epochs = static_cast<int>(binio::read_u32(in, path));
    hp.seed = binio::read_u64(in, path);
    hp.dropout = binio::read_f64(in, path);
    hp.allow_any_batch_size = true;  // stored checkpoints are trusted on this point
    model.hyper = hp;

    std::uint64_t vocab_size = binio::read_u64(in, path);
    Vocab vocab;
    for (std::uint64_t i = 0; i < vocab_size; ++i) {
        std::string t = binio::read_str(in, path);
        if (i < 4) {
            static const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
            if (t != kSpecials[i]) throw UserError(path + ": corrupt vocabulary specials");
            continue;
        }
        vocab.add(t);
    }
    model.vocab = std::move(vocab);
    if (static_cast<std::uint64_t>(model.vocab.size()) != vocab_size)
        throw UserError(path + ": duplicate tokens in stored vocabulary");

    model.params = Tensors::zeros(hp, model.vocab.size());
    auto entries = model.params.entries();
    std::uint64_t n_tensors = binio::read_u64(in, path);
    if (n_tensors != entries.size())
        throw UserError(path + ": tensor count does not match hyperparameters");
    for (auto& [name, mat] : entries) {
        std::string stored = binio::read_str(in, path);
        if (stored != name)
            throw UserError(path + ": unexpected tensor \"" + stored + "\" (wanted \"" + name + "\")");
        std::uint64_t rows = binio::read_u64(in, path);
        std::uint64_t cols = binio::read_u64(in, path);
        if (rows != static_cast<std::uint64_t>(mat->rows()) ||
            cols != static_cast<std::uint64_t>(mat->cols()))
            throw UserError(path + ": tensor \"" + name + "\" has unexpected shape");
        for (Eigen::Index i = 0; i < mat->rows(); ++i)
            for (Eigen::Index j = 0; j < mat->cols(); ++j) (*mat)(i, j) = binio::read_f64(in, path);
    }
    for (const auto& [name, mat] : model.params.entries())
        if (!mat->allFinite()) throw UserError(path + ": tensor \"" + name + "\" has non-finite values");
    return model;
}

// Fingerprint of a trained model's parameters + vocab, chained into the
// threshold artifact.
inline std::uint64_t checkpoint_fingerprint(const CrossEncoderModel& model) {
    Fingerprint fp;
    fp.update("bionorm-checkpoint");
    fp.update_u64(model.index_fingerprint);
    fp.update_u64(static_cast<std::uint64_t>(model.vocab.size()));
    for (const std::string& t : model.vocab.tokens()) fp.update(t);
    for (const auto& [name, mat] : model.params.entries()) {
        fp.update(name);
        for (Eigen::Index i = 0; i < mat->rows(); ++i)
            for (Eigen::Index j = 0; j < mat->cols(); ++j) fp.update_f64((*mat)(i, j));
    }
    return fp.value();
}

}  // namespace bionorm::ranker
