// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors
//
// Hierarchical Recurrent Path Encoder.
//
//   p_j = LSTM_path(path_j)                 final hidden state, one per path
//   H   = [LSTM_fwd(hyp) ; LSTM_bwd(hyp)]   final states of a bi-LSTM
//   s_j = H^T U p_j,  a = softmax(s),  p = sum_j a_j p_j
//   P   = LSTM_outer(p_1 .. p_J)            paths in canonical order
//   y   = softmax(W^T [H ; p ; P] + b)      (entail, contradict)
//
// Forward passes record a ForwardTrace; backward() turns it into exact
// gradients for every parameter (and, optionally, for the input embeddings).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgnli/embedding.hpp"
#include "kgnli/error.hpp"
#include "kgnli/phl.hpp"
#include "kgnli/rng.hpp"

namespace kgnli {

// Gate rows are stacked as [input; forget; output; candidate].
struct LSTMCellParams {
    Mat Wx; // 4h x d_in
    Mat Wh; // 4h x h
    Vec b;  // 4h

    Eigen::Index input_dim() const { return Wx.cols(); }
    Eigen::Index hidden_dim() const { return Wh.cols(); }

    static LSTMCellParams zeros(Eigen::Index d_in, Eigen::Index d_h) {
        return {Mat::Zero(4 * d_h, d_in), Mat::Zero(4 * d_h, d_h), Vec::Zero(4 * d_h)};
    }

    // Uniform in +-1/sqrt(d_in), forget-gate bias 1.
    static LSTMCellParams init(Eigen::Index d_in, Eigen::Index d_h, Rng& rng) {
        auto p = zeros(d_in, d_h);
        const double a = 1.0 / std::sqrt(static_cast<double>(d_in));
        for (Eigen::Index i = 0; i < p.Wx.size(); ++i) p.Wx.data()[i] = rng.uniform(-a, a);
        for (Eigen::Index i = 0; i < p.Wh.size(); ++i) p.Wh.data()[i] = rng.uniform(-a, a);
        p.b.segment(d_h, d_h).setOnes();
        return p;
    }
};

struct TensorRef {
    std::string name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols;

    Eigen::Index size() const { return rows * cols; }
};

struct ModelConfig {
    std::size_t dim = 300;
    std::size_t hidden = 150;
    std::size_t inner_cap = 20;
    std::size_t outer_cap = 250;
};

struct HRPEParams {
    LSTMCellParams path;
    LSTMCellParams hyp_fwd;
    LSTMCellParams hyp_bwd;
    LSTMCellParams outer;
    Mat U;    // 2h x h, bilinear attention
    Mat W;    // 4h x 2, classifier
    Vec bias; // 2

    Eigen::Index dim() const { return path.input_dim(); }
    Eigen::Index hidden() const { return path.hidden_dim(); }
    Eigen::Index aggregate_dim() const { return W.rows(); }

    static HRPEParams zeros(Eigen::Index dim, Eigen::Index h) {
        return {LSTMCellParams::zeros(dim, h), LSTMCellParams::zeros(dim, h), LSTMCellParams::zeros(dim, h),
                LSTMCellParams::zeros(h, h),   Mat::Zero(2 * h, h),           Mat::Zero(4 * h, 2),
                Vec::Zero(2)};
    }

    static HRPEParams zeros_like(const HRPEParams& p) { return zeros(p.dim(), p.hidden()); }

    static HRPEParams init(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
        if (dim == 0 || hidden == 0) throw ConfigError("model dimensions must be positive");
        Rng rng(seed);
        const auto d = static_cast<Eigen::Index>(dim), h = static_cast<Eigen::Index>(hidden);
        HRPEParams p = zeros(d, h);
        p.path = LSTMCellParams::init(d, h, rng);
        p.hyp_fwd = LSTMCellParams::init(d, h, rng);
        p.hyp_bwd = LSTMCellParams::init(d, h, rng);
        p.outer = LSTMCellParams::init(h, h, rng);
        const double au = 1.0 / std::sqrt(static_cast<double>(2 * h));
        for (Eigen::Index i = 0; i < p.U.size(); ++i) p.U.data()[i] = rng.uniform(-au, au);
        const double aw = 1.0 / std::sqrt(static_cast<double>(4 * h));
        for (Eigen::Index i = 0; i < p.W.size(); ++i) p.W.data()[i] = rng.uniform(-aw, aw);
        return p;
    }

    std::vector<TensorRef> tensors() {
        std::vector<TensorRef> out;
        auto cell = [&](const std::string& n, LSTMCellParams& c) {
            out.push_back({n + ".Wx", c.Wx.data(), c.Wx.rows(), c.Wx.cols()});
            out.push_back({n + ".Wh", c.Wh.data(), c.Wh.rows(), c.Wh.cols()});
            out.push_back({n + ".b", c.b.data(), c.b.rows(), 1});
        };
        cell("path", path);
        cell("hyp_fwd", hyp_fwd);
        cell("hyp_bwd", hyp_bwd);
        cell("outer", outer);
        out.push_back({"U", U.data(), U.rows(), U.cols()});
        out.push_back({"W", W.data(), W.rows(), W.cols()});
        out.push_back({"bias", bias.data(), bias.rows(), 1});
        return out;
    }

    std::vector<TensorRef> tensors() const { return const_cast<HRPEParams*>(this)->tensors(); }

    void add(const HRPEParams& o) {
        auto a = tensors();
        auto b = o.tensors();
        for (std::size_t k = 0; k < a.size(); ++k)
            for (Eigen::Index i = 0; i < a[k].size(); ++i) a[k].data[i] += b[k].data[i];
    }

    double squared_norm() const {
        double s = 0;
        for (const auto& t : tensors())
            for (Eigen::Index i = 0; i < t.size(); ++i) s += t.data[i] * t.data[i];
        return s;
    }

    bool bit_equal(const HRPEParams& o) const {
        auto a = tensors();
        auto b = o.tensors();
        if (a.size() != b.size()) return false;
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (a[k].rows != b[k].rows || a[k].cols != b[k].cols) return false;
            if (std::memcmp(a[k].data, b[k].data, sizeof(double) * static_cast<std::size_t>(a[k].size())) != 0)
                return false;
        }
        return true;
    }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec softmax(const Vec& s) {
    const double m = s.maxCoeff();
    Vec e = (s.array() - m).exp();
    return e / e.sum();
}

} // namespace detail

struct LSTMTrace {
    Mat X;     // d_in x T
    Mat gates; // 4h x T, post-activation
    Mat C;     // h x T
    Mat tanhC; // h x T
    Mat H;     // h x T

    Vec last() const { return H.col(H.cols() - 1); }
};

inline LSTMTrace lstm_forward(const LSTMCellParams& p, Mat X) {
    const Eigen::Index T = X.cols(), h = p.hidden_dim();
    if (T == 0) throw ModelError("LSTM over an empty sequence");
    if (X.rows() != p.input_dim()) throw ModelError("LSTM input dimension mismatch");
    LSTMTrace tr;
    tr.gates.noalias() = p.Wx * X;
    tr.gates.colwise() += p.b;
    tr.C.resize(h, T);
    tr.tanhC.resize(h, T);
    tr.H.resize(h, T);
    Vec hprev = Vec::Zero(h), cprev = Vec::Zero(h);
    for (Eigen::Index t = 0; t < T; ++t) {
        auto z = tr.gates.col(t);
        if (t > 0) z.noalias() += p.Wh * hprev;
        for (Eigen::Index k = 0; k < 3 * h; ++k) z[k] = detail::sigmoid(z[k]);
        for (Eigen::Index k = 3 * h; k < 4 * h; ++k) z[k] = std::tanh(z[k]);
        const auto i = z.segment(0, h), f = z.segment(h, h), o = z.segment(2 * h, h), g = z.segment(3 * h, h);
        tr.C.col(t) = f.cwiseProduct(cprev) + i.cwiseProduct(g);
        tr.tanhC.col(t) = tr.C.col(t).array().tanh();
        tr.H.col(t) = o.cwiseProduct(tr.tanhC.col(t));
        hprev = tr.H.col(t);
        cprev = tr.C.col(t);
    }
    tr.X = std::move(X);
    return tr;
}

// Backpropagation through time from a gradient on the final hidden state.
inline void lstm_backward(const LSTMCellParams& p, const LSTMTrace& tr, const Vec& dh_last, LSTMCellParams& grad,
                          Mat* dX) {
    const Eigen::Index T = tr.X.cols(), h = p.hidden_dim();
    Mat dZ(4 * h, T);
    Vec dh = dh_last, dc = Vec::Zero(h);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const auto z = tr.gates.col(t);
        const auto i = z.segment(0, h), f = z.segment(h, h), o = z.segment(2 * h, h), g = z.segment(3 * h, h);
        const auto tc = tr.tanhC.col(t);
        dc.array() += dh.array() * o.array() * (1.0 - tc.array().square());
        auto dz = dZ.col(t);
        dz.segment(2 * h, h) = (dh.array() * tc.array() * o.array() * (1.0 - o.array())).matrix();
        dz.segment(0, h) = (dc.array() * g.array() * i.array() * (1.0 - i.array())).matrix();
        if (t > 0)
            dz.segment(h, h) = (dc.array() * tr.C.col(t - 1).array() * f.array() * (1.0 - f.array())).matrix();
        else
            dz.segment(h, h).setZero();
        dz.segment(3 * h, h) = (dc.array() * i.array() * (1.0 - g.array().square())).matrix();
        if (t > 0) {
            dh.noalias() = p.Wh.transpose() * dz;
            dc = dc.cwiseProduct(f);
        }
    }
    grad.Wx.noalias() += dZ * tr.X.transpose();
    if (T > 1) grad.Wh.noalias() += dZ.rightCols(T - 1) * tr.H.leftCols(T - 1).transpose();
    grad.b += dZ.rowwise().sum();
    if (dX) dX->noalias() = p.Wx.transpose() * dZ;
}

struct EmbeddedInstance {
    std::vector<TokenSeq> path_tokens; // canonical order, capped
    std::vector<Mat> paths;            // dim x len each
    std::vector<bool> truncated;       // per path, inner cap hit
    bool premise_truncated = false;    // outer cap hit
    TokenSeq hyp_tokens;
    Mat hypothesis; // dim x len
};

inline Vec token_vector(const Token& t, const EmbeddingTable& table) {
    switch (t.kind) {
    case Token::Kind::Entity: return table.entity(t.id);
    case Token::Kind::Relation: return table.relation(t.id);
    case Token::Kind::Word: return table.word(t.text);
    }
    return {};
}

inline Mat embed_sequence(const TokenSeq& seq, const EmbeddingTable& table) {
    Mat m(static_cast<Eigen::Index>(table.dim()), static_cast<Eigen::Index>(seq.size()));
    for (std::size_t k = 0; k < seq.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = token_vector(seq[k], table);
    return m;
}

// Premise paths are put in canonical order, then capped (outer_cap paths of
// at most inner_cap tokens each).
inline EmbeddedInstance embed_instance(const PHLInstance& inst, const EmbeddingTable& table, const ModelConfig& cfg) {
    if (inst.premise_paths.empty()) throw DataError("instance " + inst.question_id + " has an empty premise");
    if (inst.hypothesis.empty()) throw DataError("instance " + inst.question_id + " has an empty hypothesis");
    EmbeddedInstance e;
    e.path_tokens = inst.premise_paths;
    canonicalize_premise(e.path_tokens);
    if (e.path_tokens.size() > cfg.outer_cap) {
        e.path_tokens.resize(cfg.outer_cap);
        e.premise_truncated = true;
    }
    for (auto& p : e.path_tokens) {
        if (p.empty()) throw DataError("instance " + inst.question_id + " has an empty premise path");
        e.truncated.push_back(p.size() > cfg.inner_cap);
        if (p.size() > cfg.inner_cap) p.resize(cfg.inner_cap);
        e.paths.push_back(embed_sequence(p, table));
    }
    e.hyp_tokens = inst.hypothesis;
    if (e.hyp_tokens.size() > cfg.inner_cap) e.hyp_tokens.resize(cfg.inner_cap);
    e.hypothesis = embed_sequence(e.hyp_tokens, table);
    return e;
}

inline Vec encode_path(const Mat& seq, const HRPEParams& p) { return lstm_forward(p.path, seq).last(); }

inline Vec encode_hypothesis(const Mat& seq, const HRPEParams& p) {
    const Eigen::Index h = p.hidden();
    Vec H(2 * h);
    H.head(h) = lstm_forward(p.hyp_fwd, seq).last();
    H.tail(h) = lstm_forward(p.hyp_bwd, seq.rowwise().reverse()).last();
    return H;
}

struct Attention {
    Vec pooled;
    Vec weights;
    Vec scores;
};

// paths: h x J, one encoding per column.
inline Attention attend_paths(const Vec& H, const Mat& paths, const Mat& U) {
    if (paths.cols() == 0) throw ModelError("attention over an empty path list");
    if (U.rows() != H.size() || U.cols() != paths.rows()) throw ModelError("attention dimension mismatch");
    Attention a;
    a.scores = paths.transpose() * (U.transpose() * H);
    a.weights = detail::softmax(a.scores);
    a.pooled = paths * a.weights;
    return a;
}

inline Vec encode_path_sequence(const Mat& paths, const HRPEParams& p) { return lstm_forward(p.outer, paths).last(); }

inline Vec classify(const Vec& A, const Mat& W, const Vec& bias) {
    if (A.size() != W.rows() || bias.size() != 2 || W.cols() != 2) throw ModelError("classifier dimension mismatch");
    return detail::softmax(W.transpose() * A + bias);
}

inline Vec classify(const Vec& H, const Vec& p, const Vec& P, const Mat& W, const Vec& bias) {
    Vec A(H.size() + p.size() + P.size());
    A << H, p, P;
    return classify(A, W, bias);
}

struct LossValue {
    double value;
    bool clamped;
};

inline LossValue cross_entropy(const Vec& probs, int gold) {
    const double q = probs[gold];
    if (q < 1e-12) return {-std::log(1e-12), true};
    return {-std::log(q), false};
}

struct ForwardTrace {
    std::vector<LSTMTrace> paths;
    LSTMTrace hyp_fwd;
    LSTMTrace hyp_bwd;
    Mat path_enc; // h x J
    Vec H;
    Attention attn;
    LSTMTrace outer;
    Vec A;    // aggregate before dropout
    Vec mask; // dropout mask incl. 1/(1-rate) scale; empty when off
    Vec probs;
    int label = 0;
    double loss = 0.0;
};

inline ForwardTrace forward(const HRPEParams& p, const EmbeddedInstance& e, int label, double dropout = 0.0,
                            Rng* rng = nullptr) {
    ForwardTrace tr;
    const Eigen::Index h = p.hidden();
    const auto J = static_cast<Eigen::Index>(e.paths.size());
    if (J == 0) throw ModelError("forward over an empty premise");
    tr.path_enc.resize(h, J);
    tr.paths.reserve(e.paths.size());
    for (Eigen::Index j = 0; j < J; ++j) {
        tr.paths.push_back(lstm_forward(p.path, e.paths[static_cast<std::size_t>(j)]));
        tr.path_enc.col(j) = tr.paths.back().last();
    }
    tr.hyp_fwd = lstm_forward(p.hyp_fwd, e.hypothesis);
    tr.hyp_bwd = lstm_forward(p.hyp_bwd, e.hypothesis.rowwise().reverse());
    tr.H.resize(2 * h);
    tr.H << tr.hyp_fwd.last(), tr.hyp_bwd.last();
    tr.attn = attend_paths(tr.H, tr.path_enc, p.U);
    tr.outer = lstm_forward(p.outer, tr.path_enc);
    tr.A.resize(4 * h);
    tr.A << tr.H, tr.attn.pooled, tr.outer.last();
    Vec A = tr.A;
    if (dropout > 0.0 && rng) {
        tr.mask.resize(A.size());
        const double keep = 1.0 - dropout;
        for (Eigen::Index k = 0; k < A.size(); ++k) tr.mask[k] = rng->uniform() < keep ? 1.0 / keep : 0.0;
        A = A.cwiseProduct(tr.mask);
    }
    tr.probs = classify(A, p.W, p.bias);
    tr.label = label;
    tr.loss = cross_entropy(tr.probs, label).value;
    return tr;
}

// Gradients of a loss over embedding inputs, keyed by token.
struct EmbeddingGrads {
    std::map<Token, Vec> by_token;

    void add(const TokenSeq& seq, const Mat& dX) {
        for (std::size_t k = 0; k < seq.size(); ++k) {
            auto [it, ins] = by_token.try_emplace(seq[k], Vec::Zero(dX.rows()));
            it->second += dX.col(static_cast<Eigen::Index>(k));
        }
    }
    void add(const EmbeddingGrads& o) {
        for (const auto& [t, g] : o.by_token) {
            auto [it, ins] = by_token.try_emplace(t, Vec::Zero(g.size()));
            it->second += g;
        }
    }
};

// Accumulates scale * d(loss)/d(params) into grad. With emb_grad set, the
// gradient with respect to every input token vector is accumulated as well.
inline void backward(const HRPEParams& p, const EmbeddedInstance& e, const ForwardTrace& tr, double scale,
                     HRPEParams& grad, EmbeddingGrads* emb_grad = nullptr) {
    const Eigen::Index h = p.hidden();
    const auto J = tr.path_enc.cols();

    Vec dlogits = tr.probs;
    dlogits[tr.label] -= 1.0;
    dlogits *= scale;
    const Vec A_used = tr.mask.size() ? Vec(tr.A.cwiseProduct(tr.mask)) : tr.A;
    grad.W.noalias() += A_used * dlogits.transpose();
    grad.bias += dlogits;
    Vec dA = p.W * dlogits;
    if (tr.mask.size()) dA = dA.cwiseProduct(tr.mask);

    Vec dH = dA.head(2 * h);
    const Vec dp = dA.segment(2 * h, h);
    const Vec dP = dA.tail(h);

    Mat dpaths(h, J);
    lstm_backward(p.outer, tr.outer, dP, grad.outer, &dpaths);

    const auto& a = tr.attn.weights;
    const Vec dalpha = tr.path_enc.transpose() * dp;
    const Vec ds = a.cwiseProduct((dalpha.array() - a.dot(dalpha)).matrix());
    const Vec UtH = p.U.transpose() * tr.H;
    dpaths.noalias() += dp * a.transpose();
    dpaths.noalias() += UtH * ds.transpose();
    const Vec Pds = tr.path_enc * ds;
    dH.noalias() += p.U * Pds;
    grad.U.noalias() += tr.H * Pds.transpose();

    Mat dX;
    for (Eigen::Index j = 0; j < J; ++j) {
        const auto& ptr = tr.paths[static_cast<std::size_t>(j)];
        lstm_backward(p.path, ptr, dpaths.col(j), grad.path, emb_grad ? &dX : nullptr);
        if (emb_grad) emb_grad->add(e.path_tokens[static_cast<std::size_t>(j)], dX);
    }
    lstm_backward(p.hyp_fwd, tr.hyp_fwd, dH.head(h), grad.hyp_fwd, emb_grad ? &dX : nullptr);
    if (emb_grad) emb_grad->add(e.hyp_tokens, dX);
    lstm_backward(p.hyp_bwd, tr.hyp_bwd, dH.tail(h), grad.hyp_bwd, emb_grad ? &dX : nullptr);
    if (emb_grad) emb_grad->add(e.hyp_tokens, Mat(dX.rowwise().reverse()));
}

struct Prediction {
    int label;
    Vec probs;
};

inline Prediction predict(const EmbeddedInstance& e, const HRPEParams& p) {
    const auto tr = forward(p, e, 0);
    return {tr.probs[1] > tr.probs[0] ? 1 : 0, tr.probs};
}

inline Prediction predict(const PHLInstance& inst, const HRPEParams& p, const EmbeddingTable& table,
                          const ModelConfig& cfg) {
    return predict(embed_instance(inst, table, cfg), p);
}

struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;
    std::vector<std::vector<double>> m, v;

    // One update of every tensor of params from the matching grads tensor.
    template <class Tensors>
    void step(Tensors params, const Tensors& grads, double lr) {
        if (m.empty()) {
            for (const auto& tp : params) {
                m.emplace_back(static_cast<std::size_t>(tp.size()), 0.0);
                v.emplace_back(static_cast<std::size_t>(tp.size()), 0.0);
            }
        }
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t k = 0; k < params.size(); ++k) {
            double* w = params[k].data;
            const double* g = grads[k].data;
            auto& mk = m[k];
            auto& vk = v[k];
            for (std::size_t i = 0; i < mk.size(); ++i) {
                mk[i] = beta1 * mk[i] + (1.0 - beta1) * g[i];
                vk[i] = beta2 * vk[i] + (1.0 - beta2) * g[i] * g[i];
                w[i] -= lr * (mk[i] / c1) / (std::sqrt(vk[i] / c2) + eps);
            }
        }
    }
};

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch = 32;
    std::size_t epochs = 10;
    double dropout = 0.2;
    std::uint64_t seed = 7;
    bool freeze_embeddings = true;
    std::optional<HRPEParams> init_params;
    std::size_t threads = 1;
    // Called after every epoch with (epoch index from 1, params, table).
    std::function<void(std::size_t, const HRPEParams&, const EmbeddingTable&)> on_epoch;
};

struct TrainResult {
    HRPEParams params;
    EmbeddingTable table; // equals the input table when embeddings are frozen
    std::vector<double> loss_trace; // mean training loss per epoch
};

namespace detail {

// Gradient reduction is split into this many fixed contiguous chunks, summed
// in chunk order, so results do not depend on the worker count.
inline constexpr std::size_t kReduceChunks = 4;

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += threads) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline void apply_embedding_step(EmbeddingTable& table, const EmbeddingGrads& g, double lr, std::size_t t,
                                 std::map<Token, std::pair<Vec, Vec>>& moments) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (const auto& [tok, grad] : g.by_token) {
        auto [it, ins] = moments.try_emplace(tok, Vec::Zero(grad.size()), Vec::Zero(grad.size()));
        auto& [m, v] = it->second;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        const Vec upd = ((m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix() * lr;
        switch (tok.kind) {
        case Token::Kind::Entity: table.entities().col(tok.id) -= upd; break;
        case Token::Kind::Relation: table.relations().col(tok.id) -= upd; break;
        case Token::Kind::Word: table.set_word(tok.text, table.word(tok.text) - upd); break;
        }
    }
}

} // namespace detail

inline std::uint64_t instance_seed(std::uint64_t seed, std::size_t epoch, std::size_t index) {
    std::uint64_t x = seed * 0x9E3779B97F4A7C15ULL + epoch * 0xBF58476D1CE4E5B9ULL + index * 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

// Adam on the mean batch cross-entropy. Dropout hits the aggregate vector
// during training only; shuffling and dropout masks derive from the seed.
inline TrainResult train(const std::vector<PHLInstance>& data, const EmbeddingTable& table, const ModelConfig& mcfg,
                         const TrainConfig& cfg) {
    if (data.empty()) throw DataError("train: empty training set");
    if (cfg.lr < 0 || !std::isfinite(cfg.lr)) throw ConfigError("train: lr must be a non-negative number");
    if (cfg.batch == 0) throw ConfigError("train: batch must be positive");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("train: dropout must lie in [0, 1)");
    if (mcfg.dim != table.dim()) throw ConfigError("train: model dim does not match embedding dim");

    TrainResult res{cfg.init_params ? *cfg.init_params : HRPEParams::init(mcfg.dim, mcfg.hidden, cfg.seed), table, {}};
    if (res.params.dim() != static_cast<Eigen::Index>(mcfg.dim) ||
        res.params.hidden() != static_cast<Eigen::Index>(mcfg.hidden))
        throw ConfigError("train: initial parameters do not match the model configuration");

    Adam adam;
    std::map<Token, std::pair<Vec, Vec>> emb_moments;
    Rng order_rng(cfg.seed ^ 0x5DEECE66DULL);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    // Frozen embeddings never change, so instances are embedded once.
    std::vector<EmbeddedInstance> cached;
    if (cfg.freeze_embeddings) {
        cached.reserve(data.size());
        for (const auto& inst : data) cached.push_back(embed_instance(inst, table, mcfg));
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
            const std::size_t end = std::min(order.size(), b + cfg.batch);
            const std::size_t n = end - b;
            const double scale = 1.0 / static_cast<double>(n);
            const std::size_t chunks = std::min(detail::kReduceChunks, n);
            std::vector<HRPEParams> cg(chunks, HRPEParams::zeros_like(res.params));
            std::vector<EmbeddingGrads> ceg(chunks);
            std::vector<double> closs(chunks, 0.0);
            detail::parallel_for(chunks, cfg.threads, [&](std::size_t c) {
                const std::size_t lo = b + n * c / chunks, hi = b + n * (c + 1) / chunks;
                for (std::size_t k = lo; k < hi; ++k) {
                    const std::size_t idx = order[k];
                    Rng drop(instance_seed(cfg.seed, epoch, idx));
                    std::optional<EmbeddedInstance> fresh;
                    if (!cfg.freeze_embeddings) fresh = embed_instance(data[idx], res.table, mcfg);
                    const EmbeddedInstance& e = cfg.freeze_embeddings ? cached[idx] : *fresh;
                    const auto tr = forward(res.params, e, data[idx].label, cfg.dropout, &drop);
                    closs[c] += tr.loss;
                    backward(res.params, e, tr, scale, cg[c], cfg.freeze_embeddings ? nullptr : &ceg[c]);
                }
            });
            for (std::size_t c = 1; c < chunks; ++c) {
                cg[0].add(cg[c]);
                ceg[0].add(ceg[c]);
            }
            for (double l : closs) epoch_loss += l;
            adam.step(res.params.tensors(), cg[0].tensors(), cfg.lr);
            if (!cfg.freeze_embeddings && cfg.lr > 0)
                detail::apply_embedding_step(res.table, ceg[0], cfg.lr, adam.t, emb_moments);
        }
        res.loss_trace.push_back(epoch_loss / static_cast<double>(data.size()));
        if (cfg.on_epoch) cfg.on_epoch(epoch + 1, res.params, res.table);
    }
    return res;
}

// Hex-float text container; save/load round-trips bit-exactly.
inline void save_checkpoint(std::ostream& out, const HRPEParams& p, const ModelConfig& cfg, std::uint64_t seed) {
    out << "kgnli-hrpe 1\n";
    out << "dim " << cfg.dim << "\nhidden " << cfg.hidden << "\ninner_cap " << cfg.inner_cap << "\nouter_cap "
        << cfg.outer_cap << "\nseed " << seed << '\n';
    char buf[40];
    for (const auto& t : p.tensors()) {
        out << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", t.data[i]);
            out << (i ? " " : "") << buf;
        }
        out << '\n';
    }
    out << "end\n";
}

struct Checkpoint {
    HRPEParams params;
    ModelConfig config;
    std::uint64_t seed = 0;
};

inline Checkpoint load_checkpoint(std::istream& in) {
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "kgnli-hrpe" || version != 1) throw ModelError("checkpoint: unrecognized header");
    Checkpoint ck;
    std::string key;
    auto read_size = [&](std::size_t& v) {
        if (!(in >> v)) throw ModelError("checkpoint: bad value for " + key);
    };
    for (const char* expect : {"dim", "hidden", "inner_cap", "outer_cap"}) {
        in >> key;
        if (key != expect) throw ModelError(std::string("checkpoint: expected ") + expect);
        read_size(key == "dim"           ? ck.config.dim
                  : key == "hidden"      ? ck.config.hidden
                  : key == "inner_cap"   ? ck.config.inner_cap
                                         : ck.config.outer_cap);
    }
    in >> key;
    if (key != "seed" || !(in >> ck.seed)) throw ModelError("checkpoint: missing seed");
    ck.params = HRPEParams::zeros(static_cast<Eigen::Index>(ck.config.dim), static_cast<Eigen::Index>(ck.config.hidden));
    for (auto& t : ck.params.tensors()) {
        std::string tag, name;
        Eigen::Index rows = 0, cols = 0;
        in >> tag >> name >> rows >> cols;
        if (tag != "tensor" || name != t.name || rows != t.rows || cols != t.cols)
            throw ModelError("checkpoint: expected tensor " + t.name);
        std::string tok;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            if (!(in >> tok)) throw ModelError("checkpoint: truncated tensor " + t.name);
            char* endp = nullptr;
            t.data[i] = std::strtod(tok.c_str(), &endp);
            if (*endp != '\0') throw ModelError("checkpoint: bad value in tensor " + t.name);
        }
    }
    in >> key;
    if (key != "end") throw ModelError("checkpoint: missing end marker");
    return ck;
}

} // namespace kgnli
