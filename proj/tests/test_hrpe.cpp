// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 kgnli contributors

#include <gtest/gtest.h>

#include <sstream>

#include "kgnli/hrpe.hpp"
#include "support.hpp"

using namespace kgnli;
using namespace kgnli::testing;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-loop LSTM straight from the cell equations.
std::vector<double> oracle_lstm(const LSTMCellParams& p, const Mat& X) {
    const int h = static_cast<int>(p.hidden_dim()), d = static_cast<int>(p.input_dim());
    std::vector<double> hs(h, 0.0), cs(h, 0.0);
    for (int t = 0; t < X.cols(); ++t) {
        std::vector<double> z(4 * h);
        for (int r = 0; r < 4 * h; ++r) {
            double acc = p.b[r];
            for (int k = 0; k < d; ++k) acc += p.Wx(r, k) * X(k, t);
            for (int k = 0; k < h; ++k) acc += p.Wh(r, k) * hs[k];
            z[r] = acc;
        }
        for (int k = 0; k < h; ++k) {
            const double i = sig(z[k]), f = sig(z[h + k]), o = sig(z[2 * h + k]), g = std::tanh(z[3 * h + k]);
            cs[k] = f * cs[k] + i * g;
            hs[k] = o * std::tanh(cs[k]);
        }
    }
    return hs;
}

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

ModelConfig small_model(std::size_t dim = 3, std::size_t hidden = 4) {
    ModelConfig m;
    m.dim = dim;
    m.hidden = hidden;
    return m;
}

double train_accuracy(const std::vector<PHLInstance>& data, const HRPEParams& p, const EmbeddingTable& t,
                      const ModelConfig& m) {
    std::size_t ok = 0;
    for (const auto& i : data) ok += predict(i, p, t, m).label == i.label;
    return static_cast<double>(ok) / data.size();
}

} // namespace

TEST(Lstm, MatchesCellEquations) {
    Rng rng(1);
    const auto p = random_params(rng, 5, 3).path;
    const Mat X = random_mat(rng, 5, 6);
    const auto got = lstm_forward(p, X).last();
    const auto want = oracle_lstm(p, X);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
}

TEST(Lstm, ZeroParamsGiveZeroState) {
    const auto p = LSTMCellParams::zeros(4, 3);
    Rng rng(2);
    EXPECT_EQ(lstm_forward(p, random_mat(rng, 4, 5)).last(), Vec::Zero(3));
    EXPECT_THROW(lstm_forward(p, Mat(4, 0)), ModelError);
    EXPECT_THROW(lstm_forward(p, Mat(3, 2)), ModelError);
}

TEST(Lstm, PalindromeWithSharedWeightsIsSymmetric) {
    Rng rng(3);
    auto p = random_params(rng, 4, 3);
    p.hyp_bwd = p.hyp_fwd;
    Mat X = random_mat(rng, 4, 5);
    X.col(3) = X.col(1);
    X.col(4) = X.col(0);
    const Vec H = encode_hypothesis(X, p);
    EXPECT_LT((H.head(3) - H.tail(3)).norm(), 1e-14);
    const Vec one = encode_hypothesis(X.leftCols(1), p);
    EXPECT_LT((one.head(3) - one.tail(3)).norm(), 1e-14);
}

TEST(Attention, SingleAndIdenticalPaths) {
    Rng rng(4);
    const Vec H = random_mat(rng, 6, 1).col(0);
    const Mat U = random_mat(rng, 6, 3);
    const Mat one = random_mat(rng, 3, 1);
    auto a = attend_paths(H, one, U);
    EXPECT_DOUBLE_EQ(a.weights[0], 1.0);
    EXPECT_LT((a.pooled - one.col(0)).norm(), 1e-15);

    Mat two(3, 2);
    two << one, one;
    a = attend_paths(H, two, U);
    EXPECT_DOUBLE_EQ(a.weights[0], 0.5);
    EXPECT_DOUBLE_EQ(a.weights[1], 0.5);

    const Mat many = random_mat(rng, 3, 5);
    a = attend_paths(H, many, U);
    Vec s(5), w(5);
    for (int j = 0; j < 5; ++j) s[j] = H.dot(U * many.col(j));
    double z = 0;
    for (int j = 0; j < 5; ++j) z += std::exp(s[j]);
    for (int j = 0; j < 5; ++j) w[j] = std::exp(s[j]) / z;
    EXPECT_LT((a.weights - w).norm(), 1e-12);
    EXPECT_LT((a.pooled - many * w).norm(), 1e-12);
    EXPECT_THROW(attend_paths(H, Mat(3, 0), U), ModelError);
}

TEST(Classifier, Examples) {
    const Vec A = Vec::Ones(8);
    const Mat W0 = Mat::Zero(8, 2);
    Vec b = Vec::Zero(2);
    EXPECT_EQ(classify(A, W0, b), (Vec(2) << 0.5, 0.5).finished());
    b << 10, -10;
    const Vec sat = classify(A, W0, b);
    EXPECT_NEAR(sat[0], 1.0, 1e-8);
    EXPECT_NEAR(sat[1], 0.0, 1e-8);
    EXPECT_THROW(classify(Vec::Ones(7), W0, b), ModelError);

    EXPECT_EQ(cross_entropy((Vec(2) << 1.0, 0.0).finished(), 0).value, 0.0);
    EXPECT_NEAR(cross_entropy((Vec(2) << 0.5, 0.5).finished(), 1).value, 0.6931, 1e-4);
    const auto clamped = cross_entropy((Vec(2) << 1.0, 0.0).finished(), 1);
    EXPECT_TRUE(clamped.clamped);
    EXPECT_NEAR(clamped.value, -std::log(1e-12), 1e-9);
}

TEST(Backward, GradientCheckEveryTensor) {
    Rng rng(5);
    const auto params = random_params(rng, 3, 4);
    EmbeddingTable table(3, 0, 0, 11);
    for (int label : {0, 1}) {
        const auto inst = random_instance(rng, 2, 3, 3, label);
        const auto e = embed_instance(inst, table, small_model());
        const auto gc = gradient_check(params, e, label);
        EXPECT_LT(gc.max_rel_err, 1e-4) << gc.worst_tensor;
        // Three d=3 cells, one h=4 outer cell, U, W, bias.
        EXPECT_EQ(gc.checked, 3u * 16 * (3 + 4 + 1) + 16 * (4 + 4 + 1) + 8 * 4 + 16 * 2 + 2);
    }
}

TEST(Backward, EmbeddingGradientsMatchFiniteDifferences) {
    Rng rng(6);
    const auto params = random_params(rng, 3, 4);
    EmbeddingTable table(3, 0, 0, 12);
    const auto inst = random_instance(rng, 2, 3, 3, 0);
    const auto mcfg = small_model();
    const auto e = embed_instance(inst, table, mcfg);
    HRPEParams g = HRPEParams::zeros_like(params);
    EmbeddingGrads eg;
    backward(params, e, forward(params, e, 0), 1.0, g, &eg);
    for (const auto& [tok, grad] : eg.by_token) {
        for (int k = 0; k < 3; ++k) {
            EmbeddingTable up = table, down = table;
            Vec v = table.word(tok.text);
            v[k] += 1e-5;
            up.set_word(tok.text, v);
            v[k] -= 2e-5;
            down.set_word(tok.text, v);
            const double num = (forward(params, embed_instance(inst, up, mcfg), 0).loss -
                                forward(params, embed_instance(inst, down, mcfg), 0).loss) /
                               2e-5;
            EXPECT_NEAR(grad[k], num, 1e-6 + 1e-4 * std::abs(num)) << tok.text;
        }
    }
}

TEST(Backward, SaturatedCorrectPredictionHasNoGradient) {
    Rng rng(7);
    auto params = random_params(rng, 3, 4);
    params.W.setZero();
    params.bias << 40, -40;
    EmbeddingTable table(3, 0, 0, 1);
    const auto e = embed_instance(random_instance(rng, 2, 3, 3, 0), table, small_model());
    HRPEParams g = HRPEParams::zeros_like(params);
    backward(params, e, forward(params, e, 0), 1.0, g);
    EXPECT_LT(std::sqrt(g.squared_norm()), 1e-6);
}

TEST(Backward, DuplicatedBatchEqualsSingle) {
    Rng rng(8);
    const auto params = random_params(rng, 3, 4);
    EmbeddingTable table(3, 0, 0, 1);
    const auto e = embed_instance(random_instance(rng, 2, 3, 3, 1), table, small_model());
    const auto tr = forward(params, e, 1);
    HRPEParams single = HRPEParams::zeros_like(params), pair = HRPEParams::zeros_like(params);
    backward(params, e, tr, 1.0, single);
    backward(params, e, tr, 0.5, pair);
    backward(params, e, tr, 0.5, pair);
    auto a = single.tensors(), b = pair.tensors();
    for (std::size_t k = 0; k < a.size(); ++k)
        for (Eigen::Index i = 0; i < a[k].size(); ++i) EXPECT_NEAR(a[k].data[i], b[k].data[i], 1e-15);
}

TEST(Forward, DistributionsSumToOneAndPermutationInvariant) {
    Rng rng(9);
    EmbeddingTable table(4, 0, 0, 3);
    const auto mcfg = small_model(4, 5);
    for (int trial = 0; trial < 100; ++trial) {
        const auto params = random_params(rng, 4, 5, 1.0);
        auto inst = random_instance(rng, 1 + rng.below(6), 1 + rng.below(5), 1 + rng.below(5), 0);
        const auto e = embed_instance(inst, table, mcfg);
        const auto tr = forward(params, e, 0);
        EXPECT_NEAR(tr.attn.weights.sum(), 1.0, 1e-12);
        EXPECT_NEAR(tr.probs.sum(), 1.0, 1e-12);
        const auto base = predict(inst, params, table, mcfg);
        rng.shuffle(inst.premise_paths);
        const auto shuffled = predict(inst, params, table, mcfg);
        EXPECT_EQ(base.label, shuffled.label);
        EXPECT_EQ(base.probs, shuffled.probs); // bit-exact
    }
}

TEST(Predict, SaturatedBiasFixesLabel) {
    Rng rng(10);
    auto params = random_params(rng, 3, 4);
    params.W.setZero();
    params.bias << -30, 30;
    EmbeddingTable table(3, 0, 0, 1);
    for (int k = 0; k < 20; ++k) EXPECT_EQ(predict(random_instance(rng, 3, 3, 3, 0), params, table, small_model()).label, 1);
}

TEST(Embed, CapsAndErrors) {
    Rng rng(11);
    EmbeddingTable table(3, 2, 1, 1);
    ModelConfig m = small_model();
    m.inner_cap = 2;
    m.outer_cap = 3;
    auto inst = random_instance(rng, 5, 4, 4, 0);
    const auto e = embed_instance(inst, table, m);
    EXPECT_EQ(e.paths.size(), 3u);
    EXPECT_TRUE(e.premise_truncated);
    for (const auto& p : e.paths) EXPECT_EQ(p.cols(), 2);
    EXPECT_EQ(e.hypothesis.cols(), 2);
    EXPECT_EQ(e.truncated, (std::vector<bool>{true, true, true}));

    inst.premise_paths[0].push_back(Token::entity(9));
    inst.premise_paths[0].insert(inst.premise_paths[0].begin(), Token::entity(9));
    EXPECT_THROW(embed_instance(inst, table, small_model()), DataError);
    inst.premise_paths.clear();
    EXPECT_THROW(embed_instance(inst, table, m), DataError);
}

TEST(Train, ZeroLearningRateLeavesParams) {
    const auto data = separable_instances(10, 1);
    EmbeddingTable table(3, 0, 0, 2);
    TrainConfig c;
    c.lr = 0.0;
    c.epochs = 3;
    c.batch = 4;
    const auto init = HRPEParams::init(3, 4, c.seed);
    EXPECT_TRUE(train(data, table, small_model(), c).params.bit_equal(init));
    c.freeze_embeddings = false;
    const auto r = train(data, table, small_model(), c);
    EXPECT_TRUE(r.params.bit_equal(init));
    EXPECT_EQ(r.table.word("yes"), table.word("yes"));
}

TEST(Train, DeterministicAndThreadInvariant) {
    const auto data = separable_instances(30, 2);
    EmbeddingTable table(3, 0, 0, 2);
    TrainConfig c;
    c.epochs = 3;
    c.batch = 7;
    const auto a = train(data, table, small_model(), c);
    const auto b = train(data, table, small_model(), c);
    EXPECT_TRUE(a.params.bit_equal(b.params));
    EXPECT_EQ(a.loss_trace, b.loss_trace);
    c.threads = 3;
    const auto t = train(data, table, small_model(), c);
    EXPECT_TRUE(a.params.bit_equal(t.params));
    c.seed = 99;
    EXPECT_FALSE(a.params.bit_equal(train(data, table, small_model(), c).params));
}

TEST(Train, RejectsBadConfig) {
    const auto data = separable_instances(4, 3);
    EmbeddingTable table(3, 0, 0, 2);
    TrainConfig c;
    c.batch = 0;
    EXPECT_THROW(train(data, table, small_model(), c), ConfigError);
    c = {};
    c.dropout = 1.0;
    EXPECT_THROW(train(data, table, small_model(), c), ConfigError);
    c = {};
    c.lr = -1;
    EXPECT_THROW(train(data, table, small_model(), c), ConfigError);
    EXPECT_THROW(train({}, table, small_model(), TrainConfig{}), DataError);
    EXPECT_THROW(train(data, table, small_model(4, 4), TrainConfig{}), ConfigError);
}

TEST(Train, SeparableSetReachesFullAccuracy) {
    const auto data = separable_instances(50, 4);
    EmbeddingTable table(8, 0, 0, 5);
    const auto m = small_model(8, 8);
    TrainConfig c;
    c.epochs = 30;
    c.batch = 5;
    c.lr = 0.01;
    const auto r = train(data, table, m, c);
    EXPECT_EQ(train_accuracy(data, r.params, table, m), 1.0);
    EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());

    // Held-out data from the same generator.
    EXPECT_GE(train_accuracy(separable_instances(200, 77), r.params, table, m), 0.95);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(12);
    const auto p = random_params(rng, 3, 4);
    std::stringstream ss;
    save_checkpoint(ss, p, small_model(), 1234);
    const auto ck = load_checkpoint(ss);
    EXPECT_TRUE(ck.params.bit_equal(p));
    EXPECT_EQ(ck.seed, 1234u);
    EXPECT_EQ(ck.config.dim, 3u);
    EXPECT_EQ(ck.config.hidden, 4u);

    std::istringstream bad("not a checkpoint\n");
    EXPECT_THROW(load_checkpoint(bad), ModelError);
    std::string text = ss.str();
    std::istringstream cut(text.substr(0, text.size() / 2));
    EXPECT_THROW(load_checkpoint(cut), ModelError);
}
