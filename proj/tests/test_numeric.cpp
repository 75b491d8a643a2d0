// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"

using namespace fkpd;
using namespace fkpd::testing;

TEST(DenseArray, ShapeAndData) {
    DenseArray a({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    EXPECT_EQ(a.rows(), 2u);
    EXPECT_EQ(a.cols(), 3u);
    EXPECT_EQ(a(1, 2), 6.0);
    EXPECT_THROW(DenseArray({2, 3}, std::vector<double>{1, 2}), ShapeError);
    EXPECT_EQ(DenseArray::vector({1, 2}).rows(), 1u);
    EXPECT_EQ(DenseArray({0, 0}).cols(), 0u);
    EXPECT_EQ(a.reshaped({3, 2})(2, 1), 6.0);
    EXPECT_THROW(a.reshaped({4, 2}), ShapeError);
}

TEST(DenseArray, FiniteCheck) {
    DenseArray a = DenseArray::matrix(2, 2);
    EXPECT_NO_THROW(require_finite(a, "a"));
    a(0, 1) = std::nan("");
    EXPECT_THROW(require_finite(a, "a"), NumericError);
}

TEST(Kernels, SigmoidStableAtExtremes) {
    EXPECT_DOUBLE_EQ(kernels::sigmoid(0.0), 0.5);
    EXPECT_EQ(kernels::sigmoid(-1000.0), 0.0);
    EXPECT_EQ(kernels::sigmoid(1000.0), 1.0);
    for (double x : {-3.0, -0.2, 0.7, 5.0})
        EXPECT_NEAR(kernels::sigmoid(x) + kernels::sigmoid(-x), 1.0, 1e-15);
}

TEST(Rng, SameSeedSameStream) {
    Rng a(7), b(7), c(8);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.normal(), b.normal());
    EXPECT_NE(Rng(7).normal(), c.normal());
    for (int i = 0; i < 1000; ++i) {
        const auto v = a.uniform_int(3, 5);
        EXPECT_GE(v, 3u);
        EXPECT_LE(v, 5u);
    }
}

TEST(Mlp, ZeroNetGivesZero) {
    const MlpParams p = MlpParams::zeros({3, 5, 2}, Activation::silu);
    const DenseArray y = mlp_forward(p, DenseArray::vector({1.0, -2.0, 3.0}));
    for (double v : y.raw()) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, IdentityLinearLayer) {
    MlpParams p = MlpParams::zeros({2, 2}, Activation::identity);
    p.layers()[0].weight(0, 0) = 1.0;
    p.layers()[0].weight(1, 1) = 1.0;
    const DenseArray y = mlp_forward(p, DenseArray::vector({1.0, 2.0}));
    EXPECT_EQ(y[0], 1.0);
    EXPECT_EQ(y[1], 2.0);
}

TEST(Mlp, HandComputedTwoFourTwo) {
    // Reference values computed offline with numpy.
    MlpParams p = MlpParams::zeros({2, 4, 2}, Activation::silu);
    p.layers()[0].weight.raw() = {0.1, -0.2, 0.3, 0.5, 0.4, 0.25, -0.6, 0.0};
    p.layers()[0].bias.raw() = {0.05, -0.1, 0.0, 0.2};
    p.layers()[1].weight.raw() = {0.3, -0.1, 0.2, 0.4, -0.5, 0.6, 0.7, 0.1};
    p.layers()[1].bias.raw() = {0.01, -0.02};
    const DenseArray y = mlp_forward(p, DenseArray::vector({1.5, -0.5}));
    EXPECT_NEAR(y[0], 0.19582278096544495, 1e-14);
    EXPECT_NEAR(y[1], 0.2760827560831257, 1e-14);
}

TEST(Mlp, DimensionMismatchRejected) {
    const MlpParams p = MlpParams::zeros({3, 4, 2}, Activation::silu);
    EXPECT_THROW(mlp_forward(p, DenseArray::matrix(2, 2)), ShapeError);
    std::vector<DenseLayer> bad{{DenseArray::matrix(2, 3), DenseArray({3})},
                                {DenseArray::matrix(4, 1), DenseArray({1})}};
    EXPECT_THROW(MlpParams(bad, Activation::silu), ShapeError);
}

TEST(Mlp, ReferentiallyTransparentAndBatchConsistent) {
    Rng rng(3);
    const MlpParams p = MlpParams::init({3, 6, 2}, Activation::silu, rng);
    const DenseArray x = rng.normal_array({5, 3});
    EXPECT_EQ(mlp_forward(p, x), mlp_forward(p, x));
    const DenseArray all = mlp_forward(p, x);
    for (std::size_t r = 0; r < 5; ++r) {
        DenseArray one = DenseArray::matrix(1, 3);
        for (std::size_t c = 0; c < 3; ++c) one(0, c) = x(r, c);
        const DenseArray y = mlp_forward(p, one);
        EXPECT_EQ(y(0, 0), all(r, 0));
        EXPECT_EQ(y(0, 1), all(r, 1));
    }
}

TEST(Mlp, FlattenAssignRoundTripIsBitExact) {
    Rng rng(11);
    const MlpParams p = MlpParams::init({4, 7, 3}, Activation::silu, rng);
    MlpParams q = MlpParams::zeros({4, 7, 3}, Activation::silu);
    q.assign(p.flatten());
    EXPECT_EQ(p, q);
    EXPECT_EQ(p.parameter_count(), 4u * 7 + 7 + 7 * 3 + 3);
    EXPECT_THROW(q.assign(std::vector<double>(3)), ShapeError);
}

TEST(Mlp, TapedForwardMatchesPlainBitwise) {
    Rng rng(5);
    const MlpParams p = MlpParams::init({3, 5, 5, 2}, Activation::silu, rng);
    const DenseArray x = rng.normal_array({4, 3});
    Tape tape;
    const Var y = mlp_forward(tape, p, tape.constant(x));
    EXPECT_EQ(tape.value(y), mlp_forward(p, x));
}

TEST(Tape, SumOfParametersGivesOnes) {
    Tape tape;
    const Var a = tape.parameter(DenseArray::vector({1.0, -2.0, 3.0}), 0);
    const Var b = tape.parameter(DenseArray::vector({4.0, 5.0}), 3);
    const Var loss = tape.add(tape.sum(a), tape.sum(b));
    const std::vector<double> g = loss_gradient(tape, loss, 5);
    for (double v : g) EXPECT_EQ(v, 1.0);
}

TEST(Tape, HalfSquaredNormGivesTheta) {
    const std::vector<double> theta{0.5, -1.5, 2.0, 0.25};
    Tape tape;
    const Var p = tape.parameter(DenseArray({4}, theta), 0);
    const Var loss = tape.scale(tape.sum(tape.square(p)), 0.5);
    const std::vector<double> g = loss_gradient(tape, loss, 4);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g[i], theta[i]);
}

TEST(Tape, DisconnectedLossHasZeroGradient) {
    Tape tape;
    tape.parameter(DenseArray::vector({1.0, 2.0}), 0);
    const Var c = tape.constant(DenseArray::scalar(3.0));
    const Var loss = tape.mean(tape.square(c));
    const std::vector<double> g = loss_gradient(tape, loss, 2);
    EXPECT_EQ(g, std::vector<double>(2, 0.0));
}

TEST(Tape, NonFiniteLossRejected) {
    Tape tape;
    const Var p = tape.parameter(DenseArray::scalar(std::numeric_limits<double>::infinity()), 0);
    EXPECT_THROW(loss_gradient(tape, tape.sum(p), 1), NumericError);
}

TEST(Tape, NonScalarRootRejected) {
    Tape tape;
    const Var p = tape.parameter(DenseArray::vector({1.0, 2.0}), 0);
    EXPECT_THROW(tape.backward(p), ShapeError);
}

TEST(Tape, EveryOpMatchesFiniteDifferences) {
    // loss = mean(block_mean(sigmoid(silu(xW + b)) ** 2 - 0.3 * xW, 2)) + 0.1
    Rng rng(17);
    const DenseArray x = rng.normal_array({4, 3});
    std::vector<double> flat(3 * 2 + 2);
    for (double& v : flat) v = rng.normal();
    auto run = [&](std::span<const double> f, std::vector<double>* grad) {
        Tape tape;
        const Var w = tape.parameter(DenseArray({3, 2}, std::vector<double>(f.begin(), f.begin() + 6)), 0);
        const Var b = tape.parameter(DenseArray({2}, std::vector<double>(f.begin() + 6, f.end())), 6);
        const Var xw = tape.matmul(tape.constant(x), w);
        const Var h = tape.sigmoid(tape.silu(tape.add_bias(xw, b)));
        const Var z = tape.sub(tape.square(h), tape.scale(xw, 0.3));
        const Var loss = tape.add_scalar(tape.mean(tape.block_mean(z, 2)), 0.1);
        if (grad) *grad = loss_gradient(tape, loss, 8);
        return tape.scalar(loss);
    };
    std::vector<double> g;
    run(flat, &g);
    const GradCheckResult r = gradcheck([&](std::span<const double> f) { return run(f, nullptr); }, flat, g);
    EXPECT_LT(r.relative_error, 1e-8);
}

TEST(Tape, ScalarBroadcastInAddSub) {
    Tape tape;
    const Var v = tape.parameter(DenseArray::matrix(3, 1, 2.0), 0);
    const Var s = tape.parameter(DenseArray::scalar(1.0), 3);
    const Var loss = tape.sum(tape.sub(v, s));
    EXPECT_DOUBLE_EQ(tape.scalar(loss), 3.0);
    const std::vector<double> g = loss_gradient(tape, loss, 4);
    EXPECT_EQ(g, (std::vector<double>{1, 1, 1, -3}));
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> before = p;
    AdamState s(3);
    for (int i = 0; i < 5; ++i) adam_step(p, std::vector<double>(3, 0.0), s);
    EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepIsSignTimesStepSize) {
    // m_hat = g, v_hat = g^2 after bias correction, so the update is
    // lr * g / (|g| + eps).
    std::vector<double> p{0.0, 0.0, 0.0};
    const std::vector<double> g{0.5, -3.0, 1e-3};
    AdamState s(3);
    AdamConfig cfg;
    adam_step(p, g, s, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
        const double expected = -cfg.step_size * g[i] / (std::abs(g[i]) + cfg.epsilon);
        EXPECT_NEAR(p[i], expected, 1e-18);
    }
}

TEST(Adam, RejectsNonFiniteAndMismatch) {
    std::vector<double> p{0.0, 0.0};
    AdamState s(2);
    EXPECT_THROW(adam_step(p, std::vector<double>{1.0, std::nan("")}, s), NumericError);
    EXPECT_THROW(adam_step(p, std::vector<double>{1.0}, s), ShapeError);
}

TEST(Adam, HundredStepsDeterministic) {
    auto run = [] {
        Rng rng(9);
        std::vector<double> p(10);
        for (double& v : p) v = rng.normal();
        AdamState s(p.size());
        for (int i = 0; i < 100; ++i) {
            std::vector<double> g(p.size());
            for (std::size_t j = 0; j < p.size(); ++j) g[j] = p[j] + 0.1 * rng.normal();
            adam_step(p, g, s);
        }
        return p;
    };
    EXPECT_EQ(run(), run());
}
