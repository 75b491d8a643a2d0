// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"

using namespace fkpd;
using namespace fkpd::testing;

TEST(Schedule, CumulativeProductSmallCases) {
    const DiffusionSchedule s({0.1, 0.2, 0.3});
    EXPECT_NEAR(s.alpha_bar(1), 0.9, 1e-15);
    EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
    EXPECT_NEAR(s.alpha_bar(3), 0.504, 1e-15);
    EXPECT_DOUBLE_EQ(make_schedule(1, 0.5, 0.5).alpha_bar(1), 0.5);
}

TEST(Schedule, DefaultAlphaBarMatchesIndependentProduct) {
    const DiffusionSchedule s = make_schedule(50, 1e-4, 0.2);
    // numpy: prod(1 - linspace(1e-4, 0.2, 50))
    EXPECT_NEAR(s.alpha_bar(50), 0.004616111011266998, 1e-12);
    double prod = 1.0;
    for (std::size_t t = 1; t <= 50; ++t) {
        prod *= 1.0 - (1e-4 + (0.2 - 1e-4) * static_cast<double>(t - 1) / 49.0);
        EXPECT_NEAR(s.alpha_bar(t), prod, 1e-14);
    }
    EXPECT_LT(s.alpha_bar(50), 0.05);
}

TEST(Schedule, InvariantsAndErrors) {
    const DiffusionSchedule s = make_schedule(20, 1e-3, 0.3);
    for (std::size_t t = 2; t <= 20; ++t) {
        EXPECT_GE(s.beta(t), s.beta(t - 1));
        EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
        EXPECT_DOUBLE_EQ(s.alpha(t), 1.0 - s.beta(t));
    }
    EXPECT_THROW(make_schedule(0, 0.1, 0.2), ConfigError);
    EXPECT_THROW(make_schedule(5, 0.0, 0.2), ConfigError);
    EXPECT_THROW(make_schedule(5, 0.3, 0.2), ConfigError);
    EXPECT_THROW(make_schedule(5, 0.1, 1.0), ConfigError);
    EXPECT_THROW(DiffusionSchedule({0.2, 0.1}), ConfigError);
    EXPECT_THROW(s.alpha_bar(0), ConfigError);
    EXPECT_THROW(s.alpha_bar(21), ConfigError);
}

TEST(ForwardNoise, ClosedFormCases) {
    // alpha_bar = 0.81 with a single beta of 0.19.
    const DiffusionSchedule s({0.19});
    const DenseArray x = forward_noise(DenseArray::vector({1.0, 0.0}), 1, DenseArray::vector({0.0, 0.0}), s);
    EXPECT_NEAR(x[0], 0.9, 1e-15);
    EXPECT_EQ(x[1], 0.0);
    const DenseArray e = DenseArray::vector({0.3, -2.0});
    const DenseArray y = forward_noise(DenseArray::vector({0.0, 0.0}), 1, e, s);
    EXPECT_NEAR(y[0], std::sqrt(0.19) * 0.3, 1e-15);
    EXPECT_NEAR(y[1], std::sqrt(0.19) * -2.0, 1e-15);
    EXPECT_THROW(forward_noise(e, 2, e, s), ConfigError);
    EXPECT_THROW(forward_noise(e, 1, DenseArray::vector({1.0}), s), ShapeError);
}

TEST(ForwardNoise, Superposition) {
    const DiffusionSchedule s = make_schedule(10, 1e-3, 0.2);
    Rng rng(2);
    const DenseArray x1 = rng.normal_array({3, 2}), x2 = rng.normal_array({3, 2});
    const DenseArray e1 = rng.normal_array({3, 2}), e2 = rng.normal_array({3, 2});
    DenseArray xs = x1, es = e1;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = 2.0 * x1[i] - 0.5 * x2[i];
        es[i] = 2.0 * e1[i] - 0.5 * e2[i];
    }
    const DenseArray lhs = forward_noise(xs, 6, es, s);
    const DenseArray a = forward_noise(x1, 6, e1, s), b = forward_noise(x2, 6, e2, s);
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], 2.0 * a[i] - 0.5 * b[i], 1e-13);
}

TEST(TimeEmbedding, SinCosPairs) {
    std::vector<double> e(4);
    time_embedding(3, e);
    // [sin(t f0), sin(t f1), cos(t f0), cos(t f1)], f_i = exp(-ln(10000) i / 2)
    EXPECT_NEAR(e[0], std::sin(3.0), 1e-15);
    EXPECT_NEAR(e[1], std::sin(3.0 / 100.0), 1e-15);
    EXPECT_NEAR(e[2], std::cos(3.0), 1e-15);
    EXPECT_NEAR(e[3], std::cos(3.0 / 100.0), 1e-15);
}

TEST(NoiseModelTest, InputLayoutAndShapes) {
    const NoiseModel m = small_model(1, 3, 2);
    EXPECT_EQ(m.net().input_dim(), 2u + 3u + 4u);
    EXPECT_EQ(m.net().output_dim(), 2u);
    Rng rng(4);
    const DenseArray a = rng.normal_array({5, 2}), s = rng.normal_array({5, 3});
    const std::vector<std::size_t> ts{1, 2, 3, 4, 5};
    const DenseArray in = m.build_input(a, s, ts);
    EXPECT_EQ(in(2, 0), a(2, 0));
    EXPECT_EQ(in(2, 3), s(2, 1));
    EXPECT_EQ(m.predict(a, s, ts).shape(), (std::vector<std::size_t>{5, 2}));
    EXPECT_THROW(m.predict(a, rng.normal_array({5, 2}), ts), ShapeError);
    EXPECT_THROW(m.predict(a, s, std::vector<std::size_t>{1, 2}), ShapeError);
    EXPECT_THROW(m.predict(a, s, std::vector<std::size_t>{1, 2, 3, 4, 11}), ConfigError);
}

TEST(NoiseModelTest, BoxNormalizationRoundTrip) {
    NoiseModelConfig mc;
    mc.state_dim = 2;
    mc.hidden = {4};
    Rng rng(1);
    const NoiseModel m = NoiseModel::create(mc, make_schedule(5, 0.01, 0.2), rng,
                                            ActionBox{{-0.3, 0.0}, {0.3, 2.0}});
    const DenseArray a({2, 2}, std::vector<double>{-0.3, 2.0, 0.15, 1.0});
    const DenseArray u = m.normalize_actions(a);
    EXPECT_DOUBLE_EQ(u(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(u(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(u(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(u(1, 1), 0.0);
    const DenseArray back = m.denormalize_actions(u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back[i], a[i], 1e-15);
    EXPECT_EQ(small_model(1).normalize_actions(a), a); // unbounded: identity
}

TEST(Sampler, ZeroModelSingleStepVariance) {
    // eps == 0 and T = 1: a_0 = a_1 / sqrt(alpha_1), so Var = 1 / alpha_1.
    NoiseModelConfig mc;
    mc.time_embed_dim = 2;
    mc.hidden = {2};
    const NoiseModel m = NoiseModel::zero(mc, make_schedule(1, 0.5, 0.5));
    Rng rng(21);
    const DenseArray a = sample_unconditional(m, 100000, rng);
    std::vector<double> col;
    for (std::size_t i = 0; i < a.rows(); ++i) col.push_back(a(i, 0));
    EXPECT_NEAR(variance(col) / 2.0, 1.0, 0.02);
}

namespace {

/// Exact noise predictor for an isotropic Gaussian target N(mean, s^2 I).
struct GaussianScore {
    DiffusionSchedule sched;
    double mean = 0.0;
    double stddev = 1.0;

    DenseArray predict(const DenseArray& x, const DenseArray&, std::span<const std::size_t> ts) const {
        DenseArray out = x;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            const double ab = sched.alpha_bar(ts[r]);
            const double var = ab * stddev * stddev + 1.0 - ab;
            for (std::size_t c = 0; c < x.cols(); ++c)
                out(r, c) = std::sqrt(1.0 - ab) * (x(r, c) - std::sqrt(ab) * mean) / var;
        }
        return out;
    }
    Var predict(Tape& tape, const DenseArray& x, const DenseArray& s, std::span<const std::size_t> ts) const {
        return tape.constant(predict(x, s, ts));
    }
    std::size_t action_dim() const { return 1; }
    std::size_t state_dim() const { return 0; }
    const DiffusionSchedule& schedule() const { return sched; }
    std::size_t parameter_count() const { return 0; }
};

} // namespace

TEST(Sampler, ExactScoreReproducesGaussianMoments) {
    const GaussianScore g{make_schedule(200, 1e-4, 0.05), 1.5, 0.5};
    Rng rng(8);
    const DenseArray a = reverse_sample(g, DenseArray({40000, 0}), rng);
    const std::vector<double> v(a.raw().begin(), a.raw().end());
    EXPECT_NEAR(mean(v), 1.5, 4.0 * sterr(v) + 0.01);
    EXPECT_NEAR(std::sqrt(variance(v)), 0.5, 0.02);
}

TEST(Sampler, DeterministicPerSeedAndClipped) {
    NoiseModelConfig mc;
    mc.state_dim = 2;
    mc.hidden = {8};
    Rng init(3);
    const NoiseModel m = NoiseModel::create(mc, make_schedule(10, 1e-3, 0.2), init,
                                            ActionBox::symmetric(2, 0.05));
    const DenseArray states({6, 2}, 0.1);
    Rng r1(5), r2(5);
    const DenseArray a = reverse_sample(m, states, r1);
    EXPECT_EQ(a, reverse_sample(m, states, r2));
    for (double v : a.raw()) EXPECT_LE(std::abs(v), 0.05);
    EXPECT_THROW(reverse_sample(m, DenseArray::matrix(6, 3), r1), ShapeError);
}

TEST(Sampler, NonFiniteIsReportedWithStep) {
    NoiseModel m = zero_model(0, 2, 5);
    std::vector<double> flat = m.net().flatten();
    flat.back() = std::numeric_limits<double>::infinity();
    m.net().assign(flat);
    Rng rng(1);
    try {
        sample_unconditional(m, 3, rng);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 5"), std::string::npos) << e.what();
    }
}

TEST(CheckpointTest, RoundTripBitExact) {
    NoiseModelConfig mc;
    mc.state_dim = 2;
    mc.hidden = {6, 5};
    Rng rng(12);
    Checkpoint c{NoiseModel::create(mc, make_schedule(7, 1e-3, 0.15), rng, ActionBox::symmetric(2, 0.3)),
                 {{"phase", "bc"}, {"reference_dmse", 0.123456789012345678}}};
    std::stringstream ss;
    write_checkpoint(ss, c);
    const Checkpoint back = read_checkpoint(ss);
    EXPECT_EQ(back, c);
    EXPECT_EQ(parameter_hash(back.model.net()), parameter_hash(c.model.net()));
    EXPECT_EQ(back.metadata["reference_dmse"].get<double>(), 0.123456789012345678);
}

TEST(CheckpointTest, CorruptInputsRejected) {
    const Checkpoint c{small_model(2), {}};
    std::stringstream ss;
    write_checkpoint(ss, c);
    const std::string bytes = ss.str();
    std::stringstream bad_magic("NOTACKPT" + bytes.substr(8));
    EXPECT_THROW(read_checkpoint(bad_magic), IoError);
    std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
    EXPECT_THROW(read_checkpoint(truncated), IoError);
    std::string newer = bytes;
    newer[8] = 9;
    std::stringstream future(newer);
    EXPECT_THROW(read_checkpoint(future), IoError);
    EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
}

TEST(CheckpointTest, HashSeesEveryBit) {
    NoiseModel m = small_model(4);
    const std::uint64_t h = parameter_hash(m.net());
    std::vector<double> flat = m.net().flatten();
    flat[7] = std::nextafter(flat[7], 1e9);
    m.net().assign(flat);
    EXPECT_NE(parameter_hash(m.net()), h);
}
