// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

#include "fkpd/numeric/dense_array.hpp"

namespace fkpd {

/// Seeded random stream. Every stochastic operation takes one by reference,
/// so a run is fully determined by its seeds.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

    /// Uniform integer in [lo, hi].
    std::size_t uniform_int(std::size_t lo, std::size_t hi) {
        std::uniform_int_distribution<std::size_t> d(lo, hi);
        return d(engine_);
    }

    bool bernoulli(double p) { return uniform_(engine_) < p; }

    DenseArray normal_array(std::vector<std::size_t> shape) {
        DenseArray a(std::move(shape));
        for (double& v : a.raw()) v = normal();
        return a;
    }

    /// Independent child stream derived from this one (advances the parent).
    Rng split() {
        std::seed_seq seq{engine_(), engine_(), engine_(), engine_()};
        std::mt19937_64 child(seq);
        Rng r;
        r.engine_ = child;
        return r;
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace fkpd
