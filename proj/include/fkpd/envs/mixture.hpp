// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "fkpd/numeric/dense_array.hpp"
#include "fkpd/numeric/rng.hpp"

namespace fkpd {

using Point2 = std::array<double, 2>;

/// Isotropic 2D Gaussian mixture with a shared standard deviation.
struct MixtureSpec {
    std::vector<Point2> means;
    double stddev = 0.15;
    std::vector<double> weights;

    void validate() const {
        if (means.empty()) throw ConfigError("MixtureSpec: no components");
        if (weights.size() != means.size()) throw ConfigError("MixtureSpec: one weight per mean");
        if (!(stddev > 0.0)) throw ConfigError("MixtureSpec: stddev must be positive");
        double s = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw ConfigError("MixtureSpec: negative weight");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-12) throw ConfigError("MixtureSpec: weights must sum to 1");
    }

    bool operator==(const MixtureSpec&) const = default;
};

/// Five equally weighted components on a radius-2 circle around (1, 1),
/// std 0.15, the first one at the top of the circle.
inline MixtureSpec default_toy_mixture() {
    MixtureSpec spec;
    const Point2 center{1.0, 1.0};
    const double radius = 2.0;
    for (int i = 0; i < 5; ++i) {
        const double angle = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * i / 5.0;
        spec.means.push_back({center[0] + radius * std::cos(angle),
                              center[1] + radius * std::sin(angle)});
    }
    spec.stddev = 0.15;
    spec.weights.assign(5, 0.2);
    return spec;
}

/// Projection of x onto (1, 1)/sqrt(2).
inline double toy_reward(const Point2& x) { return (x[0] + x[1]) / std::numbers::sqrt2; }

inline double toy_reward(std::span<const double> x) {
    if (x.size() != 2) throw ShapeError("toy_reward: expected a 2D point");
    return (x[0] + x[1]) / std::numbers::sqrt2;
}

/// n x 2 i.i.d. draws: component by weight, then N(mean, std^2 I).
inline DenseArray sample_mixture(const MixtureSpec& spec, std::size_t n, Rng& rng,
                                 std::vector<std::size_t>* components = nullptr) {
    spec.validate();
    if (n == 0) throw ConfigError("sample_mixture: n must be >= 1");
    DenseArray out = DenseArray::matrix(n, 2);
    if (components) components->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        std::size_t c = 0;
        double acc = spec.weights[0];
        while (u >= acc && c + 1 < spec.weights.size()) acc += spec.weights[++c];
        // a zero-weight tail component is never chosen
        while (spec.weights[c] == 0.0 && c > 0) --c;
        out(i, 0) = spec.means[c][0] + spec.stddev * rng.normal();
        out(i, 1) = spec.means[c][1] + spec.stddev * rng.normal();
        if (components) (*components)[i] = c;
    }
    return out;
}

/// Index of the nearest component mean and its distance.
inline std::pair<std::size_t, double> nearest_component(const MixtureSpec& spec, double x, double y) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < spec.means.size(); ++c) {
        const double d = std::hypot(x - spec.means[c][0], y - spec.means[c][1]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return {best, best_d};
}

/// Fraction of samples farther than radius_mult * std from every component mean.
inline double ood_fraction(const DenseArray& samples, const MixtureSpec& spec,
                           double radius_mult = 3.0) {
    if (samples.rows() == 0) throw ShapeError("ood_fraction: no samples");
    if (samples.cols() != 2) throw ShapeError("ood_fraction: samples must be n x 2");
    if (!(radius_mult > 0.0)) throw ConfigError("ood_fraction: radius_mult must be positive");
    const double limit = radius_mult * spec.stddev;
    std::size_t out = 0;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        if (nearest_component(spec, samples(i, 0), samples(i, 1)).second > limit) ++out;
    }
    return static_cast<double>(out) / static_cast<double>(samples.rows());
}

/// Share of samples whose nearest mean is each component.
inline std::vector<double> mode_shares(const DenseArray& samples, const MixtureSpec& spec) {
    std::vector<double> share(spec.means.size(), 0.0);
    for (std::size_t i = 0; i < samples.rows(); ++i)
        share[nearest_component(spec, samples(i, 0), samples(i, 1)).first] += 1.0;
    for (double& s : share) s /= static_cast<double>(samples.rows());
    return share;
}

inline double mean_toy_reward(const DenseArray& samples) {
    double s = 0.0;
    for (std::size_t i = 0; i < samples.rows(); ++i) s += toy_reward(samples.row(i));
    return s / static_cast<double>(samples.rows());
}

} // namespace fkpd
