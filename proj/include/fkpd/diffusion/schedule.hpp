// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fkpd/numeric/dense_array.hpp"

namespace fkpd {

/// DDPM variance schedule. Timesteps are 1-based: betas[t - 1] is beta_t.
class DiffusionSchedule {
public:
    DiffusionSchedule() = default;

    explicit DiffusionSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
        if (betas_.empty()) throw ConfigError("DiffusionSchedule: need at least one step");
        double prev = 0.0;
        double bar = 1.0;
        for (std::size_t i = 0; i < betas_.size(); ++i) {
            const double b = betas_[i];
            if (!(b > 0.0 && b < 1.0)) {
                throw ConfigError("DiffusionSchedule: beta_" + std::to_string(i + 1) +
                                  " outside (0, 1)");
            }
            if (b < prev) throw ConfigError("DiffusionSchedule: betas must be non-decreasing");
            prev = b;
            alphas_.push_back(1.0 - b);
            bar *= 1.0 - b;
            alpha_bars_.push_back(bar);
        }
    }

    std::size_t steps() const noexcept { return betas_.size(); }
    double beta(std::size_t t) const { return betas_.at(index(t)); }
    double alpha(std::size_t t) const { return alphas_.at(index(t)); }
    double alpha_bar(std::size_t t) const { return alpha_bars_.at(index(t)); }

    const std::vector<double>& betas() const noexcept { return betas_; }
    const std::vector<double>& alphas() const noexcept { return alphas_; }
    const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

    bool operator==(const DiffusionSchedule& o) const { return betas_ == o.betas_; }

private:
    std::size_t index(std::size_t t) const {
        if (t < 1 || t > betas_.size()) {
            throw ConfigError("diffusion timestep " + std::to_string(t) + " outside [1, " +
                              std::to_string(betas_.size()) + "]");
        }
        return t - 1;
    }

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

/// Linearly spaced betas from beta_start to beta_end.
inline DiffusionSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps == 0) throw ConfigError("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ConfigError("make_schedule: require 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        betas[i] = beta_start + (beta_end - beta_start) * frac;
    }
    return DiffusionSchedule(std::move(betas));
}

struct ScheduleParams {
    std::size_t steps = 50;
    double beta_start = 1e-4;
    double beta_end = 0.2;
};

inline DiffusionSchedule make_schedule(const ScheduleParams& p) {
    return make_schedule(p.steps, p.beta_start, p.beta_end);
}

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
inline DenseArray forward_noise(const DenseArray& x0, std::size_t t, const DenseArray& eps,
                                const DiffusionSchedule& schedule) {
    if (x0.shape() != eps.shape()) {
        throw ShapeError("forward_noise: x0 " + DenseArray::shape_string(x0.shape()) +
                         " and eps " + DenseArray::shape_string(eps.shape()) + " differ");
    }
    const double ab = schedule.alpha_bar(t);
    const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
    DenseArray out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + s * eps[i];
    return out;
}

} // namespace fkpd
