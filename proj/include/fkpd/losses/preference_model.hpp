// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "fkpd/numeric/dense_array.hpp"

namespace fkpd {

/// Bradley-Terry probability that the first item is preferred:
/// sigmoid(rho * (r_plus - r_minus)).
inline double bt_probability(double r_plus, double r_minus, double rho) {
    if (!std::isfinite(r_plus) || !std::isfinite(r_minus) || !std::isfinite(rho))
        throw NumericError("bt_probability: non-finite input");
    return kernels::sigmoid(rho * (r_plus - r_minus));
}

/// Relative change (u1 - u0) / u0 of an evaluation metric over alignment.
inline double improvement_factor(double u0, double u1) {
    if (u0 == 0.0) throw ConfigError("improvement_factor: undefined for u0 == 0");
    return (u1 - u0) / u0;
}

/// Maximiser of E_pi[r - rho log pi] over the probability simplex:
/// pi(i) proportional to exp(r_i / rho).
inline std::vector<double> max_entropy_policy(std::span<const double> rewards, double rho) {
    if (rewards.empty()) throw ShapeError("max_entropy_policy: no outcomes");
    if (!(rho > 0.0)) throw ConfigError("max_entropy_policy: rho must be positive");
    const double top = *std::max_element(rewards.begin(), rewards.end());
    std::vector<double> p(rewards.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp((rewards[i] - top) / rho);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

/// E_pi[r - rho log pi] for a distribution on the simplex (0 log 0 = 0).
inline double entropy_regularized_value(std::span<const double> pi, std::span<const double> rewards,
                                        double rho) {
    if (pi.size() != rewards.size()) throw ShapeError("entropy_regularized_value: size mismatch");
    double v = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (pi[i] > 0.0) v += pi[i] * (rewards[i] - rho * std::log(pi[i]));
    }
    return v;
}

} // namespace fkpd
