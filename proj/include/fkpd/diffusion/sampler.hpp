// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "fkpd/diffusion/noise_model.hpp"
#include "fkpd/numeric/rng.hpp"

namespace fkpd {

struct SampleOptions {
    bool clip_to_box = true;
};

/// Ancestral DDPM sampling for a batch of states (one action per state row).
/// With a zero-dimensional state, pass `count` rows via an n x 0 array.
///
///   a_T ~ N(0, I)
///   a_{t-1} = (a_t - beta_t / sqrt(1 - alpha_bar_t) * eps(a_t, s, t)) / sqrt(alpha_t) + sqrt(beta_t) z
///
/// with z = 0 on the last step and sigma_t^2 = beta_t. The chain runs in the
/// model's unit action space and is mapped back before clipping.
template <NoisePredictor Model>
DenseArray reverse_sample(const Model& model, const DenseArray& states, Rng& rng,
                          const SampleOptions& opts = {}) {
    const std::size_t n = states.rows();
    const std::size_t ad = model.action_dim();
    if (model.state_dim() > 0 && states.cols() != model.state_dim()) {
        throw ShapeError("reverse_sample: state width mismatch");
    }
    const DiffusionSchedule& sched = model.schedule();
    DenseArray a = rng.normal_array({n, ad});
    std::vector<std::size_t> ts(n);
    for (std::size_t t = sched.steps(); t >= 1; --t) {
        std::fill(ts.begin(), ts.end(), t);
        const DenseArray eps = model.predict(a, states, ts);
        const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
        const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
        const double sigma = std::sqrt(sched.beta(t));
        for (std::size_t i = 0; i < a.size(); ++i) {
            double next = inv_sqrt_alpha * (a[i] - coef * eps[i]);
            if (t > 1) next += sigma * rng.normal();
            if (!std::isfinite(next)) {
                std::ostringstream os;
                os << "reverse_sample: non-finite value at diffusion step " << t << " (entry " << i
                   << ", previous magnitude " << std::abs(a[i]) << ", predicted noise "
                   << eps[i] << ")";
                throw NumericError(os.str());
            }
            a[i] = next;
        }
    }
    if constexpr (requires { model.denormalize_actions(a); }) a = model.denormalize_actions(a);
    if (opts.clip_to_box) {
        if constexpr (requires { model.action_box(); }) {
            for (std::size_t r = 0; r < n; ++r) model.action_box().clip(a.row(r));
        }
    }
    return a;
}

/// Single-state convenience wrapper; returns a rank-1 action.
template <NoisePredictor Model>
DenseArray reverse_sample_one(const Model& model, const DenseArray& state, Rng& rng,
                              const SampleOptions& opts = {}) {
    DenseArray s = DenseArray::matrix(1, model.state_dim());
    for (std::size_t j = 0; j < model.state_dim(); ++j) s[j] = state[j];
    DenseArray a = reverse_sample(model, s, rng, opts);
    return a.reshaped({a.size()});
}

/// Unconditional sampling: `count` draws with an empty state.
template <NoisePredictor Model>
DenseArray sample_unconditional(const Model& model, std::size_t count, Rng& rng,
                                const SampleOptions& opts = {}) {
    return reverse_sample(model, DenseArray({count, 0}), rng, opts);
}

} // namespace fkpd
