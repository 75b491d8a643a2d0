// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "fkpd/diffusion/noise_model.hpp"
#include "fkpd/diffusion/sampler.hpp"
#include "fkpd/envs/mixture.hpp"
#include "fkpd/envs/point_mass.hpp"
#include "fkpd/harness/config.hpp"

namespace fkpd {

struct EpisodeRecord {
    bool success = false;
    double total_return = 0.0;
    double final_distance = 0.0;
};

struct EvalResult {
    double u = 0.0;
    std::size_t n = 0;
    // toy only
    double ood_fraction = 0.0;
    std::vector<double> mode_shares;
    DenseArray samples;
    // point-mass only
    std::vector<EpisodeRecord> episodes;
};

inline void require_eval_count(std::size_t n) {
    if (n == 0) throw ConfigError("evaluate: n must be >= 1");
}

/// Mean toy reward of n fresh samples, plus OOD fraction and mode shares.
inline EvalResult evaluate_toy(const NoiseModel& model, const MixtureSpec& spec, std::size_t n,
                               Rng& rng, double radius_mult = 3.0) {
    require_eval_count(n);
    if (model.state_dim() != 0 || model.action_dim() != 2)
        throw ShapeError("evaluate_toy: model must be unconditional with 2D actions");
    EvalResult r;
    r.n = n;
    r.samples = sample_unconditional(model, n, rng);
    r.u = mean_toy_reward(r.samples);
    r.ood_fraction = ood_fraction(r.samples, spec, radius_mult);
    r.mode_shares = mode_shares(r.samples, spec);
    return r;
}

/// Batch policy that runs the reverse diffusion chain for every state row.
inline BatchPolicyFn diffusion_policy(const NoiseModel& model) {
    return [&model](const DenseArray& states, Rng& rng) { return reverse_sample(model, states, rng); };
}

/// Mean success over n lockstep episodes from uniform starts.
inline EvalResult evaluate_policy(const PointMassEnv& env, const BatchPolicyFn& policy,
                                  std::size_t n, Rng& rng) {
    require_eval_count(n);
    std::vector<Point2> starts(n);
    for (Point2& s : starts) s = env.sample_start(rng);
    const std::vector<Episode> eps = rollout_batch(env, policy, starts, rng);
    EvalResult r;
    r.n = n;
    std::size_t wins = 0;
    for (const Episode& e : eps) {
        const std::size_t last = e.states.rows() - 1;
        const Point2 end =
            env.step({e.states(last, 0), e.states(last, 1)}, {e.actions(last, 0), e.actions(last, 1)});
        r.episodes.push_back({e.success, e.total_return, env.distance_to_goal(end)});
        wins += e.success ? 1 : 0;
    }
    r.u = static_cast<double>(wins) / static_cast<double>(n);
    return r;
}

inline EvalResult evaluate_point_mass(const NoiseModel& model, const PointMassEnv& env,
                                      std::size_t n, Rng& rng) {
    if (model.state_dim() != 2 || model.action_dim() != 2)
        throw ShapeError("evaluate_point_mass: model must map 2D states to 2D actions");
    return evaluate_policy(env, diffusion_policy(model), n, rng);
}

/// Dispatches on the config environment.
inline EvalResult evaluate(const NoiseModel& model, const ExperimentConfig& cfg, std::size_t n,
                           Rng& rng) {
    if (cfg.env == EnvKind::toy)
        return evaluate_toy(model, cfg.mixture, n, rng, cfg.eval.ood_radius_mult);
    return evaluate_point_mass(model, cfg.point_mass, n, rng);
}

} // namespace fkpd
