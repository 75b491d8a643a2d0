// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "fkpd/envs/mixture.hpp"
#include "fkpd/numeric/dense_array.hpp"
#include "fkpd/numeric/rng.hpp"

namespace fkpd {

/// Goal reaching on the square [-half_size, half_size]^2. Each step moves the
/// point by the (clipped) action and clips it back into the arena.
struct PointMassEnv {
    double half_size = 1.0;
    Point2 goal{0.5, 0.5};
    double max_action = 0.5;
    std::size_t horizon = 32;
    /// Success radius as a fraction of the arena side length.
    double success_fraction = 0.1;

    double arena_size() const noexcept { return 2.0 * half_size; }
    double success_threshold() const noexcept { return success_fraction * arena_size(); }

    Point2 clip_action(Point2 a) const {
        for (double& v : a) v = std::clamp(v, -max_action, max_action);
        return a;
    }

    Point2 step(const Point2& pos, const Point2& action) const {
        const Point2 a = clip_action(action);
        return {std::clamp(pos[0] + a[0], -half_size, half_size),
                std::clamp(pos[1] + a[1], -half_size, half_size)};
    }

    double distance_to_goal(const Point2& p) const {
        return std::hypot(p[0] - goal[0], p[1] - goal[1]);
    }

    /// Evaluator-side reward for arriving at `pos`.
    double reward(const Point2& pos) const { return -distance_to_goal(pos); }

    Point2 sample_start(Rng& rng) const {
        return {rng.uniform(-half_size, half_size), rng.uniform(-half_size, half_size)};
    }

    /// Greedy optimal action: straight at the goal, clipped to the box.
    Point2 oracle_action(const Point2& pos) const {
        return clip_action({goal[0] - pos[0], goal[1] - pos[1]});
    }

    void validate() const {
        if (!(half_size > 0.0) || !(max_action > 0.0) || horizon == 0 || !(success_fraction > 0.0))
            throw ConfigError("PointMassEnv: invalid parameters");
    }

    bool operator==(const PointMassEnv&) const = default;
};

struct Episode {
    DenseArray states;  // horizon x 2, state before each action
    DenseArray actions; // horizon x 2
    std::vector<double> rewards;
    bool success = false;
    double total_return = 0.0;
};

using PolicyFn = std::function<Point2(const Point2& state, Rng& rng)>;

/// Runs one horizon-length episode from `start`.
inline Episode rollout(const PointMassEnv& env, const PolicyFn& policy, const Point2& start,
                       Rng& rng) {
    env.validate();
    Episode ep;
    ep.states = DenseArray::matrix(env.horizon, 2);
    ep.actions = DenseArray::matrix(env.horizon, 2);
    Point2 pos = start;
    for (std::size_t h = 0; h < env.horizon; ++h) {
        const Point2 a = policy(pos, rng);
        if (!std::isfinite(a[0]) || !std::isfinite(a[1]))
            throw NumericError("rollout: policy returned a non-finite action at step " +
                               std::to_string(h));
        const Point2 clipped = env.clip_action(a);
        ep.states(h, 0) = pos[0];
        ep.states(h, 1) = pos[1];
        ep.actions(h, 0) = clipped[0];
        ep.actions(h, 1) = clipped[1];
        pos = env.step(pos, clipped);
        ep.rewards.push_back(env.reward(pos));
        ep.total_return += ep.rewards.back();
    }
    ep.success = env.distance_to_goal(pos) < env.success_threshold();
    return ep;
}

inline Episode rollout(const PointMassEnv& env, const PolicyFn& policy, Rng& rng) {
    const Point2 start = env.sample_start(rng);
    return rollout(env, policy, start, rng);
}

/// Lockstep rollouts of a batched policy (n starts at once). The policy maps
/// an n x 2 state array to an n x 2 action array.
using BatchPolicyFn = std::function<DenseArray(const DenseArray& states, Rng& rng)>;

inline std::vector<Episode> rollout_batch(const PointMassEnv& env, const BatchPolicyFn& policy,
                                          const std::vector<Point2>& starts, Rng& rng) {
    env.validate();
    const std::size_t n = starts.size();
    std::vector<Episode> eps(n);
    DenseArray pos = DenseArray::matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        pos(i, 0) = starts[i][0];
        pos(i, 1) = starts[i][1];
        eps[i].states = DenseArray::matrix(env.horizon, 2);
        eps[i].actions = DenseArray::matrix(env.horizon, 2);
    }
    for (std::size_t h = 0; h < env.horizon; ++h) {
        const DenseArray act = policy(pos, rng);
        if (act.rows() != n || act.cols() != 2)
            throw ShapeError("rollout_batch: policy returned the wrong shape");
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(act(i, 0)) || !std::isfinite(act(i, 1)))
                throw NumericError("rollout_batch: non-finite action at step " + std::to_string(h));
            const Point2 p{pos(i, 0), pos(i, 1)};
            const Point2 a = env.clip_action({act(i, 0), act(i, 1)});
            Episode& ep = eps[i];
            ep.states(h, 0) = p[0];
            ep.states(h, 1) = p[1];
            ep.actions(h, 0) = a[0];
            ep.actions(h, 1) = a[1];
            const Point2 next = env.step(p, a);
            pos(i, 0) = next[0];
            pos(i, 1) = next[1];
            ep.rewards.push_back(env.reward(next));
            ep.total_return += ep.rewards.back();
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        eps[i].success = env.distance_to_goal({pos(i, 0), pos(i, 1)}) < env.success_threshold();
    return eps;
}

/// Scripted behaviour policy for dataset generation. Every step it heads for
/// the goal with probability `skill` and for a decoy point otherwise, plus
/// Gaussian jitter. Each episode draws its own skill from [skill_low, skill_high].
struct ScriptedBehavior {
    Point2 decoy{-0.5, 0.5};
    double skill_low = 0.3;
    double skill_high = 0.9;
    double noise = 0.02;

    bool operator==(const ScriptedBehavior&) const = default;

    PolicyFn policy(const PointMassEnv& env, double skill) const {
        return [env, skill, *this](const Point2& pos, Rng& rng) {
            const bool good = rng.bernoulli(skill);
            Point2 a = good ? env.oracle_action(pos)
                            : env.clip_action({decoy[0] - pos[0], decoy[1] - pos[1]});
            a[0] += noise * rng.normal();
            a[1] += noise * rng.normal();
            return env.clip_action(a);
        };
    }

    Episode run(const PointMassEnv& env, Rng& rng) const {
        const double skill = rng.uniform(skill_low, skill_high);
        return rollout(env, policy(env, skill), rng);
    }
};

} // namespace fkpd
