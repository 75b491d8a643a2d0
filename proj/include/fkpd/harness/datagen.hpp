// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "fkpd/data/dataset.hpp"
#include "fkpd/data/io.hpp"
#include "fkpd/data/teacher.hpp"
#include "fkpd/envs/mixture.hpp"
#include "fkpd/envs/point_mass.hpp"
#include "fkpd/harness/config.hpp"
#include "fkpd/harness/train.hpp"

namespace fkpd {

/// Toy D: each sample is a length-1 episode with an empty state and reward
/// toy_reward(x).
inline OfflineDataset make_toy_dataset(const MixtureSpec& spec, std::size_t n, Rng& rng) {
    const DenseArray x = sample_mixture(spec, n, rng);
    OfflineDataset d;
    d.state_dim = 0;
    d.action_dim = 2;
    d.episodes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Trajectory t;
        t.states = DenseArray({1, 0});
        t.actions = DenseArray({1, 2}, std::vector<double>{x(i, 0), x(i, 1)});
        t.rewards = {toy_reward(Point2{x(i, 0), x(i, 1)})};
        d.episodes.push_back(std::move(t));
    }
    return d;
}

inline OfflineDataset make_point_mass_dataset(const PointMassEnv& env,
                                              const ScriptedBehavior& behavior, std::size_t episodes,
                                              Rng& rng) {
    OfflineDataset d;
    d.state_dim = 2;
    d.action_dim = 2;
    d.episodes.reserve(episodes);
    for (std::size_t i = 0; i < episodes; ++i) {
        Episode e = behavior.run(env, rng);
        d.episodes.push_back({std::move(e.states), std::move(e.actions), std::move(e.rewards)});
    }
    return d;
}

/// D for the configured environment, seeded from cfg.seed.
inline OfflineDataset generate_dataset(const ExperimentConfig& cfg) {
    Rng rng = detail::stream(cfg.seed, detail::kStreamData);
    OfflineDataset d = cfg.env == EnvKind::toy
                           ? make_toy_dataset(cfg.mixture, cfg.data.toy_samples, rng)
                           : make_point_mass_dataset(cfg.point_mass, cfg.behavior,
                                                     cfg.data.episodes, rng);
    d.env_spec = env_spec_json(cfg);
    d.seed = cfg.seed;
    return d;
}

/// Labels pairs + heldout_pairs windows; the first `pairs` entries are the
/// training split.
inline PrefDataset label_dataset(const OfflineDataset& data, std::size_t k, std::size_t n_pairs,
                                 const TeacherConfig& teacher, std::uint64_t seed) {
    if (k == 0) throw ConfigError("label: k must be >= 1");
    if (data.shortest_episode() < k)
        throw ConfigError("label: some episode is shorter than k = " + std::to_string(k));
    Rng rng = detail::stream(seed, detail::kStreamLabels);
    PrefDataset p;
    p.state_dim = data.state_dim;
    p.action_dim = data.action_dim;
    p.k = k;
    p.seed = seed;
    p.teacher = teacher;
    p.env_spec = data.env_spec;
    p.pairs = build_pref_dataset(data, k, n_pairs, teacher, rng);
    return p;
}

inline PrefDataset label_dataset(const OfflineDataset& data, const ExperimentConfig& cfg) {
    return label_dataset(data, cfg.data.k, cfg.data.pairs + cfg.data.heldout_pairs,
                         cfg.data.teacher, cfg.seed);
}

/// Splits off the last `heldout` pairs.
inline std::pair<std::vector<PreferencePair>, std::vector<PreferencePair>>
split_pairs(const std::vector<PreferencePair>& all, std::size_t heldout) {
    if (heldout == 0 || heldout >= all.size())
        throw ConfigError("split_pairs: held-out count must be in [1, size)");
    const auto cut = all.end() - static_cast<std::ptrdiff_t>(heldout);
    return {std::vector<PreferencePair>(all.begin(), cut), std::vector<PreferencePair>(cut, all.end())};
}

} // namespace fkpd
