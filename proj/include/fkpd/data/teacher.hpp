// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "fkpd/data/dataset.hpp"
#include "fkpd/data/preference_pair.hpp"
#include "fkpd/losses/preference_model.hpp"
#include "fkpd/numeric/rng.hpp"

namespace fkpd {

struct TeacherConfig {
    /// 0 gives the deterministic sum-of-rewards comparison; > 0 labels with
    /// probability sigmoid((r_a - r_b) / noise_temp).
    double noise_temp = 0.0;
    /// Drop exact ties instead of keeping them with a coin-flip order.
    bool drop_ties = false;

    bool operator==(const TeacherConfig&) const = default;
};

struct LabelDecision {
    bool first_wins = false;
    bool tie = false;
};

/// Teacher decision for reward sums (ra, rb).
inline LabelDecision teacher_decide(double ra, double rb, double noise_temp, Rng& rng) {
    if (noise_temp < 0.0) throw ConfigError("script teacher: noise_temp must be >= 0");
    if (noise_temp > 0.0) return {rng.bernoulli(kernels::sigmoid((ra - rb) / noise_temp)), false};
    if (ra > rb) return {true, false};
    if (ra < rb) return {false, false};
    return {rng.bernoulli(0.5), true};
}

/// Labels (seg_a, seg_b) by their reward sums. Both output segments have
/// their reward erased; meta.tie is set for exact ties at noise_temp 0.
inline PreferencePair script_teacher_label(Segment seg_a, Segment seg_b, double noise_temp,
                                           Rng& rng, LabelDecision* decision = nullptr) {
    if (!seg_a.reward_sum || !seg_b.reward_sum)
        throw ConfigError("script_teacher_label: both segments need a reward_sum");
    if (seg_a.k() != seg_b.k()) throw ShapeError("script_teacher_label: segment lengths differ");
    const LabelDecision d = teacher_decide(*seg_a.reward_sum, *seg_b.reward_sum, noise_temp, rng);
    if (decision) *decision = d;
    seg_a.reward_sum.reset();
    seg_b.reward_sum.reset();
    PreferencePair p;
    p.meta.tie = d.tie;
    p.meta.teacher = noise_temp == 0.0 ? "script" : "script-noisy";
    p.winner = d.first_wins ? std::move(seg_a) : std::move(seg_b);
    p.loser = d.first_wins ? std::move(seg_b) : std::move(seg_a);
    return p;
}

/// n_pairs labeled pairs of uniformly sampled length-k windows.
inline std::vector<PreferencePair> build_pref_dataset(const OfflineDataset& data, std::size_t k,
                                                      std::size_t n_pairs,
                                                      const TeacherConfig& teacher, Rng& rng) {
    std::vector<PreferencePair> out;
    out.reserve(n_pairs);
    const std::size_t max_attempts = 100 * n_pairs + 1000;
    std::size_t attempts = 0;
    while (out.size() < n_pairs) {
        if (++attempts > max_attempts)
            throw ConfigError("build_pref_dataset: too many ties to reach the requested size");
        const std::vector<SegmentSource> src = sample_sources(data, k, 2, rng);
        Segment a = extract_segment(data, src[0], k);
        Segment b = extract_segment(data, src[1], k);
        LabelDecision d;
        PreferencePair p =
            script_teacher_label(std::move(a), std::move(b), teacher.noise_temp, rng, &d);
        if (p.meta.tie && teacher.drop_ties) continue;
        p.meta.winner_source = d.first_wins ? src[0] : src[1];
        p.meta.loser_source = d.first_wins ? src[1] : src[0];
        out.push_back(std::move(p));
    }
    return out;
}

/// Recomputes each non-tie label from D with the deterministic teacher and
/// returns the indices of pairs whose stored order disagrees.
inline std::vector<std::size_t> audit_labels(const OfflineDataset& data,
                                             const std::vector<PreferencePair>& pairs) {
    std::vector<std::size_t> mismatched;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const PreferencePair& p = pairs[i];
        if (p.meta.tie) continue;
        const std::size_t k = p.winner.k();
        const Segment w = extract_segment(data, p.meta.winner_source, k);
        const Segment l = extract_segment(data, p.meta.loser_source, k);
        const bool stored_matches_source =
            w.actions == p.winner.actions && l.actions == p.loser.actions;
        Rng unused(0);
        const LabelDecision again = teacher_decide(*w.reward_sum, *l.reward_sum, 0.0, unused);
        if (!stored_matches_source || !again.first_wins || again.tie) mismatched.push_back(i);
    }
    return mismatched;
}

} // namespace fkpd
