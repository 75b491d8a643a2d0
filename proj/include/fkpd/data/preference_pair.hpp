// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "fkpd/policy/segment.hpp"

namespace fkpd {

struct LabelMeta {
    std::string teacher = "script";
    bool tie = false;
    // provenance of both windows; lets an auditor recompute the label from D
    SegmentSource winner_source;
    SegmentSource loser_source;

    bool operator==(const LabelMeta&) const = default;
};

/// Ordered (winner, loser) pair. After labeling neither segment carries a reward.
struct PreferencePair {
    Segment winner;
    Segment loser;
    LabelMeta meta;

    bool operator==(const PreferencePair&) const = default;
};

/// Winners and losers of a minibatch stacked separately; pair i is segment i
/// of both batches.
struct PairBatch {
    SegmentBatch winners;
    SegmentBatch losers;

    explicit PairBatch(std::span<const PreferencePair> pairs) {
        if (pairs.empty()) throw ShapeError("PairBatch: empty preference batch");
        std::vector<Segment> w, l;
        w.reserve(pairs.size());
        l.reserve(pairs.size());
        for (const PreferencePair& p : pairs) {
            if (p.winner.k() != p.loser.k()) throw ShapeError("PairBatch: winner/loser k differ");
            w.emplace_back(p.winner.states, p.winner.actions);
            l.emplace_back(p.loser.states, p.loser.actions);
        }
        winners = SegmentBatch(w);
        losers = SegmentBatch(l);
    }

    explicit PairBatch(const std::vector<PreferencePair>& pairs)
        : PairBatch(std::span<const PreferencePair>(pairs)) {}

    std::size_t count() const noexcept { return winners.count(); }
    std::size_t k() const noexcept { return winners.k(); }
};

} // namespace fkpd
