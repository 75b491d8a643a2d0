// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "fkpd/numeric/rng.hpp"
#include "fkpd/policy/segment.hpp"

namespace fkpd {

/// One recorded episode. Rewards are teacher/evaluator-side data.
struct Trajectory {
    DenseArray states;  // length x state_dim
    DenseArray actions; // length x action_dim
    std::vector<double> rewards;

    std::size_t length() const noexcept { return actions.rows(); }
    bool operator==(const Trajectory&) const = default;
};

/// Offline dataset D plus the environment description it came from.
struct OfflineDataset {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::vector<Trajectory> episodes;
    nlohmann::json env_spec = nlohmann::json::object();
    std::uint64_t seed = 0;

    void validate() const {
        for (std::size_t i = 0; i < episodes.size(); ++i) {
            const Trajectory& e = episodes[i];
            if (e.actions.cols() != action_dim || (e.states.cols() != state_dim) ||
                e.states.rows() != e.actions.rows() || e.rewards.size() != e.length()) {
                throw ShapeError("OfflineDataset: episode " + std::to_string(i) +
                                 " has inconsistent dimensions");
            }
        }
    }

    std::size_t shortest_episode() const {
        if (episodes.empty()) return 0;
        std::size_t m = episodes.front().length();
        for (const Trajectory& e : episodes) m = std::min(m, e.length());
        return m;
    }

    std::size_t transitions() const {
        std::size_t n = 0;
        for (const Trajectory& e : episodes) n += e.length();
        return n;
    }

    bool operator==(const OfflineDataset&) const = default;
};

inline Segment extract_segment(const OfflineDataset& data, const SegmentSource& src, std::size_t k) {
    const Trajectory& ep = data.episodes.at(src.episode);
    if (src.offset + k > ep.length()) throw ConfigError("extract_segment: window past episode end");
    DenseArray s = DenseArray::matrix(k, data.state_dim);
    DenseArray a = DenseArray::matrix(k, data.action_dim);
    double r = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < data.state_dim; ++j) s(i, j) = ep.states(src.offset + i, j);
        for (std::size_t j = 0; j < data.action_dim; ++j) a(i, j) = ep.actions(src.offset + i, j);
        r += ep.rewards[src.offset + i];
    }
    return Segment(std::move(s), std::move(a), r);
}

/// Windows drawn uniformly over all valid (episode, start offset) pairs.
inline std::vector<SegmentSource> sample_sources(const OfflineDataset& data, std::size_t k,
                                                 std::size_t n, Rng& rng) {
    if (n == 0) throw ConfigError("sample_segments: n must be >= 1");
    if (data.episodes.empty()) throw ConfigError("sample_segments: dataset is empty");
    if (k == 0 || k > data.shortest_episode())
        throw ConfigError("sample_segments: k = " + std::to_string(k) +
                          " exceeds the shortest episode (" +
                          std::to_string(data.shortest_episode()) + ")");
    std::vector<std::size_t> cumulative;
    cumulative.reserve(data.episodes.size());
    std::size_t total = 0;
    for (const Trajectory& e : data.episodes) {
        total += e.length() - k + 1;
        cumulative.push_back(total);
    }
    std::vector<SegmentSource> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t w = rng.uniform_int(0, total - 1);
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), w);
        const auto ep = static_cast<std::size_t>(it - cumulative.begin());
        const std::size_t before = ep == 0 ? 0 : cumulative[ep - 1];
        out[i] = {ep, w - before};
    }
    return out;
}

/// n contiguous windows with reward_sum set from the window's rewards.
inline std::vector<Segment> sample_segments(const OfflineDataset& data, std::size_t k,
                                            std::size_t n, Rng& rng) {
    std::vector<Segment> out;
    out.reserve(n);
    for (const SegmentSource& s : sample_sources(data, k, n, rng))
        out.push_back(extract_segment(data, s, k));
    return out;
}

/// Reward-free batch of n windows (used for the regularization minibatch).
inline SegmentBatch sample_segment_batch(const OfflineDataset& data, std::size_t k, std::size_t n,
                                         Rng& rng) {
    std::vector<Segment> segs = sample_segments(data, k, n, rng);
    for (Segment& s : segs) s.reward_sum.reset();
    return SegmentBatch(segs);
}

} // namespace fkpd
