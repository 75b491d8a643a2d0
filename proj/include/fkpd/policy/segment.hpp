// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fkpd/numeric/dense_array.hpp"

namespace fkpd {

/// Where a window was cut from an offline dataset.
struct SegmentSource {
    std::size_t episode = 0;
    std::size_t offset = 0;

    bool operator==(const SegmentSource&) const = default;
};

/// Length-k window of (state, action) pairs. reward_sum is only filled on the
/// teacher side; it is cleared once a pair has been labeled.
struct Segment {
    DenseArray states;  // k x state_dim (state_dim may be 0)
    DenseArray actions; // k x action_dim
    std::optional<double> reward_sum;

    Segment() = default;
    Segment(DenseArray s, DenseArray a, std::optional<double> r = std::nullopt)
        : states(std::move(s)), actions(std::move(a)), reward_sum(r) {
        if (states.rows() != actions.rows()) {
            throw ShapeError("Segment: states and actions have different lengths");
        }
        if (actions.rows() == 0) throw ShapeError("Segment: k must be positive");
    }

    std::size_t k() const noexcept { return actions.rows(); }
    std::size_t state_dim() const noexcept { return states.cols(); }
    std::size_t action_dim() const noexcept { return actions.cols(); }

    bool operator==(const Segment&) const = default;
};

/// Segments of equal length stacked row-wise: rows [i*k, (i+1)*k) belong to
/// segment i. Only states and actions are copied, so nothing built on a
/// SegmentBatch can see rewards.
class SegmentBatch {
public:
    SegmentBatch() = default;

    explicit SegmentBatch(std::span<const Segment> segments) {
        if (segments.empty()) throw ShapeError("SegmentBatch: empty batch");
        k_ = segments.front().k();
        const std::size_t sd = segments.front().state_dim();
        const std::size_t ad = segments.front().action_dim();
        count_ = segments.size();
        states_ = DenseArray::matrix(count_ * k_, sd);
        actions_ = DenseArray::matrix(count_ * k_, ad);
        for (std::size_t i = 0; i < count_; ++i) {
            const Segment& s = segments[i];
            if (s.k() != k_ || s.state_dim() != sd || s.action_dim() != ad) {
                throw ShapeError("SegmentBatch: segment " + std::to_string(i) +
                                 " has a different shape");
            }
            std::copy(s.states.raw().begin(), s.states.raw().end(),
                      states_.raw().begin() + static_cast<long>(i * k_ * sd));
            std::copy(s.actions.raw().begin(), s.actions.raw().end(),
                      actions_.raw().begin() + static_cast<long>(i * k_ * ad));
        }
    }

    explicit SegmentBatch(const std::vector<Segment>& segments)
        : SegmentBatch(std::span<const Segment>(segments)) {}

    /// Wraps already stacked arrays (rows = count * k).
    static SegmentBatch from_stacked(DenseArray states, DenseArray actions, std::size_t k) {
        if (k == 0 || actions.rows() == 0 || actions.rows() % k != 0)
            throw ShapeError("SegmentBatch: rows must be a positive multiple of k");
        if (states.rows() != actions.rows() && states.cols() != 0)
            throw ShapeError("SegmentBatch: states and actions have different row counts");
        SegmentBatch b;
        b.k_ = k;
        b.count_ = actions.rows() / k;
        b.states_ = states.cols() == 0 ? DenseArray::matrix(actions.rows(), 0) : std::move(states);
        b.actions_ = std::move(actions);
        return b;
    }

    std::size_t count() const noexcept { return count_; }
    std::size_t k() const noexcept { return k_; }
    std::size_t rows() const noexcept { return count_ * k_; }
    std::size_t state_dim() const noexcept { return states_.cols(); }
    std::size_t action_dim() const noexcept { return actions_.cols(); }
    const DenseArray& states() const noexcept { return states_; }
    const DenseArray& actions() const noexcept { return actions_; }

private:
    std::size_t count_ = 0;
    std::size_t k_ = 0;
    DenseArray states_;
    DenseArray actions_;
};

} // namespace fkpd
