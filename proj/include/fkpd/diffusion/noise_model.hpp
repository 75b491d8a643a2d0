// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fkpd/diffusion/schedule.hpp"
#include "fkpd/numeric/mlp.hpp"
#include "fkpd/numeric/rng.hpp"
#include "fkpd/numeric/tape.hpp"

namespace fkpd {

/// Axis-aligned action bounds. An empty box means unbounded.
struct ActionBox {
    std::vector<double> low;
    std::vector<double> high;

    bool bounded() const noexcept { return !low.empty(); }

    static ActionBox symmetric(std::size_t dim, double limit) {
        return {std::vector<double>(dim, -limit), std::vector<double>(dim, limit)};
    }

    void clip(std::span<double> a) const {
        if (!bounded()) return;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::min(std::max(a[i], low[i]), high[i]);
    }

    bool operator==(const ActionBox&) const = default;
};

struct NoiseModelConfig {
    std::size_t state_dim = 0;
    std::size_t action_dim = 2;
    std::size_t time_embed_dim = 16;
    std::vector<std::size_t> hidden = {64, 64};
    Activation activation = Activation::silu;
};

/// Sinusoidal embedding of a diffusion timestep: sin/cos pairs at
/// geometrically spaced frequencies.
inline void time_embedding(std::size_t t, std::span<double> out) {
    const std::size_t half = out.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        const double arg = static_cast<double>(t) * freq;
        out[i] = std::sin(arg);
        out[half + i] = std::cos(arg);
    }
    if (out.size() % 2 == 1) out[out.size() - 1] = static_cast<double>(t);
}

/// Noise predictor eps(noisy_action, state, t). The network input row is
/// [noisy action | state | time embedding].
class NoiseModel {
public:
    NoiseModel() = default;

    NoiseModel(MlpParams net, std::size_t state_dim, std::size_t action_dim,
               std::size_t time_embed_dim, DiffusionSchedule schedule, ActionBox box = {})
        : net_(std::move(net)),
          state_dim_(state_dim),
          action_dim_(action_dim),
          embed_dim_(time_embed_dim),
          schedule_(std::move(schedule)),
          box_(std::move(box)) {
        if (net_.input_dim() != action_dim_ + state_dim_ + embed_dim_) {
            throw ShapeError("NoiseModel: network input width " + std::to_string(net_.input_dim()) +
                             " != action + state + embedding");
        }
        if (net_.output_dim() != action_dim_) {
            throw ShapeError("NoiseModel: network output width must equal the action dimension");
        }
        if (box_.bounded() && (box_.low.size() != action_dim_ || box_.high.size() != action_dim_)) {
            throw ShapeError("NoiseModel: action box dimension mismatch");
        }
        for (std::size_t c = 0; c < box_.low.size(); ++c)
            if (!(box_.high[c] > box_.low[c])) throw ConfigError("NoiseModel: empty action box");
    }

    static NoiseModel create(const NoiseModelConfig& cfg, DiffusionSchedule schedule, Rng& rng,
                             ActionBox box = {}) {
        return NoiseModel(MlpParams::init(widths(cfg), cfg.activation, rng), cfg.state_dim,
                          cfg.action_dim, cfg.time_embed_dim, std::move(schedule), std::move(box));
    }

    /// Network with every weight and bias zero: predicts eps == 0 everywhere.
    static NoiseModel zero(const NoiseModelConfig& cfg, DiffusionSchedule schedule) {
        return NoiseModel(MlpParams::zeros(widths(cfg), cfg.activation), cfg.state_dim,
                          cfg.action_dim, cfg.time_embed_dim, std::move(schedule));
    }

    static std::vector<std::size_t> widths(const NoiseModelConfig& cfg) {
        std::vector<std::size_t> w{cfg.action_dim + cfg.state_dim + cfg.time_embed_dim};
        w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
        w.push_back(cfg.action_dim);
        return w;
    }

    std::size_t state_dim() const noexcept { return state_dim_; }
    std::size_t action_dim() const noexcept { return action_dim_; }
    std::size_t time_embed_dim() const noexcept { return embed_dim_; }
    const DiffusionSchedule& schedule() const noexcept { return schedule_; }
    const ActionBox& action_box() const noexcept { return box_; }
    const MlpParams& net() const noexcept { return net_; }
    MlpParams& net() noexcept { return net_; }
    std::size_t parameter_count() const { return net_.parameter_count(); }

    /// Diffusion runs in unit space: a bounded box maps affinely onto
    /// [-1, 1] per dimension; unbounded models use actions as they are.
    DenseArray normalize_actions(const DenseArray& a) const {
        if (!box_.bounded()) return a;
        DenseArray u = a;
        for (std::size_t r = 0; r < u.rows(); ++r)
            for (std::size_t c = 0; c < action_dim_; ++c) {
                const double half = 0.5 * (box_.high[c] - box_.low[c]);
                const double mid = 0.5 * (box_.high[c] + box_.low[c]);
                u(r, c) = (u(r, c) - mid) / half;
            }
        return u;
    }

    DenseArray denormalize_actions(const DenseArray& u) const {
        if (!box_.bounded()) return u;
        DenseArray a = u;
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t c = 0; c < action_dim_; ++c) {
                const double half = 0.5 * (box_.high[c] - box_.low[c]);
                const double mid = 0.5 * (box_.high[c] + box_.low[c]);
                a(r, c) = mid + half * a(r, c);
            }
        return a;
    }

    DenseArray build_input(const DenseArray& noisy, const DenseArray& states,
                           std::span<const std::size_t> ts) const {
        const std::size_t n = noisy.rows();
        if (noisy.cols() != action_dim_) throw ShapeError("NoiseModel: action width mismatch");
        if (ts.size() != n) throw ShapeError("NoiseModel: one timestep per row required");
        if (state_dim_ > 0 && (states.rows() != n || states.cols() != state_dim_)) {
            throw ShapeError("NoiseModel: states must be " + std::to_string(n) + " x " +
                             std::to_string(state_dim_));
        }
        const std::size_t width = net_.input_dim();
        DenseArray in = DenseArray::matrix(n, width);
        for (std::size_t r = 0; r < n; ++r) {
            if (ts[r] < 1 || ts[r] > schedule_.steps()) {
                throw ConfigError("NoiseModel: timestep " + std::to_string(ts[r]) + " out of range");
            }
            double* row = in.raw().data() + r * width;
            for (std::size_t j = 0; j < action_dim_; ++j) row[j] = noisy(r, j);
            for (std::size_t j = 0; j < state_dim_; ++j) row[action_dim_ + j] = states(r, j);
            time_embedding(ts[r], {row + action_dim_ + state_dim_, embed_dim_});
        }
        return in;
    }

    DenseArray predict(const DenseArray& noisy, const DenseArray& states,
                       std::span<const std::size_t> ts) const {
        return mlp_forward(net_, build_input(noisy, states, ts));
    }

    /// Taped prediction; the network parameters become gradient leaves.
    Var predict(Tape& tape, const DenseArray& noisy, const DenseArray& states,
                std::span<const std::size_t> ts) const {
        return mlp_forward(tape, net_, tape.constant(build_input(noisy, states, ts)));
    }

    bool operator==(const NoiseModel& o) const {
        return net_ == o.net_ && state_dim_ == o.state_dim_ && action_dim_ == o.action_dim_ &&
               embed_dim_ == o.embed_dim_ && schedule_ == o.schedule_ && box_ == o.box_;
    }

private:
    MlpParams net_;
    std::size_t state_dim_ = 0;
    std::size_t action_dim_ = 0;
    std::size_t embed_dim_ = 0;
    DiffusionSchedule schedule_;
    ActionBox box_;
};

/// Anything the losses can query for noise predictions. Parameters of a
/// taped prediction are laid out as in the model's flattened vector.
template <class M>
concept NoisePredictor = requires(const M& m, Tape& tape, const DenseArray& x,
                                  std::span<const std::size_t> ts) {
    { m.predict(tape, x, x, ts) } -> std::same_as<Var>;
    { m.predict(x, x, ts) } -> std::same_as<DenseArray>;
    { m.action_dim() } -> std::convertible_to<std::size_t>;
    { m.state_dim() } -> std::convertible_to<std::size_t>;
    { m.schedule() } -> std::convertible_to<const DiffusionSchedule&>;
    { m.parameter_count() } -> std::convertible_to<std::size_t>;
};

static_assert(NoisePredictor<NoiseModel>);

} // namespace fkpd
