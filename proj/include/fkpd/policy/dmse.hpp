// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fkpd/diffusion/noise_model.hpp"
#include "fkpd/numeric/rng.hpp"
#include "fkpd/numeric/tape.hpp"
#include "fkpd/policy/segment.hpp"

namespace fkpd {

/// One diffusion timestep per segment plus the matching noise rows.
struct NoiseDraw {
    std::vector<std::size_t> t; // one per segment
    DenseArray eps;             // (segments * k) x action_dim
};

/// Per segment: t ~ U{1..T}, then k x action_dim standard normals.
inline NoiseDraw draw_noise(Rng& rng, std::size_t segments, std::size_t k, std::size_t action_dim,
                            std::size_t steps) {
    NoiseDraw d;
    d.t.resize(segments);
    d.eps = DenseArray::matrix(segments * k, action_dim);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < segments; ++i) {
        d.t[i] = rng.uniform_int(1, steps);
        for (std::size_t j = 0; j < k * action_dim; ++j) d.eps[idx++] = rng.normal();
    }
    return d;
}

namespace detail {

/// Actions in the model's diffusion space.
template <class Model>
DenseArray model_actions(const Model& model, const DenseArray& actions) {
    if constexpr (requires { model.normalize_actions(actions); })
        return model.normalize_actions(actions);
    else
        return actions;
}

/// Noised actions and the per-row timestep list for a stacked batch.
/// `x0` is batch.actions() in model space.
inline std::pair<DenseArray, std::vector<std::size_t>> noise_batch(const SegmentBatch& batch,
                                                                    const DenseArray& x0,
                                                                    const NoiseDraw& draw,
                                                                    const DiffusionSchedule& sched) {
    if (draw.t.size() != batch.count())
        throw ShapeError("segment D-MSE: one timestep per segment required");
    if (draw.eps.rows() != batch.rows() || draw.eps.cols() != batch.action_dim())
        throw ShapeError("segment D-MSE: noise shape must match the stacked actions");
    const std::size_t k = batch.k(), ad = batch.action_dim();
    DenseArray noisy = DenseArray::matrix(batch.rows(), ad);
    std::vector<std::size_t> ts(batch.rows());
    for (std::size_t i = 0; i < batch.count(); ++i) {
        const double ab = sched.alpha_bar(draw.t[i]);
        const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
        for (std::size_t r = i * k; r < (i + 1) * k; ++r) {
            ts[r] = draw.t[i];
            for (std::size_t c = 0; c < ad; ++c) {
                noisy(r, c) = a * x0(r, c) + s * draw.eps(r, c);
            }
        }
    }
    return {std::move(noisy), std::move(ts)};
}

} // namespace detail

/// D-MSE of every segment in the batch from a recorded prediction node:
/// mean over the k x action_dim entries of (prediction - eps)^2. Returns a
/// count x 1 node.
inline Var dmse_from_prediction(Tape& tape, Var prediction, const DenseArray& eps, std::size_t k) {
    Var resid = tape.sub(prediction, tape.constant(eps));
    return tape.block_mean(tape.square(resid), k);
}

/// Taped per-segment D-MSE; gradients flow into the model parameters.
template <NoisePredictor Model>
Var batch_dmse(Tape& tape, const Model& model, const SegmentBatch& batch, const NoiseDraw& draw) {
    auto [noisy, ts] = detail::noise_batch(
        batch, detail::model_actions(model, batch.actions()), draw, model.schedule());
    Var pred = model.predict(tape, noisy, batch.states(), ts);
    return dmse_from_prediction(tape, pred, draw.eps, batch.k());
}

/// Same values as batch_dmse, with the prediction recorded as a constant
/// (used for frozen reference models).
template <NoisePredictor Model>
Var batch_dmse_frozen(Tape& tape, const Model& model, const SegmentBatch& batch,
                      const NoiseDraw& draw) {
    auto [noisy, ts] = detail::noise_batch(
        batch, detail::model_actions(model, batch.actions()), draw, model.schedule());
    Var pred = tape.constant(model.predict(noisy, batch.states(), ts));
    return dmse_from_prediction(tape, pred, draw.eps, batch.k());
}

/// D-MSE of one segment at diffusion step t with the given k x action_dim noise.
template <NoisePredictor Model>
double segment_dmse(const Model& model, const Segment& seg, std::size_t t, const DenseArray& eps) {
    if (eps.rows() != seg.k() || eps.cols() != seg.action_dim())
        throw ShapeError("segment_dmse: eps shape must match the segment actions");
    if (seg.action_dim() != model.action_dim())
        throw ShapeError("segment_dmse: action dimension does not match the model");
    const std::vector<Segment> one{Segment(seg.states, seg.actions)};
    NoiseDraw draw{{t}, eps.reshaped({seg.k(), seg.action_dim()})};
    Tape tape;
    return tape.value(batch_dmse_frozen(tape, model, SegmentBatch(one), draw))[0];
}

/// All per-segment D-MSE values from n_draws independent noise draws
/// (draw-major order).
template <NoisePredictor Model>
std::vector<double> dmse_samples(const Model& model, const SegmentBatch& batch, Rng& rng,
                                 std::size_t n_draws) {
    if (n_draws == 0) throw ConfigError("avg_dmse: n_draws must be >= 1");
    if (batch.count() == 0) throw ShapeError("avg_dmse: empty batch");
    std::vector<double> out;
    out.reserve(n_draws * batch.count());
    for (std::size_t d = 0; d < n_draws; ++d) {
        NoiseDraw draw = draw_noise(rng, batch.count(), batch.k(), batch.action_dim(),
                                    model.schedule().steps());
        Tape tape;
        const DenseArray& v = tape.value(batch_dmse_frozen(tape, model, batch, draw));
        out.insert(out.end(), v.raw().begin(), v.raw().end());
    }
    return out;
}

/// Monte-Carlo average D-MSE over uniform t and standard-normal noise.
template <NoisePredictor Model>
double avg_dmse(const Model& model, const SegmentBatch& batch, Rng& rng, std::size_t n_draws) {
    const std::vector<double> s = dmse_samples(model, batch, rng, n_draws);
    double acc = 0.0;
    for (double v : s) acc += v;
    return acc / static_cast<double>(s.size());
}

} // namespace fkpd
