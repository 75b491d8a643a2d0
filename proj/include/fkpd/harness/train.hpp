// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fkpd/data/dataset.hpp"
#include "fkpd/data/preference_pair.hpp"
#include "fkpd/diffusion/checkpoint.hpp"
#include "fkpd/harness/config.hpp"
#include "fkpd/losses/alignment.hpp"
#include "fkpd/numeric/adam.hpp"
#include "fkpd/policy/dmse.hpp"

namespace fkpd {

/// Thrown when a training loop aborts. `history` holds the losses seen so far.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, std::vector<double> history)
        : NumericError(what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

namespace detail {

// Stream ids for Rng::split-free seeding: one independent engine per purpose.
enum : std::uint64_t {
    kStreamInit = 0x1001,
    kStreamBc = 0x1002,
    kStreamRef = 0x1003,
    kStreamAlign = 0x1004,
    kStreamTraceNoise = 0x1005,
    kStreamTraceEval = 0x1006,
    kStreamData = 0x1007,
    kStreamLabels = 0x1008,
    kStreamEval = 0x1009,
};

inline Rng stream(std::uint64_t seed, std::uint64_t id) {
    // splitmix64 finalizer over (seed, id)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (id + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
}

/// Aborts on a non-finite loss or when the mean of the last 100 losses is
/// more than 5x the mean of the 100 losses ending 1000 steps earlier.
inline void check_divergence(const std::vector<double>& losses, const char* phase) {
    const double last = losses.back();
    if (!std::isfinite(last)) {
        throw DivergenceError(std::string(phase) + ": non-finite loss at step " +
                                  std::to_string(losses.size() - 1),
                              losses);
    }
    constexpr std::size_t window = 100, lag = 1000;
    const std::size_t n = losses.size();
    if (n < lag + window) return;
    auto mean_abs = [&](std::size_t end) {
        double s = 0.0;
        for (std::size_t i = end - window; i < end; ++i) s += std::abs(losses[i]);
        return s / window;
    };
    const double now = mean_abs(n), before = mean_abs(n - lag);
    if (before > 0.0 && now > 5.0 * before) {
        std::ostringstream os;
        os << phase << ": loss rose from " << before << " to " << now << " over " << lag
           << " steps";
        throw DivergenceError(os.str(), losses);
    }
}

class ParamStepper {
public:
    ParamStepper(MlpParams& net, double lr)
        : net_(net), flat_(net.flatten()), state_(flat_.size()) {
        cfg_.step_size = lr;
    }
    void step(const std::vector<double>& grad) {
        adam_step(flat_, grad, state_, cfg_);
        net_.assign(flat_);
    }

private:
    MlpParams& net_;
    std::vector<double> flat_;
    AdamState state_;
    AdamConfig cfg_;
};

} // namespace detail

// -- behaviour cloning -------------------------------------------------------

struct BcOutcome {
    Checkpoint checkpoint;
    std::vector<double> losses; // one per step
};

inline NoiseModel initial_model(const ExperimentConfig& cfg) {
    Rng rng = detail::stream(cfg.seed, detail::kStreamInit);
    return NoiseModel::create(cfg.model_config(),
                              make_schedule(cfg.schedule.steps, cfg.schedule.beta_start,
                                            cfg.schedule.beta_end),
                              rng, cfg.action_box());
}

/// Average D-MSE of `model` over length-k windows of D, from a fixed stream.
inline double reference_dmse(const NoiseModel& model, const OfflineDataset& data, std::size_t k,
                             std::size_t segments, std::size_t draws, std::uint64_t seed) {
    Rng rng = detail::stream(seed, detail::kStreamRef);
    const SegmentBatch batch = sample_segment_batch(data, k, segments, rng);
    return avg_dmse(model, batch, rng, draws);
}

/// Phase 1: fit the noise model to D with the simplified objective on
/// single-transition batches.
inline BcOutcome train_bc(const ExperimentConfig& cfg, const OfflineDataset& data,
                          const std::function<void(std::size_t, double)>& on_log = {}) {
    data.validate();
    if (data.state_dim != cfg.state_dim() || data.action_dim != cfg.action_dim())
        throw ShapeError("train_bc: dataset dimensions do not match the config environment");
    if (data.transitions() == 0) throw ConfigError("train_bc: empty offline dataset");
    if (cfg.bc.batch == 0) throw ConfigError("train_bc: batch must be >= 1");

    BcOutcome out;
    NoiseModel model = initial_model(cfg);
    Rng rng = detail::stream(cfg.seed, detail::kStreamBc);
    detail::ParamStepper stepper(model.net(), cfg.bc.lr);
    out.losses.reserve(cfg.bc.steps);
    for (std::size_t s = 0; s < cfg.bc.steps; ++s) {
        const SegmentBatch batch = sample_segment_batch(data, 1, cfg.bc.batch, rng);
        LossResult r = bc_loss(model, batch, rng);
        out.losses.push_back(r.value);
        detail::check_divergence(out.losses, "train_bc");
        stepper.step(r.gradient);
        if (on_log && cfg.bc.log_every > 0 && s % cfg.bc.log_every == 0) on_log(s, r.value);
    }
    if (!out.losses.empty()) {
        const std::size_t tail = std::min<std::size_t>(500, out.losses.size());
        const double mean =
            std::accumulate(out.losses.end() - static_cast<std::ptrdiff_t>(tail), out.losses.end(),
                            0.0) /
            static_cast<double>(tail);
        if (!(mean < cfg.bc.loss_threshold)) {
            throw DivergenceError("train_bc: final loss " + std::to_string(mean) +
                                      " is not below the threshold " +
                                      std::to_string(cfg.bc.loss_threshold),
                                  out.losses);
        }
    }
    const std::size_t k = cfg.data.k;
    out.checkpoint.model = std::move(model);
    out.checkpoint.metadata = {
        {"phase", "bc"},
        {"seed", cfg.seed},
        {"steps", cfg.bc.steps},
        {"final_loss", out.losses.empty() ? 0.0 : out.losses.back()},
        {"reference_k", k},
        {"reference_dmse", reference_dmse(out.checkpoint.model, data, k, cfg.bc.reference_segments,
                                          cfg.bc.reference_draws, cfg.seed)},
        {"config", to_json(cfg)}};
    return out;
}

// -- alignment --------------------------------------------------------------

/// One row per evaluation step of the alignment phase.
struct TraceRecord {
    std::size_t step = 0;
    double total = 0.0;
    double preference = 0.0;
    double regularization = 0.0;
    double batch_accuracy = 0.0; // implicit accuracy on the training minibatch
    double e_winning = 0.0;      // held-out winners, fixed noise
    double e_losing = 0.0;
    double i_acc = 0.0;          // held-out pairs, fixed noise
    double u = 0.0;              // evaluation metric, NaN-free; 0 when no evaluator

    bool operator==(const TraceRecord&) const = default;
};

struct TrainTrace {
    Variant variant = Variant::fkpd;
    double reference_dmse = 0.0;
    double bias = 0.0;
    std::vector<TraceRecord> records;

    bool operator==(const TrainTrace&) const = default;
};

/// Log row written every log_every steps.
struct LossLogRow {
    std::size_t step = 0;
    LossReport report;
};

struct AlignOutcome {
    Checkpoint checkpoint;
    TrainTrace trace;
    std::vector<LossLogRow> log;
    std::uint64_t reference_hash_before = 0;
    std::uint64_t reference_hash_after = 0;
};

/// Evaluation hook for the trace metric U. Receives the current model and a
/// fresh deterministic stream for this eval step.
using TraceEvaluator = std::function<double(const NoiseModel&, Rng&)>;

/// Mean D-MSE of winners, of losers and implicit accuracy on a fixed set of
/// pairs with a fixed noise draw, so trace rows are comparable across steps.
struct HeldOutStats {
    double e_winning = 0.0;
    double e_losing = 0.0;
    double i_acc = 0.0;
};

inline HeldOutStats held_out_stats(const NoiseModel& model, const PairBatch& pairs,
                                   const PairNoise& noise) {
    Tape tape;
    const DenseArray w = tape.value(batch_dmse_frozen(tape, model, pairs.winners, noise.winners));
    const DenseArray l = tape.value(batch_dmse_frozen(tape, model, pairs.losers, noise.losers));
    HeldOutStats s;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s.e_winning += w[i];
        s.e_losing += l[i];
        hits += (w[i] < l[i]) ? 1 : 0;
    }
    const double n = static_cast<double>(w.size());
    s.e_winning /= n;
    s.e_losing /= n;
    s.i_acc = static_cast<double>(hits) / n;
    return s;
}

/// Phase 2: align the BC model on preference pairs with the configured
/// variant. The BC checkpoint itself is never modified; RKPD reads it as the
/// frozen reference.
inline AlignOutcome train_align(const ExperimentConfig& cfg, const Checkpoint& bc,
                                const OfflineDataset& data,
                                const std::vector<PreferencePair>& train_pairs,
                                const std::vector<PreferencePair>& heldout_pairs,
                                const TraceEvaluator& evaluator = {},
                                const std::function<void(const LossLogRow&)>& on_log = {}) {
    AlignConfig loss_cfg = cfg.align.loss;
    loss_cfg.validate();
    if (train_pairs.empty()) throw ConfigError("train_align: no training pairs");
    if (heldout_pairs.empty()) throw ConfigError("train_align: no held-out pairs");
    if (bc.model.state_dim() != cfg.state_dim() || bc.model.action_dim() != cfg.action_dim())
        throw ShapeError("train_align: checkpoint dimensions do not match the config");
    const std::size_t k = train_pairs.front().winner.k();

    AlignOutcome out;
    const NoiseModel& ref = bc.model;
    out.reference_hash_before = parameter_hash(ref.net());

    double ref_dmse = 0.0;
    if (bc.metadata.contains("reference_dmse") &&
        bc.metadata.value("reference_k", std::size_t{0}) == k) {
        ref_dmse = bc.metadata["reference_dmse"].get<double>();
    } else {
        ref_dmse = reference_dmse(ref, data, k, cfg.bc.reference_segments, cfg.bc.reference_draws,
                                  cfg.seed);
    }
    if (loss_cfg.variant == Variant::fkpd && cfg.align.auto_bias) loss_cfg.b = loss_cfg.mu * ref_dmse;
    out.trace.variant = loss_cfg.variant;
    out.trace.reference_dmse = ref_dmse;
    out.trace.bias = loss_cfg.variant == Variant::fkpd ? loss_cfg.b : 0.0;

    NoiseModel model = ref;
    detail::ParamStepper stepper(model.net(), cfg.align.lr);
    Rng rng = detail::stream(cfg.seed, detail::kStreamAlign);

    const PairBatch held(heldout_pairs);
    Rng held_rng = detail::stream(cfg.seed, detail::kStreamTraceNoise);
    const PairNoise held_noise = draw_pair_noise(held_rng, held.count(), held.k(),
                                                 model.action_dim(), model.schedule().steps());

    std::vector<double> losses;
    std::vector<PreferencePair> minibatch(loss_cfg.pref_batch);
    for (std::size_t s = 0; s <= cfg.align.steps; ++s) {
        for (PreferencePair& p : minibatch)
            p = train_pairs[rng.uniform_int(0, static_cast<std::int64_t>(train_pairs.size()) - 1)];
        const PairBatch pairs(minibatch);
        AlignResult r;
        switch (loss_cfg.variant) {
        case Variant::fkpd: {
            const SegmentBatch reg = sample_segment_batch(data, k, loss_cfg.reg_batch, rng);
            r = fkpd_loss(model, pairs, reg, loss_cfg, rng);
            break;
        }
        case Variant::rkpd: r = rkpd_loss(model, &ref, pairs, loss_cfg, rng); break;
        case Variant::nrpd: r = nrpd_loss(model, pairs, loss_cfg, rng); break;
        }
        losses.push_back(r.report.total);
        detail::check_divergence(losses, "train_align");

        const bool eval_now = (cfg.align.eval_every > 0 && s % cfg.align.eval_every == 0) ||
                              s == cfg.align.steps;
        if (eval_now) {
            const HeldOutStats h = held_out_stats(model, held, held_noise);
            TraceRecord rec{s,
                            r.report.total,
                            r.report.preference,
                            r.report.regularization,
                            r.report.implicit_accuracy,
                            h.e_winning,
                            h.e_losing,
                            h.i_acc,
                            0.0};
            if (evaluator) {
                Rng eval_rng = detail::stream(cfg.seed ^ (0x5bd1e995ULL * (s + 1)),
                                              detail::kStreamTraceEval);
                rec.u = evaluator(model, eval_rng);
            }
            out.trace.records.push_back(rec);
        }
        if ((cfg.align.log_every > 0 && s % cfg.align.log_every == 0) || s == cfg.align.steps) {
            out.log.push_back({s, r.report});
            if (on_log) on_log(out.log.back());
        }
        if (s < cfg.align.steps) stepper.step(r.gradient);
    }

    out.reference_hash_after = parameter_hash(ref.net());
    if (out.reference_hash_after != out.reference_hash_before)
        throw NumericError("train_align: the frozen reference changed during alignment");
    out.checkpoint.model = std::move(model);
    out.checkpoint.metadata = {{"phase", "align"},
                               {"variant", to_string(loss_cfg.variant)},
                               {"seed", cfg.seed},
                               {"steps", cfg.align.steps},
                               {"rho", loss_cfg.rho},
                               {"mu", loss_cfg.mu},
                               {"b", out.trace.bias},
                               {"reference_dmse", ref_dmse},
                               {"reference_hash", out.reference_hash_before},
                               {"config", to_json(cfg)}};
    return out;
}

} // namespace fkpd
