// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fkpd/data/preference_pair.hpp"
#include "fkpd/diffusion/noise_model.hpp"
#include "fkpd/numeric/rng.hpp"
#include "fkpd/numeric/tape.hpp"
#include "fkpd/policy/dmse.hpp"

namespace fkpd {

enum class Variant { fkpd, rkpd, nrpd };

inline std::string to_string(Variant v) {
    switch (v) {
    case Variant::fkpd: return "fkpd";
    case Variant::rkpd: return "rkpd";
    case Variant::nrpd: return "nrpd";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "fkpd") return Variant::fkpd;
    if (s == "rkpd") return Variant::rkpd;
    if (s == "nrpd") return Variant::nrpd;
    throw ConfigError("unknown variant '" + s + "' (expected fkpd, rkpd or nrpd)");
}

struct AlignConfig {
    double rho = 5.0;
    double mu = 1.0;
    double b = 0.0;
    Variant variant = Variant::fkpd;
    std::size_t pref_batch = 64;
    std::size_t reg_batch = 64;
    std::size_t n_noise_draws = 1;

    void validate() const {
        if (!(rho > 0.0)) throw ConfigError("AlignConfig: rho must be > 0");
        if (!(mu >= 0.0)) throw ConfigError("AlignConfig: mu must be >= 0");
        if (!std::isfinite(b)) throw ConfigError("AlignConfig: b must be finite");
        if (pref_batch == 0 || reg_batch == 0) throw ConfigError("AlignConfig: empty batch size");
        if (n_noise_draws == 0) throw ConfigError("AlignConfig: n_noise_draws must be >= 1");
    }
};

/// Values of one alignment-loss evaluation. For every pair i,
/// arguments[i] == preference_terms[i] + regularization_terms[i], and the
/// loss is -mean_i sigmoid(-rho * arguments[i]).
struct LossReport {
    double total = 0.0;
    double preference = 0.0;     // mean of preference_terms
    double regularization = 0.0; // mean of regularization_terms
    double implicit_accuracy = 0.0;
    double e_winning = 0.0; // mean D-MSE of the winners in this batch
    double e_losing = 0.0;
    std::vector<double> preference_terms;
    std::vector<double> regularization_terms;
    std::vector<double> arguments;
};

struct LossResult {
    double value = 0.0;
    std::vector<double> gradient;
};

struct AlignResult {
    LossReport report;
    std::vector<double> gradient;
};

/// Shared (t, eps+, eps-) draw for a minibatch of pairs. Per pair: t, then the
/// winner noise, then the loser noise.
struct PairNoise {
    NoiseDraw winners;
    NoiseDraw losers;
};

inline PairNoise draw_pair_noise(Rng& rng, std::size_t pairs, std::size_t k,
                                 std::size_t action_dim, std::size_t steps) {
    PairNoise n;
    n.winners.t.resize(pairs);
    n.losers.t.resize(pairs);
    n.winners.eps = DenseArray::matrix(pairs * k, action_dim);
    n.losers.eps = DenseArray::matrix(pairs * k, action_dim);
    const std::size_t block = k * action_dim;
    for (std::size_t i = 0; i < pairs; ++i) {
        const std::size_t t = rng.uniform_int(1, steps);
        n.winners.t[i] = t;
        n.losers.t[i] = t;
        for (std::size_t j = 0; j < block; ++j) n.winners.eps[i * block + j] = rng.normal();
        for (std::size_t j = 0; j < block; ++j) n.losers.eps[i * block + j] = rng.normal();
    }
    return n;
}

/// Nodes of one alignment-loss graph, exposed so the individual terms can be
/// differentiated on their own.
struct AlignTerms {
    Var dmse_winners;   // pairs x 1
    Var dmse_losers;    // pairs x 1
    Var preference;     // pairs x 1
    Var regularization; // 1 x 1 (FKPD) or pairs x 1 (RKPD, NRPD)
    Var argument;       // pairs x 1
    Var total;          // 1 x 1
};

namespace detail {

inline Var negated_sigmoid_mean(Tape& tape, Var argument, double rho) {
    Var s = tape.sigmoid(tape.scale(argument, -rho));
    return tape.scale(tape.mean(s), -1.0);
}

inline void require_finite_argument(const Tape& tape, Var argument) {
    if (!tape.value(argument).all_finite())
        throw NumericError("alignment loss: non-finite sigmoid argument");
}

inline void check_pair_batch(const PairBatch& pairs, std::size_t action_dim) {
    if (pairs.count() == 0) throw ShapeError("alignment loss: empty preference batch");
    if (pairs.winners.action_dim() != action_dim)
        throw ShapeError("alignment loss: action dimension does not match the model");
}

} // namespace detail

/// FKPD graph: per pair, preference = D-MSE(winner) - D-MSE(loser) at a shared
/// t; regularization = mu * (mean D-MSE over reg_batch) - b with one draw
/// shared by every pair; total = -mean sigmoid(-rho (preference + regularization)).
template <NoisePredictor Model>
AlignTerms fkpd_terms(Tape& tape, const Model& model, const PairBatch& pairs,
                      const SegmentBatch& reg_batch, const AlignConfig& cfg,
                      const PairNoise& noise, const NoiseDraw& reg_noise) {
    cfg.validate();
    detail::check_pair_batch(pairs, model.action_dim());
    if (reg_batch.count() == 0) throw ShapeError("fkpd_loss: empty regularization batch");
    AlignTerms terms;
    terms.dmse_winners = batch_dmse(tape, model, pairs.winners, noise.winners);
    terms.dmse_losers = batch_dmse(tape, model, pairs.losers, noise.losers);
    terms.preference = tape.sub(terms.dmse_winners, terms.dmse_losers);
    Var reg_dmse = tape.mean(batch_dmse(tape, model, reg_batch, reg_noise));
    terms.regularization = tape.add_scalar(tape.scale(reg_dmse, cfg.mu), -cfg.b);
    terms.argument = tape.add(terms.preference, terms.regularization);
    detail::require_finite_argument(tape, terms.argument);
    terms.total = detail::negated_sigmoid_mean(tape, terms.argument, cfg.rho);
    return terms;
}

/// Draws the pair noise first, then the regularization noise.
template <NoisePredictor Model>
AlignTerms fkpd_terms(Tape& tape, const Model& model, const PairBatch& pairs,
                      const SegmentBatch& reg_batch, const AlignConfig& cfg, Rng& rng) {
    detail::check_pair_batch(pairs, model.action_dim());
    const std::size_t steps = model.schedule().steps();
    const PairNoise noise = draw_pair_noise(rng, pairs.count(), pairs.k(), model.action_dim(), steps);
    const NoiseDraw reg_noise =
        draw_noise(rng, reg_batch.count(), reg_batch.k(), reg_batch.action_dim(), steps);
    return fkpd_terms(tape, model, pairs, reg_batch, cfg, noise, reg_noise);
}

/// RKPD graph: same preference term; regularization per pair is
/// -(D-MSE_ref(winner) - D-MSE_ref(loser)) on the same draws, recorded as a
/// constant so nothing flows into the reference model.
template <NoisePredictor Model, NoisePredictor RefModel>
AlignTerms rkpd_terms(Tape& tape, const Model& model, const RefModel& ref, const PairBatch& pairs,
                      const AlignConfig& cfg, const PairNoise& noise) {
    cfg.validate();
    detail::check_pair_batch(pairs, model.action_dim());
    if (ref.action_dim() != model.action_dim() || ref.state_dim() != model.state_dim() ||
        !(ref.schedule() == model.schedule()))
        throw ShapeError("rkpd_loss: reference model does not match the trained model");
    AlignTerms terms;
    terms.dmse_winners = batch_dmse(tape, model, pairs.winners, noise.winners);
    terms.dmse_losers = batch_dmse(tape, model, pairs.losers, noise.losers);
    terms.preference = tape.sub(terms.dmse_winners, terms.dmse_losers);
    Var ref_w = batch_dmse_frozen(tape, ref, pairs.winners, noise.winners);
    Var ref_l = batch_dmse_frozen(tape, ref, pairs.losers, noise.losers);
    terms.regularization = tape.scale(tape.sub(ref_w, ref_l), -1.0);
    terms.argument = tape.add(terms.preference, terms.regularization);
    detail::require_finite_argument(tape, terms.argument);
    terms.total = detail::negated_sigmoid_mean(tape, terms.argument, cfg.rho);
    return terms;
}

template <NoisePredictor Model, NoisePredictor RefModel>
AlignTerms rkpd_terms(Tape& tape, const Model& model, const RefModel& ref, const PairBatch& pairs,
                      const AlignConfig& cfg, Rng& rng) {
    detail::check_pair_batch(pairs, model.action_dim());
    const PairNoise noise = draw_pair_noise(rng, pairs.count(), pairs.k(), model.action_dim(),
                                            model.schedule().steps());
    return rkpd_terms(tape, model, ref, pairs, cfg, noise);
}

/// NRPD graph: the preference term alone (mu and b are ignored).
template <NoisePredictor Model>
AlignTerms nrpd_terms(Tape& tape, const Model& model, const PairBatch& pairs,
                      const AlignConfig& cfg, const PairNoise& noise) {
    cfg.validate();
    detail::check_pair_batch(pairs, model.action_dim());
    AlignTerms terms;
    terms.dmse_winners = batch_dmse(tape, model, pairs.winners, noise.winners);
    terms.dmse_losers = batch_dmse(tape, model, pairs.losers, noise.losers);
    terms.preference = tape.sub(terms.dmse_winners, terms.dmse_losers);
    terms.regularization = tape.constant(DenseArray::matrix(pairs.count(), 1, 0.0));
    terms.argument = terms.preference;
    detail::require_finite_argument(tape, terms.argument);
    terms.total = detail::negated_sigmoid_mean(tape, terms.argument, cfg.rho);
    return terms;
}

template <NoisePredictor Model>
AlignTerms nrpd_terms(Tape& tape, const Model& model, const PairBatch& pairs,
                      const AlignConfig& cfg, Rng& rng) {
    detail::check_pair_batch(pairs, model.action_dim());
    const PairNoise noise = draw_pair_noise(rng, pairs.count(), pairs.k(), model.action_dim(),
                                            model.schedule().steps());
    return nrpd_terms(tape, model, pairs, cfg, noise);
}

namespace detail {

inline double mean_of(const DenseArray& a) {
    double s = 0.0;
    for (double v : a.raw()) s += v;
    return s / static_cast<double>(a.size());
}

inline AlignResult finish(Tape& tape, const AlignTerms& terms, std::size_t n_params) {
    AlignResult r;
    LossReport& rep = r.report;
    rep.total = tape.scalar(terms.total);
    const DenseArray& pref = tape.value(terms.preference);
    const DenseArray& reg = tape.value(terms.regularization);
    const DenseArray& arg = tape.value(terms.argument);
    const std::size_t n = pref.size();
    rep.preference_terms = pref.raw();
    rep.regularization_terms.resize(n);
    for (std::size_t i = 0; i < n; ++i) rep.regularization_terms[i] = reg.size() == 1 ? reg[0] : reg[i];
    rep.arguments = arg.raw();
    rep.preference = mean_of(pref);
    rep.regularization = reg.size() == 1 ? reg[0] : mean_of(reg);
    std::size_t hits = 0;
    for (double v : pref.raw()) hits += v < 0.0 ? 1 : 0;
    rep.implicit_accuracy = static_cast<double>(hits) / static_cast<double>(n);
    rep.e_winning = mean_of(tape.value(terms.dmse_winners));
    rep.e_losing = mean_of(tape.value(terms.dmse_losers));
    r.gradient = loss_gradient(tape, terms.total, n_params);
    return r;
}

inline AlignResult average(std::vector<AlignResult> runs) {
    if (runs.size() == 1) return std::move(runs.front());
    AlignResult out = runs.front();
    const double inv = 1.0 / static_cast<double>(runs.size());
    for (std::size_t j = 1; j < runs.size(); ++j) {
        const AlignResult& r = runs[j];
        out.report.total += r.report.total;
        out.report.preference += r.report.preference;
        out.report.regularization += r.report.regularization;
        out.report.implicit_accuracy += r.report.implicit_accuracy;
        out.report.e_winning += r.report.e_winning;
        out.report.e_losing += r.report.e_losing;
        for (std::size_t i = 0; i < out.gradient.size(); ++i) out.gradient[i] += r.gradient[i];
    }
    out.report.total *= inv;
    out.report.preference *= inv;
    out.report.regularization *= inv;
    out.report.implicit_accuracy *= inv;
    out.report.e_winning *= inv;
    out.report.e_losing *= inv;
    for (double& g : out.gradient) g *= inv;
    return out;
}

} // namespace detail

template <NoisePredictor Model>
AlignResult fkpd_loss(const Model& model, const PairBatch& pairs, const SegmentBatch& reg_batch,
                      const AlignConfig& cfg, Rng& rng) {
    if (cfg.variant != Variant::fkpd) throw ConfigError("fkpd_loss: config variant is not fkpd");
    std::vector<AlignResult> runs;
    for (std::size_t d = 0; d < cfg.n_noise_draws; ++d) {
        Tape tape;
        AlignTerms terms = fkpd_terms(tape, model, pairs, reg_batch, cfg, rng);
        runs.push_back(detail::finish(tape, terms, model.parameter_count()));
    }
    return detail::average(std::move(runs));
}

template <NoisePredictor Model, NoisePredictor RefModel>
AlignResult rkpd_loss(const Model& model, const RefModel* ref, const PairBatch& pairs,
                      const AlignConfig& cfg, Rng& rng) {
    if (cfg.variant != Variant::rkpd) throw ConfigError("rkpd_loss: config variant is not rkpd");
    if (ref == nullptr) throw ConfigError("rkpd_loss: a frozen reference model is required");
    std::vector<AlignResult> runs;
    for (std::size_t d = 0; d < cfg.n_noise_draws; ++d) {
        Tape tape;
        AlignTerms terms = rkpd_terms(tape, model, *ref, pairs, cfg, rng);
        runs.push_back(detail::finish(tape, terms, model.parameter_count()));
    }
    return detail::average(std::move(runs));
}

template <NoisePredictor Model>
AlignResult nrpd_loss(const Model& model, const PairBatch& pairs, const AlignConfig& cfg,
                      Rng& rng) {
    if (cfg.variant != Variant::nrpd) throw ConfigError("nrpd_loss: config variant is not nrpd");
    std::vector<AlignResult> runs;
    for (std::size_t d = 0; d < cfg.n_noise_draws; ++d) {
        Tape tape;
        AlignTerms terms = nrpd_terms(tape, model, pairs, cfg, rng);
        runs.push_back(detail::finish(tape, terms, model.parameter_count()));
    }
    return detail::average(std::move(runs));
}

/// Simplified noise-prediction objective: mean squared error between the
/// injected noise and the prediction, one (t, eps) draw per sample.
template <NoisePredictor Model>
Var bc_terms(Tape& tape, const Model& model, const SegmentBatch& batch, Rng& rng) {
    if (batch.count() == 0) throw ShapeError("bc_loss: empty batch");
    NoiseDraw draw =
        draw_noise(rng, batch.count(), batch.k(), batch.action_dim(), model.schedule().steps());
    return tape.mean(batch_dmse(tape, model, batch, draw));
}

template <NoisePredictor Model>
LossResult bc_loss(const Model& model, const SegmentBatch& batch, Rng& rng) {
    Tape tape;
    Var loss = bc_terms(tape, model, batch, rng);
    LossResult r;
    r.value = tape.scalar(loss);
    if (!std::isfinite(r.value)) throw NumericError("bc_loss: non-finite loss");
    r.gradient = loss_gradient(tape, loss, model.parameter_count());
    return r;
}

/// Fraction of pairs whose winner has the lower D-MSE under the given draws.
/// Ties count as misses.
template <NoisePredictor Model>
double implicit_accuracy(const Model& model, const PairBatch& pairs, const PairNoise& noise) {
    detail::check_pair_batch(pairs, model.action_dim());
    Tape tape;
    const DenseArray w = tape.value(batch_dmse_frozen(tape, model, pairs.winners, noise.winners));
    const DenseArray l = tape.value(batch_dmse_frozen(tape, model, pairs.losers, noise.losers));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < w.size(); ++i) hits += (w[i] - l[i] < 0.0) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(w.size());
}

/// Same, with one fresh (t, eps+, eps-) draw per pair.
template <NoisePredictor Model>
double implicit_accuracy(const Model& model, const PairBatch& pairs, Rng& rng) {
    detail::check_pair_batch(pairs, model.action_dim());
    const PairNoise noise = draw_pair_noise(rng, pairs.count(), pairs.k(), model.action_dim(),
                                            model.schedule().steps());
    return implicit_accuracy(model, pairs, noise);
}

} // namespace fkpd
