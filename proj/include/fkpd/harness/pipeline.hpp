// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fkpd/data/io.hpp"
#include "fkpd/diffusion/checkpoint.hpp"
#include "fkpd/harness/config.hpp"
#include "fkpd/harness/datagen.hpp"
#include "fkpd/harness/evaluate.hpp"
#include "fkpd/harness/report.hpp"
#include "fkpd/harness/train.hpp"

// End-to-end runs: data -> labels -> BC -> three alignment variants -> eval.

namespace fkpd {

inline constexpr std::array<Variant, 3> kAllVariants{Variant::fkpd, Variant::rkpd, Variant::nrpd};

struct VariantRun {
    Variant variant = Variant::fkpd;
    AlignOutcome align;
    EvalResult eval;
};

struct PipelineResult {
    ExperimentConfig config;
    OfflineDataset data;
    PrefDataset prefs;
    BcOutcome bc;
    double reference_dmse = 0.0;
    EvalResult bc_eval;
    std::vector<VariantRun> runs;

    const VariantRun& run(Variant v) const {
        for (const VariantRun& r : runs)
            if (r.variant == v) return r;
        throw ConfigError("pipeline: variant " + to_string(v) + " was not run");
    }
    /// (U1 - U0) / U0 for one variant.
    double improvement(Variant v) const { return improvement_factor(bc_eval.u, run(v).eval.u); }
};

using ProgressFn = std::function<void(const std::string&)>;

/// U for the training trace: a cheap version of the final evaluation.
inline TraceEvaluator trace_evaluator(const ExperimentConfig& cfg) {
    return [cfg](const NoiseModel& m, Rng& rng) {
        return evaluate(m, cfg, cfg.eval.trace_episodes, rng).u;
    };
}

/// All final evaluations share one stream so U0 and U1 see the same starts.
inline EvalResult final_evaluation(const NoiseModel& m, const ExperimentConfig& cfg) {
    Rng rng = detail::stream(cfg.seed, detail::kStreamEval);
    return evaluate(m, cfg, cfg.eval.episodes, rng);
}

inline PipelineResult run_pipeline(const ExperimentConfig& cfg,
                                   const std::vector<Variant>& variants = {kAllVariants.begin(),
                                                                           kAllVariants.end()},
                                   const ProgressFn& progress = {}) {
    auto say = [&](const std::string& s) {
        if (progress) progress(s);
    };
    PipelineResult out;
    out.config = cfg;
    out.data = generate_dataset(cfg);
    out.prefs = label_dataset(out.data, cfg);
    auto [train_pairs, heldout] = split_pairs(out.prefs.pairs, cfg.data.heldout_pairs);
    say("data ready");
    out.bc = train_bc(cfg, out.data);
    out.reference_dmse = out.bc.checkpoint.metadata.at("reference_dmse").get<double>();
    out.bc_eval = final_evaluation(out.bc.checkpoint.model, cfg);
    say("bc done, U0 = " + detail::fixed(out.bc_eval.u, 3));
    for (Variant v : variants) {
        ExperimentConfig c = cfg;
        c.align.loss.variant = v;
        VariantRun r;
        r.variant = v;
        r.align = train_align(c, out.bc.checkpoint, out.data, train_pairs, heldout,
                              trace_evaluator(c));
        r.eval = final_evaluation(r.align.checkpoint.model, c);
        say(to_string(v) + " done, U1 = " + detail::fixed(r.eval.u, 3));
        out.runs.push_back(std::move(r));
    }
    return out;
}

/// Writes datasets, checkpoints, traces, CSVs and plots of a pipeline run.
inline void write_pipeline_outputs(const PipelineResult& p, const std::filesystem::path& dir) {
    detail::ensure_dir(dir);
    write_dataset(p.data, (dir / "dataset.bin").string());
    write_pref_dataset(p.prefs, (dir / "prefs.bin").string());
    save_checkpoint(p.bc.checkpoint, (dir / "bc.ckpt").string());
    {
        const auto path = dir / "bc_loss.csv";
        std::ofstream os = detail::open_text(path);
        os << "step,loss\n";
        for (std::size_t i = 0; i < p.bc.losses.size(); ++i)
            os << i << ',' << detail::num(p.bc.losses[i]) << '\n';
        detail::close_text(os, path);
    }
    const bool toy = p.config.env == EnvKind::toy;
    if (toy) {
        write_text_file(dir / "samples_bc.svg",
                        svg_toy_scatter("BC samples", p.bc_eval.samples, p.config.mixture));
        write_text_file(dir / "samples_data.svg",
                        svg_toy_scatter("Dataset", [&] {
                            DenseArray a = DenseArray::matrix(p.data.episodes.size(), 2);
                            for (std::size_t i = 0; i < p.data.episodes.size(); ++i) {
                                a(i, 0) = p.data.episodes[i].actions(0, 0);
                                a(i, 1) = p.data.episodes[i].actions(0, 1);
                            }
                            return a;
                        }(), p.config.mixture));
    }
    for (const VariantRun& r : p.runs) {
        const std::string v = to_string(r.variant);
        save_checkpoint(r.align.checkpoint, (dir / (v + ".ckpt")).string());
        save_trace(r.align.trace, (dir / (v + "_trace.json")).string());
        write_report(r.align.trace, dir, v + "_");
        const auto log_path = dir / (v + "_log.csv");
        std::ofstream os = detail::open_text(log_path);
        write_loss_log_csv(r.align.log, r.variant, os);
        detail::close_text(os, log_path);
        if (toy)
            write_text_file(dir / ("samples_" + v + ".svg"),
                            svg_toy_scatter(v + " samples", r.eval.samples, p.config.mixture));
    }
}

/// Machine-readable summary of a pipeline run.
inline nlohmann::json pipeline_summary(const PipelineResult& p) {
    nlohmann::json j;
    j["env"] = to_string(p.config.env);
    j["seed"] = p.config.seed;
    j["reference_dmse"] = p.reference_dmse;
    j["bc"] = {{"u", p.bc_eval.u}, {"final_loss", p.bc.losses.empty() ? 0.0 : p.bc.losses.back()}};
    if (p.config.env == EnvKind::toy) {
        j["bc"]["ood_fraction"] = p.bc_eval.ood_fraction;
        j["bc"]["mode_shares"] = p.bc_eval.mode_shares;
    }
    for (const VariantRun& r : p.runs) {
        const TraceRecord& first = r.align.trace.records.front();
        const TraceRecord& last = r.align.trace.records.back();
        nlohmann::json v = {{"u", r.eval.u},
                            {"initial_i_acc", first.i_acc},
                            {"final_i_acc", last.i_acc},
                            {"final_e_winning", last.e_winning},
                            {"final_e_losing", last.e_losing},
                            {"bias", r.align.trace.bias}};
        if (p.bc_eval.u != 0.0) v["f_im"] = p.improvement(r.variant);
        if (p.config.env == EnvKind::toy) {
            v["ood_fraction"] = r.eval.ood_fraction;
            v["mode_shares"] = r.eval.mode_shares;
        }
        j["variants"][to_string(r.variant)] = v;
    }
    return j;
}

} // namespace fkpd
