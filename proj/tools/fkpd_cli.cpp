// SPDX-License-Identifier: Apache-2.0
//
// fkpd command-line driver. Every subcommand writes a JSON summary to stdout
// on success; failures exit nonzero with {"error": ..., "message": ...} on
// stderr.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fkpd/fkpd.hpp"
#include "fkpd/harness/pipeline.hpp"

namespace {

using namespace fkpd;
using nlohmann::json;

struct CommonOpts {
    std::string config_path;
    std::string env = "toy";
    std::optional<std::uint64_t> seed;
};

ExperimentConfig resolve_config(const CommonOpts& o, bool seed_required) {
    ExperimentConfig cfg = o.config_path.empty()
                               ? ExperimentConfig::defaults_for(env_from_string(o.env))
                               : load_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    else if (seed_required) throw ConfigError("--seed is required for this command");
    return cfg;
}

void add_common(CLI::App* app, CommonOpts& o, bool seed_required) {
    app->add_option("--config", o.config_path, "JSON config; missing fields keep their defaults")
        ->check(CLI::ExistingFile);
    app->add_option("--env", o.env, "toy or point_mass (used when no --config is given)");
    auto* s = app->add_option("--seed", o.seed, "master seed");
    if (seed_required) s->required();
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

void require_exists(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path))
        throw IoError(std::string(what) + " '" + path + "' does not exist");
}

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const ShapeError*>(&e)) return "shape_error";
    if (dynamic_cast<const ConfigError*>(&e)) return "config_error";
    if (dynamic_cast<const IoError*>(&e)) return "io_error";
    if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
    if (dynamic_cast<const NumericError*>(&e)) return "numeric_error";
    return "error";
}

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
    return code;
}

json gradcheck_report(std::uint64_t seed) {
    // Tiny nets keep the finite-difference sweep cheap.
    NoiseModelConfig mc;
    mc.state_dim = 1;
    mc.action_dim = 2;
    mc.time_embed_dim = 4;
    mc.hidden = {8, 8};
    Rng rng(seed);
    const DiffusionSchedule sched = make_schedule(10, 1e-4, 0.2);
    const NoiseModel ref = NoiseModel::create(mc, sched, rng);
    NoiseModel model = ref;
    {
        std::vector<double> flat = model.net().flatten();
        for (double& v : flat) v += 0.05 * rng.normal();
        model.net().assign(flat);
    }
    auto seg = [&](std::size_t k) {
        return Segment(rng.normal_array({k, 1}), rng.normal_array({k, 2}));
    };
    std::vector<PreferencePair> pairs;
    for (int i = 0; i < 3; ++i) pairs.push_back({seg(2), seg(2), {}});
    const PairBatch pb(pairs);
    std::vector<Segment> regs{seg(2), seg(2)};
    const SegmentBatch reg(regs);
    std::vector<Segment> bcs{seg(1), seg(1), seg(1), seg(1)};
    const SegmentBatch bcb(bcs);
    AlignConfig ac;
    ac.rho = 2.0;
    ac.mu = 0.7;
    ac.b = 0.3;

    const std::uint64_t loss_seed = rng.engine()();
    auto with = [&](std::span<const double> flat) {
        NoiseModel m = model;
        m.net().assign(flat);
        return m;
    };
    json out = json::object();
    out["parameters"] = model.parameter_count();
    auto check = [&](const std::string& name, auto value_and_grad) {
        const std::vector<double> x = model.net().flatten();
        const std::vector<double> g = value_and_grad(model).second;
        const GradCheckResult r = gradcheck(
            [&](std::span<const double> p) { return value_and_grad(with(p)).first; }, x, g);
        out[name] = {{"relative_error", r.relative_error}, {"max_abs_error", r.max_abs_error}};
        return r.relative_error;
    };
    double worst = 0.0;
    worst = std::max(worst, check("bc_loss", [&](const NoiseModel& m) {
        Rng r(loss_seed);
        LossResult l = bc_loss(m, bcb, r);
        return std::pair{l.value, l.gradient};
    }));
    for (Variant v : kAllVariants) {
        AlignConfig c = ac;
        c.variant = v;
        worst = std::max(worst, check(to_string(v) + "_loss", [&](const NoiseModel& m) {
            Rng r(loss_seed);
            AlignResult a = v == Variant::fkpd   ? fkpd_loss(m, pb, reg, c, r)
                            : v == Variant::rkpd ? rkpd_loss(m, &ref, pb, c, r)
                                                 : nrpd_loss(m, pb, c, r);
            return std::pair{a.report.total, a.gradient};
        }));
    }
    out["worst_relative_error"] = worst;
    out["tolerance"] = 1e-4;
    out["pass"] = worst <= 1e-4;
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fkpd: preference alignment of diffusion policies"};
    app.require_subcommand(1);

    // gen-data
    CommonOpts gen_o;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "generate the offline dataset D");
    add_common(gen, gen_o, true);
    gen->add_option("--out", gen_out, "dataset file")->required();

    // label
    std::string lab_in, lab_out, lab_jsonl;
    std::size_t lab_k = 1, lab_pairs = 1000;
    double lab_temp = 0.0;
    bool lab_drop = false;
    std::uint64_t lab_seed = 0;
    auto* lab = app.add_subcommand("label", "label segment pairs with the script teacher");
    lab->add_option("--in", lab_in, "dataset file")->required()->check(CLI::ExistingFile);
    lab->add_option("--out", lab_out, "preference dataset file")->required();
    lab->add_option("--k", lab_k, "segment length")->required();
    lab->add_option("--n-pairs", lab_pairs, "number of pairs")->required();
    lab->add_option("--noise-temp", lab_temp, "0 = deterministic teacher");
    lab->add_option("--seed", lab_seed, "seed")->required();
    lab->add_flag("--drop-ties", lab_drop, "drop exact ties instead of coin-flipping");
    lab->add_option("--jsonl", lab_jsonl, "also export JSON lines here");

    // train-bc
    CommonOpts bc_o;
    std::string bc_data, bc_out, bc_loss_csv;
    auto* bc = app.add_subcommand("train-bc", "behaviour cloning phase");
    add_common(bc, bc_o, true);
    bc->add_option("--data", bc_data, "dataset file")->required();
    bc->add_option("--out", bc_out, "checkpoint file")->required();
    bc->add_option("--loss-csv", bc_loss_csv, "per-step loss CSV");

    // align
    CommonOpts al_o;
    std::string al_variant = "fkpd", al_data, al_prefs, al_bc, al_out, al_trace, al_log;
    std::optional<std::size_t> al_heldout;
    auto* al = app.add_subcommand("align", "alignment phase");
    add_common(al, al_o, true);
    al->add_option("--variant", al_variant, "fkpd, rkpd or nrpd")
        ->check(CLI::IsMember({"fkpd", "rkpd", "nrpd"}));
    al->add_option("--data", al_data, "dataset file (regularization batches)")->required();
    al->add_option("--prefs", al_prefs, "preference dataset file")->required();
    al->add_option("--bc", al_bc, "BC checkpoint (frozen reference)")->required();
    al->add_option("--out", al_out, "aligned checkpoint file")->required();
    al->add_option("--trace", al_trace, "trace JSON output");
    al->add_option("--log", al_log, "loss log CSV output");
    al->add_option("--heldout", al_heldout, "trailing pairs held out for the trace");

    // eval
    CommonOpts ev_o;
    std::string ev_ckpt;
    std::optional<std::size_t> ev_n;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev, ev_o, true);
    ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
    ev->add_option("-n,--n", ev_n, "episodes or samples");

    // report
    std::string rp_trace, rp_out;
    auto* rp = app.add_subcommand("report", "CSV files and SVG plots from a trace");
    rp->add_option("--trace", rp_trace, "trace JSON")->required()->check(CLI::ExistingFile);
    rp->add_option("--out", rp_out, "output directory")->required();

    // toy-demo
    CommonOpts td_o;
    std::string td_out = "toy_demo";
    auto* td = app.add_subcommand("toy-demo", "BC + FKPD/RKPD/NRPD on the 2D mixture");
    add_common(td, td_o, true);
    td->add_option("--out", td_out, "output directory");

    // gradcheck
    std::uint64_t gc_seed = 0;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss");
    gc->add_option("--seed", gc_seed, "seed");

    // config
    std::string cf_env = "toy";
    auto* cf = app.add_subcommand("config", "print the default config for an environment");
    cf->add_option("--env", cf_env, "toy or point_mass");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        if (*gen) {
            const ExperimentConfig cfg = resolve_config(gen_o, true);
            const OfflineDataset d = generate_dataset(cfg);
            write_dataset(d, gen_out);
            print({{"out", gen_out}, {"episodes", d.episodes.size()},
                   {"transitions", d.transitions()}, {"env", d.env_spec}});
        } else if (*lab) {
            const OfflineDataset d = read_dataset(lab_in);
            const PrefDataset p =
                label_dataset(d, lab_k, lab_pairs, TeacherConfig{lab_temp, lab_drop}, lab_seed);
            write_pref_dataset(p, lab_out);
            if (!lab_jsonl.empty()) export_pref_jsonl(p, lab_jsonl);
            std::size_t ties = 0;
            for (const auto& q : p.pairs) ties += q.meta.tie ? 1 : 0;
            print({{"out", lab_out}, {"pairs", p.pairs.size()}, {"k", p.k}, {"ties", ties}});
        } else if (*bc) {
            require_exists(bc_data, "dataset");
            const ExperimentConfig cfg = resolve_config(bc_o, true);
            const OfflineDataset d = read_dataset(bc_data);
            BcOutcome r = train_bc(cfg, d, [](std::size_t s, double l) {
                std::cerr << "bc step " << s << " loss " << l << '\n';
            });
            save_checkpoint(r.checkpoint, bc_out);
            if (!bc_loss_csv.empty()) {
                std::ofstream os = detail::open_text(bc_loss_csv);
                os << "step,loss\n";
                for (std::size_t i = 0; i < r.losses.size(); ++i)
                    os << i << ',' << detail::num(r.losses[i]) << '\n';
                detail::close_text(os, bc_loss_csv);
            }
            print({{"out", bc_out}, {"metadata", r.checkpoint.metadata}});
        } else if (*al) {
            for (const auto& [p, w] : {std::pair{al_data, "dataset"}, std::pair{al_prefs, "preference dataset"},
                                       std::pair{al_bc, "checkpoint"}})
                require_exists(p, w);
            ExperimentConfig cfg = resolve_config(al_o, true);
            cfg.align.loss.variant = variant_from_string(al_variant);
            const OfflineDataset d = read_dataset(al_data);
            const PrefDataset p = read_pref_dataset(al_prefs);
            const Checkpoint ref = load_checkpoint(al_bc);
            const std::size_t held = al_heldout.value_or(cfg.data.heldout_pairs);
            auto [train_pairs, heldout] = split_pairs(p.pairs, held);
            AlignOutcome r = train_align(cfg, ref, d, train_pairs, heldout, trace_evaluator(cfg),
                                         [](const LossLogRow& row) {
                                             std::cerr << "align step " << row.step << " loss "
                                                       << row.report.total << '\n';
                                         });
            save_checkpoint(r.checkpoint, al_out);
            if (!al_trace.empty()) save_trace(r.trace, al_trace);
            if (!al_log.empty()) {
                std::ofstream os = detail::open_text(al_log);
                write_loss_log_csv(r.log, r.trace.variant, os);
                detail::close_text(os, al_log);
            }
            const TraceRecord& last = r.trace.records.back();
            print({{"out", al_out},
                   {"variant", al_variant},
                   {"reference_hash", r.reference_hash_before},
                   {"reference_dmse", r.trace.reference_dmse},
                   {"final", {{"i_acc", last.i_acc}, {"e_winning", last.e_winning},
                              {"e_losing", last.e_losing}, {"u", last.u}}}});
        } else if (*ev) {
            require_exists(ev_ckpt, "checkpoint");
            const ExperimentConfig cfg = resolve_config(ev_o, true);
            const Checkpoint c = load_checkpoint(ev_ckpt);
            Rng rng(cfg.seed);
            const EvalResult r = evaluate(c.model, cfg, ev_n.value_or(cfg.eval.episodes), rng);
            json j = {{"env", to_string(cfg.env)}, {"n", r.n}, {"u", r.u}};
            if (cfg.env == EnvKind::toy) {
                j["ood_fraction"] = r.ood_fraction;
                j["mode_shares"] = r.mode_shares;
            }
            print(j);
        } else if (*rp) {
            const TrainTrace t = load_trace(rp_trace);
            json files = json::array();
            for (const auto& f : write_report(t, rp_out)) files.push_back(f.string());
            print({{"files", files}});
        } else if (*td) {
            ExperimentConfig cfg = resolve_config(td_o, true);
            if (cfg.env != EnvKind::toy) throw ConfigError("toy-demo needs the toy environment");
            const PipelineResult p = run_pipeline(
                cfg, {kAllVariants.begin(), kAllVariants.end()},
                [](const std::string& s) { std::cerr << s << '\n'; });
            write_pipeline_outputs(p, td_out);
            json summary = pipeline_summary(p);
            write_text_file(std::filesystem::path(td_out) / "summary.json", summary.dump(2) + "\n");
            print(summary);
        } else if (*gc) {
            const json r = gradcheck_report(gc_seed);
            print(r);
            if (!r["pass"].get<bool>()) return fail("gradcheck", "relative error above tolerance", 1);
        } else if (*cf) {
            print(to_json(ExperimentConfig::defaults_for(env_from_string(cf_env))));
        }
    } catch (const std::exception& e) {
        return fail(error_kind(e), e.what(), 1);
    }
    return 0;
}
