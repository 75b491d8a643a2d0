// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is non-zero if any selected criterion fails.
//
//   fkpd_acceptance            all criteria
//   fkpd_acceptance 1 3 8      a subset
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "fkpd/fkpd.hpp"
#include "test_util.hpp"

using namespace fkpd;
using namespace fkpd::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

std::string fmt(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void note(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

// ---------------------------------------------------------------- 1
Verdict gradient_suite() {
    Verdict v;
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed : {11u, 23u, 37u}) {
        const NoiseModel ref = small_model(seed, 1);
        const NoiseModel model = perturbed(ref, 0.2, seed + 1);
        v.require(model.parameter_count() <= 200, "net has more than 200 parameters");
        Rng data(seed + 2);
        const auto pairs = random_pairs(data, 6, 3, 1, 2);
        const SegmentBatch reg(std::vector<Segment>{random_segment(data, 3, 1, 2), random_segment(data, 3, 1, 2),
                                                    random_segment(data, 3, 1, 2)});
        AlignConfig fk;
        fk.variant = Variant::fkpd;
        fk.mu = 1.0;
        fk.b = 0.3;
        AlignConfig rk;
        rk.variant = Variant::rkpd;
        AlignConfig nr;
        nr.variant = Variant::nrpd;

        using LossFn = std::function<double(const NoiseModel&, std::vector<double>*)>;
        const std::map<std::string, LossFn> losses{
            {"bc",
             [&](const NoiseModel& m, std::vector<double>* g) {
                 Rng rng(seed);
                 LossResult r = bc_loss(m, reg, rng);
                 if (g) *g = r.gradient;
                 return r.value;
             }},
            {"fkpd",
             [&](const NoiseModel& m, std::vector<double>* g) {
                 Rng rng(seed);
                 AlignResult r = fkpd_loss(m, PairBatch(pairs), reg, fk, rng);
                 if (g) *g = r.gradient;
                 return r.report.total;
             }},
            {"rkpd",
             [&](const NoiseModel& m, std::vector<double>* g) {
                 Rng rng(seed);
                 AlignResult r = rkpd_loss(m, &ref, PairBatch(pairs), rk, rng);
                 if (g) *g = r.gradient;
                 return r.report.total;
             }},
            {"nrpd", [&](const NoiseModel& m, std::vector<double>* g) {
                 Rng rng(seed);
                 AlignResult r = nrpd_loss(m, PairBatch(pairs), nr, rng);
                 if (g) *g = r.gradient;
                 return r.report.total;
             }}};
        for (const auto& [name, loss] : losses) {
            const std::vector<double> theta = model.net().flatten();
            auto f = [&](std::span<const double> x) {
                NoiseModel m = model;
                m.net().assign(std::vector<double>(x.begin(), x.end()));
                return loss(m, nullptr);
            };
            std::vector<double> g;
            loss(model, &g);
            const double err = gradcheck(f, theta, g).relative_error;
            worst = std::max(worst, err);
            v.require(err <= 1e-4, name + " seed " + std::to_string(seed) + " rel err " + fmt(err, 8));
        }
    }
    const double secs = seconds_since(t0);
    v.require(secs < 120.0, "runtime over 2 minutes");
    v.detail << "worst relative error " << worst << " over 4 losses x 3 nets, " << fmt(secs, 2) << " s";
    return v;
}

// ---------------------------------------------------------------- 2
Verdict noising_moments() {
    Verdict v;
    const DiffusionSchedule sched = make_schedule(ScheduleParams{});
    const std::size_t T = sched.steps();
    const DenseArray x0({1, 2}, std::vector<double>{0.8, -1.3});
    const std::size_t n = 100000;
    Rng rng(2024);
    double worst_z = 0.0, worst_rel = 0.0;
    for (std::size_t t : {std::size_t{1}, T / 2, T}) {
        std::vector<std::vector<double>> cols(2, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const DenseArray x = forward_noise(x0, t, rng.normal_array({1, 2}), sched);
            cols[0][i] = x[0];
            cols[1][i] = x[1];
        }
        const double ab = sched.alpha_bar(t);
        for (std::size_t c = 0; c < 2; ++c) {
            const double z = std::abs(mean(cols[c]) - std::sqrt(ab) * x0[c]) / sterr(cols[c]);
            const double rel = std::abs(variance(cols[c]) / (1.0 - ab) - 1.0);
            worst_z = std::max(worst_z, z);
            worst_rel = std::max(worst_rel, rel);
            v.require(z <= 4.0, "mean at t=" + std::to_string(t));
            v.require(rel <= 0.02, "variance at t=" + std::to_string(t));
        }
    }
    v.detail << "t in {1," << T / 2 << "," << T << "}: worst mean z " << fmt(worst_z, 2)
             << ", worst variance rel err " << fmt(worst_rel, 4);
    return v;
}

// ---------------------------------------------------------------- 3
Verdict loss_identities() {
    Verdict v;
    AlignConfig nr;
    nr.variant = Variant::nrpd;
    nr.rho = 5.0;
    AlignConfig fk0 = nr;
    fk0.variant = Variant::fkpd;
    fk0.mu = 0.0;
    fk0.b = 0.0;
    AlignConfig rk = nr;
    rk.variant = Variant::rkpd;

    std::size_t checked = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng data(seed);
        const NoiseModel ref = small_model(seed, 1);
        const NoiseModel m = perturbed(ref, 0.3, seed + 50);
        const auto pairs = random_pairs(data, 8, 3, 1, 2);
        const SegmentBatch reg(std::vector<Segment>(4, random_segment(data, 3, 1, 2)));

        Rng a(seed * 7), b(seed * 7);
        const AlignResult f = fkpd_loss(m, PairBatch(pairs), reg, fk0, a);
        const AlignResult g = nrpd_loss(m, PairBatch(pairs), nr, b);
        v.require(f.report.total == g.report.total && f.gradient == g.gradient &&
                      f.report.arguments == g.report.arguments,
                  "FKPD(mu=0,b=0) != NRPD, seed " + std::to_string(seed));

        Rng c(seed);
        const AlignResult self = rkpd_loss(ref, &ref, PairBatch(pairs), rk, c);
        for (double x : self.report.arguments) v.require(x == 0.0, "RKPD argument not 0 at theta=ref");

        const PairNoise noise = draw_pair_noise(data, pairs.size(), 3, 2, ref.schedule().steps());
        const NoiseDraw reg_noise = draw_noise(data, reg.count(), 3, 2, ref.schedule().steps());
        std::vector<PreferencePair> sw = pairs;
        for (PreferencePair& p : sw) std::swap(p.winner, p.loser);
        const PairNoise sw_noise{noise.losers, noise.winners};
        AlignConfig fk = fk0;
        fk.mu = 1.0;
        fk.b = 0.2;
        auto terms = [&](const std::vector<PreferencePair>& p, const PairNoise& n, Variant var) {
            Tape tape;
            AlignTerms t;
            if (var == Variant::fkpd) t = fkpd_terms(tape, m, PairBatch(p), reg, fk, n, reg_noise);
            if (var == Variant::rkpd) t = rkpd_terms(tape, m, ref, PairBatch(p), rk, n);
            if (var == Variant::nrpd) t = nrpd_terms(tape, m, PairBatch(p), nr, n);
            return std::pair{tape.value(t.preference), tape.value(t.argument)};
        };
        for (Variant var : kAllVariants) {
            const auto [p1, a1] = terms(pairs, noise, var);
            const auto [p2, a2] = terms(sw, sw_noise, var);
            for (std::size_t i = 0; i < p1.size(); ++i) {
                v.require(p2[i] == -p1[i], "pair swap does not negate the preference term");
                if (var != Variant::fkpd) v.require(a2[i] == -a1[i], "pair swap does not negate the argument");
            }
        }

        Rng d(seed + 99);
        fk.rho = rk.rho = nr.rho = 0.5 + static_cast<double>(seed);
        for (double l : {fkpd_loss(m, PairBatch(pairs), reg, fk, d).report.total,
                         rkpd_loss(m, &ref, PairBatch(pairs), rk, d).report.total,
                         nrpd_loss(m, PairBatch(pairs), nr, d).report.total}) {
            v.require(l > -1.0 && l < 0.0, "loss outside (-1, 0): " + fmt(l, 6));
        }
        fk.rho = rk.rho = nr.rho = 5.0;
        ++checked;
    }
    v.detail << checked << " seeded nets: bitwise FKPD/NRPD reduction, zero RKPD argument at the reference, "
             << "exact swap antisymmetry, range (-1, 0)";
    return v;
}

// ---------------------------------------------------------------- 4
Verdict closed_form() {
    Verdict v;
    Rng rng(4);
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t m = 2 + static_cast<std::size_t>(inst % 4);
        std::vector<double> r(m);
        for (double& x : r) x = rng.uniform(-1.0, 1.0);
        const double rho = rng.uniform(0.3, 2.0);
        const std::vector<double> closed = max_entropy_policy(r, rho);
        const std::vector<double> numeric = numerical_maximizer(r, rho);
        for (std::size_t i = 0; i < m; ++i) worst = std::max(worst, std::abs(closed[i] - numeric[i]));
    }
    v.require(worst <= 1e-6, "max deviation " + std::to_string(worst));
    v.detail << "20 instances, m in 2..5: max |softmax - maximizer| = " << worst;
    return v;
}

// ---------------------------------------------------------------- 5, 6
std::map<std::uint64_t, PipelineResult> g_toy;
std::map<std::uint64_t, double> g_toy_secs;

const PipelineResult& toy_run(std::uint64_t seed) {
    auto it = g_toy.find(seed);
    if (it != g_toy.end()) return it->second;
    ExperimentConfig cfg = ExperimentConfig::toy_defaults();
    cfg.seed = seed;
    note("toy pipeline, seed " + std::to_string(seed));
    const auto t0 = Clock::now();
    PipelineResult p = run_pipeline(cfg, {kAllVariants.begin(), kAllVariants.end()}, note);
    g_toy_secs[seed] = seconds_since(t0);
    return g_toy.emplace(seed, std::move(p)).first->second;
}

Verdict toy_reproduction() {
    Verdict v;
    const PipelineResult& p = toy_run(1);
    const double secs = g_toy_secs[1];
    const EvalResult& bc = p.bc_eval;
    std::size_t covered = 0;
    for (double s : bc.mode_shares) covered += s >= 0.05 ? 1 : 0;
    const EvalResult& fk = p.run(Variant::fkpd).eval;
    const EvalResult& rk = p.run(Variant::rkpd).eval;
    const EvalResult& nr = p.run(Variant::nrpd).eval;
    const double gain = (fk.u - bc.u) / std::abs(bc.u);
    v.require(bc.ood_fraction <= 0.10, "BC ood_fraction > 0.10");
    v.require(covered >= 4, "BC covers fewer than 4 modes");
    v.require(gain >= 0.20, "FKPD reward gain below 20%");
    v.require(fk.ood_fraction <= 0.10, "FKPD ood_fraction > 0.10");
    v.require(rk.ood_fraction > fk.ood_fraction, "RKPD ood_fraction not above FKPD");
    v.require(nr.ood_fraction > 0.30, "NRPD ood_fraction <= 0.30");
    v.require(secs < 15 * 60, "toy run over 15 minutes");
    v.detail << "BC ood " << fmt(bc.ood_fraction) << " modes " << covered << "/5 reward " << fmt(bc.u)
             << "; FKPD reward " << fmt(fk.u) << " (+" << fmt(100 * gain, 1) << "%) ood "
             << fmt(fk.ood_fraction) << "; RKPD ood " << fmt(rk.ood_fraction) << "; NRPD ood "
             << fmt(nr.ood_fraction) << "; " << fmt(secs, 0) << " s";
    return v;
}

Verdict diagnostic_traces() {
    Verdict v;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const PipelineResult& p = toy_run(seed);
        const TrainTrace& nr = p.run(Variant::nrpd).align.trace;
        const TrainTrace& fk = p.run(Variant::fkpd).align.trace;
        const double ref = nr.reference_dmse;
        const TraceRecord& end = nr.records.back();
        const std::string s = " (seed " + std::to_string(seed) + ")";
        v.require(end.e_winning > 2.0 * ref && end.e_losing > 2.0 * ref, "NRPD D-MSE not above 2x reference" + s);
        v.require(end.i_acc > 0.9, "NRPD I_acc not above 0.9" + s);
        double fk_acc = 0.0, fk_e = 0.0;
        for (const TraceRecord& r : fk.records) {
            fk_acc = std::max(fk_acc, r.i_acc);
            fk_e = std::max({fk_e, r.e_winning, r.e_losing});
        }
        v.require(fk_acc > 0.6, "FKPD I_acc never above 0.6" + s);
        v.require(fk_e <= 1.5 * fk.reference_dmse, "FKPD D-MSE above 1.5x reference" + s);
        v.require(fk.records.back().i_acc > fk.records.front().i_acc, "FKPD final I_acc not above initial" + s);
        v.detail << "seed " << seed << ": NRPD E " << fmt(end.e_winning / ref, 1) << "x/"
                 << fmt(end.e_losing / ref, 1) << "x I_acc " << fmt(end.i_acc, 2) << ", FKPD max E "
                 << fmt(fk_e / fk.reference_dmse, 2) << "x max I_acc " << fmt(fk_acc, 2) << "; ";
    }
    return v;
}

// ---------------------------------------------------------------- 7
Verdict point_mass_table() {
    Verdict v;
    const auto t0 = Clock::now();
    double sum_fk = 0.0, sum_rk = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        ExperimentConfig cfg = ExperimentConfig::point_mass_defaults();
        cfg.seed = seed;
        note("point-mass pipeline, seed " + std::to_string(seed));
        const PipelineResult p = run_pipeline(cfg, {kAllVariants.begin(), kAllVariants.end()}, note);
        const double fk = p.improvement(Variant::fkpd);
        const double rk = p.improvement(Variant::rkpd);
        const double nr = p.improvement(Variant::nrpd);
        sum_fk += fk;
        sum_rk += rk;
        const std::string s = " (seed " + std::to_string(seed) + ")";
        v.require(fk > 0.0, "F_im(FKPD) <= 0" + s);
        v.require(nr < 0.0, "F_im(NRPD) >= 0" + s);
        const TrainTrace& ft = p.run(Variant::fkpd).align.trace;
        v.require(ft.records.back().i_acc > ft.records.front().i_acc, "FKPD final I_acc not above initial" + s);
        v.detail << "seed " << seed << ": U0 " << fmt(p.bc_eval.u) << " F_im fkpd " << fmt(fk) << " rkpd "
                 << fmt(rk) << " nrpd " << fmt(nr) << "; ";
    }
    const double secs = seconds_since(t0);
    v.require(sum_fk >= sum_rk, "mean F_im(FKPD) < mean F_im(RKPD)");
    v.require(secs < 30 * 60, "over 30 minutes");
    v.detail << "mean fkpd " << fmt(sum_fk / 3) << " rkpd " << fmt(sum_rk / 3) << "; " << fmt(secs, 0) << " s";
    return v;
}

// ---------------------------------------------------------------- 8
Verdict teacher_statistics() {
    Verdict v;
    Rng rng(8);
    const std::size_t n = 100000;
    double worst_z = 0.0;
    for (double dr : {-2.0, -0.5, 0.25, 1.0, 3.0}) {
        std::size_t first = 0;
        for (std::size_t i = 0; i < n; ++i) first += teacher_decide(dr, 0.0, 1.0, rng).first_wins ? 1 : 0;
        const double p = 1.0 / (1.0 + std::exp(-dr));
        const double z = std::abs(static_cast<double>(first) / n - p) / std::sqrt(p * (1 - p) / n);
        worst_z = std::max(worst_z, z);
        v.require(z <= 3.0, "frequency at delta r = " + fmt(dr, 2));
    }

    ExperimentConfig cfg = ExperimentConfig::point_mass_defaults();
    cfg.data.episodes = 200;
    const OfflineDataset data = generate_dataset(cfg);
    const PrefDataset a = label_dataset(data, cfg.data.k, 2000, TeacherConfig{}, 5);
    const PrefDataset b = label_dataset(data, cfg.data.k, 2000, TeacherConfig{}, 5);
    v.require(a == b, "deterministic teacher differs on replay");
    const std::vector<std::size_t> bad = audit_labels(data, a.pairs);
    v.require(bad.empty(), std::to_string(bad.size()) + " labels disagree with reward sums");
    v.detail << "noisy teacher worst z " << fmt(worst_z, 2) << " over 5 reward gaps x 1e5 labels; "
             << "2000 deterministic labels replay identically and audit clean";
    return v;
}

// ---------------------------------------------------------------- 9
std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

Verdict determinism() {
    Verdict v;
    const auto dir = std::filesystem::temp_directory_path() / "fkpd_acceptance";
    std::filesystem::create_directories(dir);
    for (EnvKind env : {EnvKind::toy, EnvKind::point_mass}) {
        ExperimentConfig cfg = ExperimentConfig::defaults_for(env);
        cfg.seed = 9;
        cfg.data.toy_samples = 2000;
        cfg.data.episodes = 200;
        cfg.data.pairs = 400;
        cfg.data.heldout_pairs = 100;
        cfg.bc.steps = 600;
        cfg.bc.loss_threshold = 2.0;
        cfg.align.steps = 60;
        cfg.align.eval_every = 20;
        cfg.eval.episodes = 100;
        cfg.eval.trace_episodes = 20;
        const std::string name = to_string(env);
        note("determinism, " + name);
        const PipelineResult p = run_pipeline(cfg);
        const PipelineResult q = run_pipeline(cfg);
        v.require(p.bc.checkpoint == q.bc.checkpoint, name + " BC checkpoint differs");
        for (Variant var : kAllVariants) {
            v.require(p.run(var).align.checkpoint == q.run(var).align.checkpoint,
                      name + " " + to_string(var) + " checkpoint differs");
            v.require(p.run(var).align.trace == q.run(var).align.trace,
                      name + " " + to_string(var) + " trace differs");
        }

        const auto ck = dir / (name + ".ckpt"), ck2 = dir / (name + "2.ckpt");
        const Checkpoint& c = p.run(Variant::fkpd).align.checkpoint;
        save_checkpoint(c, ck.string());
        const Checkpoint back = load_checkpoint(ck.string());
        save_checkpoint(back, ck2.string());
        v.require(back == c, name + " checkpoint round trip");
        v.require(slurp(ck) == slurp(ck2), name + " checkpoint bytes differ after re-save");

        const auto ds = dir / (name + ".bin");
        write_dataset(p.data, ds.string());
        v.require(read_dataset(ds.string()) == p.data, name + " dataset round trip");

        const auto pf = dir / (name + ".prefs");
        write_pref_dataset(p.prefs, pf.string());
        v.require(read_pref_dataset(pf.string()) == p.prefs, name + " preference dataset round trip");
    }
    std::filesystem::remove_all(dir);
    v.detail << "toy and point-mass pipelines rerun bit-identically; checkpoint, dataset and "
                "preference files round-trip exactly";
    return v;
}

} // namespace

int main(int argc, char** argv) {
    const std::map<int, std::pair<std::string, std::function<Verdict()>>> criteria{
        {1, {"gradient suite", gradient_suite}},
        {2, {"noising moments", noising_moments}},
        {3, {"loss identities", loss_identities}},
        {4, {"closed-form policy", closed_form}},
        {5, {"toy reproduction", toy_reproduction}},
        {6, {"diagnostic traces", diagnostic_traces}},
        {7, {"point-mass improvement factors", point_mass_table}},
        {8, {"teacher statistics", teacher_statistics}},
        {9, {"determinism and persistence", determinism}},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    if (selected.empty())
        for (const auto& [id, c] : criteria) selected.insert(id);

    int failures = 0;
    for (int id : selected) {
        auto it = criteria.find(id);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion " << id << '\n';
            return 2;
        }
        std::cerr << "criterion " << id << ": " << it->second.first << std::endl;
        bool pass = false;
        std::string detail;
        try {
            Verdict v = it->second.second();
            pass = v.pass;
            detail = v.detail.str();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        failures += pass ? 0 : 1;
        std::cout << "criterion " << id << " " << (pass ? "PASS" : "FAIL") << "  " << it->second.first
                  << ": " << detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
