// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fkpd/data/teacher.hpp"
#include "fkpd/diffusion/noise_model.hpp"
#include "fkpd/diffusion/schedule.hpp"
#include "fkpd/envs/mixture.hpp"
#include "fkpd/envs/point_mass.hpp"
#include "fkpd/losses/alignment.hpp"
#include "fkpd/numeric/adam.hpp"

namespace fkpd {

enum class EnvKind { toy, point_mass };

inline std::string to_string(EnvKind e) { return e == EnvKind::toy ? "toy" : "point_mass"; }

inline EnvKind env_from_string(const std::string& s) {
    if (s == "toy") return EnvKind::toy;
    if (s == "point_mass" || s == "point-mass") return EnvKind::point_mass;
    throw ConfigError("unknown env '" + s + "' (expected toy or point_mass)");
}

struct DataConfig {
    std::size_t toy_samples = 10000; // size of D for the toy task
    std::size_t episodes = 2000;     // size of D for the point-mass task
    std::size_t k = 1;               // segment length
    std::size_t pairs = 5000;
    std::size_t heldout_pairs = 1000;
    TeacherConfig teacher;
};

struct BcConfig {
    std::size_t steps = 20000;
    std::size_t batch = 256;
    double lr = 1e-3;
    /// Mean loss over the last 500 steps must end below this.
    double loss_threshold = 1.0;
    std::size_t log_every = 100;
    std::size_t reference_segments = 2048;
    std::size_t reference_draws = 4;
};

struct AlignPhaseConfig {
    AlignConfig loss;
    /// Set b to mu times the BC reference D-MSE at alignment start.
    bool auto_bias = true;
    std::size_t steps = 1000;
    double lr = 3e-4;
    std::size_t eval_every = 100;
    std::size_t log_every = 10;
};

struct EvalConfig {
    std::size_t episodes = 1000;       // final U0/U1 evaluations
    std::size_t trace_episodes = 200;  // U inside the training trace
    double ood_radius_mult = 3.0;
};

/// Everything a run needs; (config, seed) determines every output bit.
struct ExperimentConfig {
    EnvKind env = EnvKind::toy;
    std::uint64_t seed = 0;
    ScheduleParams schedule;
    NoiseModelConfig network;
    DataConfig data;
    BcConfig bc;
    AlignPhaseConfig align;
    EvalConfig eval;
    MixtureSpec mixture = default_toy_mixture();
    PointMassEnv point_mass;
    ScriptedBehavior behavior;

    std::size_t state_dim() const { return env == EnvKind::toy ? 0 : 2; }
    std::size_t action_dim() const { return 2; }

    NoiseModelConfig model_config() const {
        NoiseModelConfig m = network;
        m.state_dim = state_dim();
        m.action_dim = action_dim();
        return m;
    }

    ActionBox action_box() const {
        return env == EnvKind::toy ? ActionBox{}
                                   : ActionBox::symmetric(2, point_mass.max_action);
    }

    /// Defaults for the toy generative task.
    static ExperimentConfig toy_defaults() {
        ExperimentConfig c;
        c.env = EnvKind::toy;
        c.data.k = 1;
        c.align.loss.mu = 2.0;
        return c;
    }

    /// Defaults for the point-mass goal-reaching task.
    static ExperimentConfig point_mass_defaults() {
        ExperimentConfig c;
        c.env = EnvKind::point_mass;
        c.data.k = 16;
        c.data.pairs = 5000;
        c.data.heldout_pairs = 500;
        c.align.loss.pref_batch = 32;
        c.align.loss.reg_batch = 32;
        c.align.steps = 3000;
        c.align.lr = 2e-3;
        c.align.eval_every = 300;
        return c;
    }

    static ExperimentConfig defaults_for(EnvKind e) {
        return e == EnvKind::toy ? toy_defaults() : point_mass_defaults();
    }
};

// -- JSON ------------------------------------------------------------------

inline nlohmann::json mixture_to_json(const MixtureSpec& m) {
    nlohmann::json means = nlohmann::json::array();
    for (const Point2& p : m.means) means.push_back({p[0], p[1]});
    return {{"means", means}, {"stddev", m.stddev}, {"weights", m.weights}};
}

inline MixtureSpec mixture_from_json(const nlohmann::json& j) {
    MixtureSpec m;
    for (const auto& p : j.at("means")) m.means.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    m.stddev = j.at("stddev").get<double>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.validate();
    return m;
}

inline nlohmann::json point_mass_to_json(const PointMassEnv& e, const ScriptedBehavior& b) {
    return {{"half_size", e.half_size},
            {"goal", {e.goal[0], e.goal[1]}},
            {"max_action", e.max_action},
            {"horizon", e.horizon},
            {"success_fraction", e.success_fraction},
            {"behavior",
             {{"decoy", {b.decoy[0], b.decoy[1]}},
              {"skill_low", b.skill_low},
              {"skill_high", b.skill_high},
              {"noise", b.noise}}}};
}

inline void point_mass_from_json(const nlohmann::json& j, PointMassEnv& e, ScriptedBehavior& b) {
    e.half_size = j.value("half_size", e.half_size);
    if (j.contains("goal")) e.goal = {j["goal"][0].get<double>(), j["goal"][1].get<double>()};
    e.max_action = j.value("max_action", e.max_action);
    e.horizon = j.value("horizon", e.horizon);
    e.success_fraction = j.value("success_fraction", e.success_fraction);
    if (j.contains("behavior")) {
        const auto& bj = j["behavior"];
        if (bj.contains("decoy")) b.decoy = {bj["decoy"][0].get<double>(), bj["decoy"][1].get<double>()};
        b.skill_low = bj.value("skill_low", b.skill_low);
        b.skill_high = bj.value("skill_high", b.skill_high);
        b.noise = bj.value("noise", b.noise);
    }
    e.validate();
}

/// Environment description embedded in dataset and checkpoint headers.
inline nlohmann::json env_spec_json(const ExperimentConfig& c) {
    if (c.env == EnvKind::toy) return {{"kind", "toy"}, {"mixture", mixture_to_json(c.mixture)}};
    return {{"kind", "point_mass"}, {"point_mass", point_mass_to_json(c.point_mass, c.behavior)}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["env"] = to_string(c.env);
    j["seed"] = c.seed;
    j["schedule"] = {{"steps", c.schedule.steps},
                     {"beta_start", c.schedule.beta_start},
                     {"beta_end", c.schedule.beta_end}};
    j["network"] = {{"hidden", c.network.hidden}, {"time_embed_dim", c.network.time_embed_dim}};
    j["data"] = {{"toy_samples", c.data.toy_samples},
                 {"episodes", c.data.episodes},
                 {"k", c.data.k},
                 {"pairs", c.data.pairs},
                 {"heldout_pairs", c.data.heldout_pairs},
                 {"noise_temp", c.data.teacher.noise_temp},
                 {"drop_ties", c.data.teacher.drop_ties}};
    j["bc"] = {{"steps", c.bc.steps},
               {"batch", c.bc.batch},
               {"lr", c.bc.lr},
               {"loss_threshold", c.bc.loss_threshold},
               {"log_every", c.bc.log_every},
               {"reference_segments", c.bc.reference_segments},
               {"reference_draws", c.bc.reference_draws}};
    j["align"] = {{"variant", to_string(c.align.loss.variant)},
                  {"rho", c.align.loss.rho},
                  {"mu", c.align.loss.mu},
                  {"b", c.align.loss.b},
                  {"auto_bias", c.align.auto_bias},
                  {"pref_batch", c.align.loss.pref_batch},
                  {"reg_batch", c.align.loss.reg_batch},
                  {"n_noise_draws", c.align.loss.n_noise_draws},
                  {"steps", c.align.steps},
                  {"lr", c.align.lr},
                  {"eval_every", c.align.eval_every},
                  {"log_every", c.align.log_every}};
    j["eval"] = {{"episodes", c.eval.episodes},
                 {"trace_episodes", c.eval.trace_episodes},
                 {"ood_radius_mult", c.eval.ood_radius_mult}};
    j["mixture"] = mixture_to_json(c.mixture);
    j["point_mass"] = point_mass_to_json(c.point_mass, c.behavior);
    return j;
}

/// Reads a config; every missing field keeps the default of the selected env.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    try {
        ExperimentConfig c = ExperimentConfig::defaults_for(env_from_string(j.value("env", "toy")));
        c.seed = j.value("seed", c.seed);
        if (j.contains("schedule")) {
            const auto& s = j["schedule"];
            c.schedule.steps = s.value("steps", c.schedule.steps);
            c.schedule.beta_start = s.value("beta_start", c.schedule.beta_start);
            c.schedule.beta_end = s.value("beta_end", c.schedule.beta_end);
        }
        if (j.contains("network")) {
            const auto& n = j["network"];
            c.network.hidden = n.value("hidden", c.network.hidden);
            c.network.time_embed_dim = n.value("time_embed_dim", c.network.time_embed_dim);
        }
        if (j.contains("data")) {
            const auto& d = j["data"];
            c.data.toy_samples = d.value("toy_samples", c.data.toy_samples);
            c.data.episodes = d.value("episodes", c.data.episodes);
            c.data.k = d.value("k", c.data.k);
            c.data.pairs = d.value("pairs", c.data.pairs);
            c.data.heldout_pairs = d.value("heldout_pairs", c.data.heldout_pairs);
            c.data.teacher.noise_temp = d.value("noise_temp", c.data.teacher.noise_temp);
            c.data.teacher.drop_ties = d.value("drop_ties", c.data.teacher.drop_ties);
        }
        if (j.contains("bc")) {
            const auto& b = j["bc"];
            c.bc.steps = b.value("steps", c.bc.steps);
            c.bc.batch = b.value("batch", c.bc.batch);
            c.bc.lr = b.value("lr", c.bc.lr);
            c.bc.loss_threshold = b.value("loss_threshold", c.bc.loss_threshold);
            c.bc.log_every = b.value("log_every", c.bc.log_every);
            c.bc.reference_segments = b.value("reference_segments", c.bc.reference_segments);
            c.bc.reference_draws = b.value("reference_draws", c.bc.reference_draws);
        }
        if (j.contains("align")) {
            const auto& a = j["align"];
            if (a.contains("variant")) c.align.loss.variant = variant_from_string(a["variant"]);
            c.align.loss.rho = a.value("rho", c.align.loss.rho);
            c.align.loss.mu = a.value("mu", c.align.loss.mu);
            c.align.loss.b = a.value("b", c.align.loss.b);
            c.align.auto_bias = a.value("auto_bias", c.align.auto_bias);
            c.align.loss.pref_batch = a.value("pref_batch", c.align.loss.pref_batch);
            c.align.loss.reg_batch = a.value("reg_batch", c.align.loss.reg_batch);
            c.align.loss.n_noise_draws = a.value("n_noise_draws", c.align.loss.n_noise_draws);
            c.align.steps = a.value("steps", c.align.steps);
            c.align.lr = a.value("lr", c.align.lr);
            c.align.eval_every = a.value("eval_every", c.align.eval_every);
            c.align.log_every = a.value("log_every", c.align.log_every);
        }
        if (j.contains("eval")) {
            const auto& e = j["eval"];
            c.eval.episodes = e.value("episodes", c.eval.episodes);
            c.eval.trace_episodes = e.value("trace_episodes", c.eval.trace_episodes);
            c.eval.ood_radius_mult = e.value("ood_radius_mult", c.eval.ood_radius_mult);
        }
        if (j.contains("mixture")) c.mixture = mixture_from_json(j["mixture"]);
        if (j.contains("point_mass")) point_mass_from_json(j["point_mass"], c.point_mass, c.behavior);
        c.align.loss.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path + "'");
    try {
        return config_from_json(nlohmann::json::parse(is, nullptr, true, true));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

} // namespace fkpd
