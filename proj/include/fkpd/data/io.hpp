// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkpd/data/binary_io.hpp"
#include "fkpd/data/dataset.hpp"
#include "fkpd/data/preference_pair.hpp"
#include "fkpd/data/teacher.hpp"

namespace fkpd {

inline constexpr char kDatasetMagic[9] = "FKPDDSET";
inline constexpr char kPrefMagic[9] = "FKPDPREF";
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kPrefVersion = 1;

/// Preference dataset D_pref as stored on disk.
struct PrefDataset {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::size_t k = 1;
    std::uint64_t seed = 0;
    TeacherConfig teacher;
    nlohmann::json env_spec = nlohmann::json::object();
    std::vector<PreferencePair> pairs;

    bool operator==(const PrefDataset&) const = default;
};

// -- offline dataset -------------------------------------------------------

inline void write_dataset(const OfflineDataset& data, const std::string& path) {
    data.validate();
    nlohmann::json header = {{"format", "fkpd-dataset"},
                             {"state_dim", data.state_dim},
                             {"action_dim", data.action_dim},
                             {"episodes", data.episodes.size()},
                             {"seed", data.seed},
                             {"env", data.env_spec}};
    std::ofstream os = binio::open_out(path);
    binio::write_preamble(os, kDatasetMagic, kDatasetVersion, header);
    for (const Trajectory& e : data.episodes) {
        binio::write_u64(os, e.length());
        binio::write_f64s(os, e.states.values());
        binio::write_f64s(os, e.actions.values());
        binio::write_f64s(os, e.rewards);
    }
    binio::finish_write(os, path);
}

inline OfflineDataset read_dataset(const std::string& path) {
    std::ifstream is = binio::open_in(path);
    const nlohmann::json h = binio::read_preamble(is, kDatasetMagic, kDatasetVersion);
    OfflineDataset d;
    try {
        d.state_dim = h.at("state_dim").get<std::size_t>();
        d.action_dim = h.at("action_dim").get<std::size_t>();
        d.seed = h.at("seed").get<std::uint64_t>();
        d.env_spec = h.at("env");
        const auto n = h.at("episodes").get<std::size_t>();
        d.episodes.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            Trajectory e;
            const std::uint64_t len = binio::read_u64(is);
            e.states = binio::read_matrix(is, len, d.state_dim);
            e.actions = binio::read_matrix(is, len, d.action_dim);
            e.rewards.resize(len);
            binio::read_f64s(is, e.rewards);
            d.episodes.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("dataset '" + path + "': bad header field: " + e.what());
    }
    return d;
}

// -- preference dataset ----------------------------------------------------

namespace detail {

inline nlohmann::json pref_header(const PrefDataset& d) {
    return {{"format", "fkpd-pref"},
            {"state_dim", d.state_dim},
            {"action_dim", d.action_dim},
            {"k", d.k},
            {"count", d.pairs.size()},
            {"seed", d.seed},
            {"teacher", {{"noise_temp", d.teacher.noise_temp}, {"drop_ties", d.teacher.drop_ties}}},
            {"env", d.env_spec}};
}

inline void apply_pref_header(PrefDataset& d, const nlohmann::json& h) {
    d.state_dim = h.at("state_dim").get<std::size_t>();
    d.action_dim = h.at("action_dim").get<std::size_t>();
    d.k = h.at("k").get<std::size_t>();
    d.seed = h.at("seed").get<std::uint64_t>();
    d.teacher.noise_temp = h.at("teacher").at("noise_temp").get<double>();
    d.teacher.drop_ties = h.at("teacher").at("drop_ties").get<bool>();
    d.env_spec = h.at("env");
}

inline void check_pair_shapes(const PrefDataset& d, const PreferencePair& p) {
    for (const Segment* s : {&p.winner, &p.loser}) {
        if (s->k() != d.k || s->state_dim() != d.state_dim || s->action_dim() != d.action_dim)
            throw ShapeError("preference dataset: pair does not match header dimensions");
        if (s->reward_sum) throw ConfigError("preference dataset: segments must not carry rewards");
    }
}

} // namespace detail

inline void write_pref_dataset(const PrefDataset& d, const std::string& path) {
    std::ofstream os = binio::open_out(path);
    binio::write_preamble(os, kPrefMagic, kPrefVersion, detail::pref_header(d));
    for (const PreferencePair& p : d.pairs) {
        detail::check_pair_shapes(d, p);
        binio::write_f64s(os, p.winner.states.values());
        binio::write_f64s(os, p.winner.actions.values());
        binio::write_f64s(os, p.loser.states.values());
        binio::write_f64s(os, p.loser.actions.values());
        binio::write_u8(os, p.meta.tie ? 1 : 0);
        binio::write_u8(os, p.meta.teacher == "script-noisy" ? 1 : 0);
        binio::write_u64(os, p.meta.winner_source.episode);
        binio::write_u64(os, p.meta.winner_source.offset);
        binio::write_u64(os, p.meta.loser_source.episode);
        binio::write_u64(os, p.meta.loser_source.offset);
    }
    binio::finish_write(os, path);
}

inline PrefDataset read_pref_dataset(const std::string& path) {
    std::ifstream is = binio::open_in(path);
    const nlohmann::json h = binio::read_preamble(is, kPrefMagic, kPrefVersion);
    PrefDataset d;
    std::size_t count = 0;
    try {
        detail::apply_pref_header(d, h);
        count = h.at("count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("preference dataset '" + path + "': bad header field: " + e.what());
    }
    d.pairs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        PreferencePair p;
        DenseArray ws = binio::read_matrix(is, d.k, d.state_dim);
        DenseArray wa = binio::read_matrix(is, d.k, d.action_dim);
        DenseArray ls = binio::read_matrix(is, d.k, d.state_dim);
        DenseArray la = binio::read_matrix(is, d.k, d.action_dim);
        p.winner = Segment(std::move(ws), std::move(wa));
        p.loser = Segment(std::move(ls), std::move(la));
        p.meta.tie = binio::read_u8(is) != 0;
        p.meta.teacher = binio::read_u8(is) != 0 ? "script-noisy" : "script";
        p.meta.winner_source.episode = binio::read_u64(is);
        p.meta.winner_source.offset = binio::read_u64(is);
        p.meta.loser_source.episode = binio::read_u64(is);
        p.meta.loser_source.offset = binio::read_u64(is);
        d.pairs.push_back(std::move(p));
    }
    return d;
}

// -- JSON-lines export ------------------------------------------------------
//
// First line: the header object. Then one object per pair. Doubles are
// printed in shortest round-trip form, so import(export(d)) == d.

namespace detail {

inline nlohmann::json segment_json(const Segment& s) {
    return {{"states", s.states.raw()}, {"actions", s.actions.raw()}};
}

inline Segment segment_from_json(const nlohmann::json& j, std::size_t k, std::size_t sd,
                                 std::size_t ad) {
    return Segment(DenseArray({k, sd}, j.at("states").get<std::vector<double>>()),
                   DenseArray({k, ad}, j.at("actions").get<std::vector<double>>()));
}

} // namespace detail

inline void export_pref_jsonl(const PrefDataset& d, std::ostream& os) {
    os << detail::pref_header(d).dump() << '\n';
    for (const PreferencePair& p : d.pairs) {
        nlohmann::json j = {
            {"winner", detail::segment_json(p.winner)},
            {"loser", detail::segment_json(p.loser)},
            {"tie", p.meta.tie},
            {"teacher", p.meta.teacher},
            {"winner_source", {p.meta.winner_source.episode, p.meta.winner_source.offset}},
            {"loser_source", {p.meta.loser_source.episode, p.meta.loser_source.offset}}};
        os << j.dump() << '\n';
    }
}

inline void export_pref_jsonl(const PrefDataset& d, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    export_pref_jsonl(d, os);
    binio::finish_write(os, path);
}

inline PrefDataset import_pref_jsonl(std::istream& is) {
    PrefDataset d;
    std::string line;
    if (!std::getline(is, line)) throw IoError("jsonl: missing header line");
    try {
        detail::apply_pref_header(d, nlohmann::json::parse(line));
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const nlohmann::json j = nlohmann::json::parse(line);
            PreferencePair p;
            p.winner = detail::segment_from_json(j.at("winner"), d.k, d.state_dim, d.action_dim);
            p.loser = detail::segment_from_json(j.at("loser"), d.k, d.state_dim, d.action_dim);
            p.meta.tie = j.at("tie").get<bool>();
            p.meta.teacher = j.at("teacher").get<std::string>();
            p.meta.winner_source = {j.at("winner_source")[0].get<std::size_t>(),
                                    j.at("winner_source")[1].get<std::size_t>()};
            p.meta.loser_source = {j.at("loser_source")[0].get<std::size_t>(),
                                   j.at("loser_source")[1].get<std::size_t>()};
            d.pairs.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("jsonl: ") + e.what());
    }
    return d;
}

} // namespace fkpd
