// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkpd/data/binary_io.hpp"
#include "fkpd/diffusion/noise_model.hpp"

namespace fkpd {

inline constexpr char kCheckpointMagic[9] = "FKPDCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A noise model plus free-form metadata (training phase, seed, reference
/// D-MSE, ...). The header records everything needed to rebuild the model,
/// including the exact beta table.
struct Checkpoint {
    NoiseModel model;
    nlohmann::json metadata = nlohmann::json::object();

    bool operator==(const Checkpoint&) const = default;
};

inline nlohmann::json checkpoint_header(const Checkpoint& c) {
    const NoiseModel& m = c.model;
    return {{"format", "fkpd-checkpoint"},
            {"widths", m.net().widths()},
            {"activation", to_string(m.net().hidden_activation())},
            {"state_dim", m.state_dim()},
            {"action_dim", m.action_dim()},
            {"time_embed_dim", m.time_embed_dim()},
            {"schedule", {{"steps", m.schedule().steps()}, {"betas", m.schedule().betas()}}},
            {"action_box", {{"low", m.action_box().low}, {"high", m.action_box().high}}},
            {"parameter_count", m.parameter_count()},
            {"metadata", c.metadata}};
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
    binio::write_preamble(os, kCheckpointMagic, kCheckpointVersion, checkpoint_header(c));
    const std::vector<double> flat = c.model.net().flatten();
    binio::write_u64(os, flat.size());
    binio::write_f64s(os, flat);
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream os = binio::open_out(path);
    write_checkpoint(os, c);
    binio::finish_write(os, path);
}

inline Checkpoint read_checkpoint(std::istream& is) {
    const nlohmann::json h = binio::read_preamble(is, kCheckpointMagic, kCheckpointVersion);
    Checkpoint c;
    try {
        const auto widths = h.at("widths").get<std::vector<std::size_t>>();
        MlpParams net =
            MlpParams::zeros(widths, activation_from_string(h.at("activation").get<std::string>()));
        DiffusionSchedule sched(h.at("schedule").at("betas").get<std::vector<double>>());
        if (sched.steps() != h.at("schedule").at("steps").get<std::size_t>())
            throw IoError("checkpoint: schedule length disagrees with its step count");
        ActionBox box{h.at("action_box").at("low").get<std::vector<double>>(),
                      h.at("action_box").at("high").get<std::vector<double>>()};
        const std::uint64_t n = binio::read_u64(is);
        if (n != net.parameter_count() || n != h.at("parameter_count").get<std::size_t>())
            throw IoError("checkpoint: parameter count does not match the layer widths");
        std::vector<double> flat(n);
        binio::read_f64s(is, flat);
        net.assign(flat);
        c.model = NoiseModel(std::move(net), h.at("state_dim").get<std::size_t>(),
                             h.at("action_dim").get<std::size_t>(),
                             h.at("time_embed_dim").get<std::size_t>(), std::move(sched),
                             std::move(box));
        c.metadata = h.at("metadata");
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: bad header field: ") + e.what());
    }
    return c;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is = binio::open_in(path);
    return read_checkpoint(is);
}

/// FNV-1a over the raw bytes of the flattened parameters.
inline std::uint64_t parameter_hash(const MlpParams& p) {
    std::uint64_t h = 1469598103934665603ULL;
    for (double v : p.flatten()) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

} // namespace fkpd
