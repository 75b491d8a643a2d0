// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkpd/numeric/dense_array.hpp"

// Little helpers for the versioned binary containers used by checkpoints and
// datasets:
//
//   8-byte magic | u32 version | u64 header length | JSON header | payload
//
// Numbers are written in host byte order (little-endian on every supported
// target); doubles are copied bit for bit.
namespace fkpd::binio {

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64s(std::ostream& os, std::span<const double> v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void write_preamble(std::ostream& os, const char (&magic)[9], std::uint32_t version,
                           const nlohmann::json& header) {
    os.write(magic, 8);
    write_u32(os, version);
    const std::string text = header.dump();
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline void check(std::istream& is, const char* what) {
    if (!is) throw IoError(std::string("truncated or unreadable file while reading ") + what);
}

inline std::uint8_t read_u8(std::istream& is) {
    const int c = is.get();
    check(is, "u8");
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    check(is, "u32");
    return v;
}

inline std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    check(is, "u64");
    return v;
}

inline void read_f64s(std::istream& is, std::span<double> out) {
    is.read(reinterpret_cast<char*>(out.data()),
            static_cast<std::streamsize>(out.size() * sizeof(double)));
    check(is, "float64 block");
}

inline DenseArray read_matrix(std::istream& is, std::size_t rows, std::size_t cols) {
    DenseArray a = DenseArray::matrix(rows, cols);
    read_f64s(is, a.values());
    return a;
}

/// Reads magic, version and header; rejects unknown magic or newer versions.
inline nlohmann::json read_preamble(std::istream& is, const char (&magic)[9],
                                    std::uint32_t max_version, std::uint32_t* version = nullptr) {
    char got[8] = {};
    is.read(got, 8);
    check(is, "magic");
    if (std::memcmp(got, magic, 8) != 0)
        throw IoError(std::string("not a ") + magic + " file (bad magic)");
    const std::uint32_t v = read_u32(is);
    if (v == 0 || v > max_version)
        throw IoError(std::string(magic) + ": unsupported version " + std::to_string(v));
    if (version) *version = v;
    const std::uint64_t len = read_u64(is);
    if (len > (1u << 26)) throw IoError(std::string(magic) + ": header too large");
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    check(is, "header");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string(magic) + ": malformed header: " + e.what());
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    return is;
}

inline void finish_write(std::ostream& os, const std::string& path) {
    os.flush();
    if (!os) throw IoError("failed writing '" + path + "'");
}

} // namespace fkpd::binio
