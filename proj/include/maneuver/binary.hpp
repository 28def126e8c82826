#pragma once

// Little-endian binary encoding helpers used by the archive and model files.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "maneuver/error.hpp"

namespace maneuver::binary {

inline void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    out.write(buf, 8);
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    out.write(buf, 4);
}

inline void write_i32(std::ostream& out, std::int32_t v) { write_u32(out, static_cast<std::uint32_t>(v)); }

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void write_f64s(std::ostream& out, std::span<const double> vs) {
    for (double v : vs) write_f64(out, v);
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& in, char* buf, std::size_t n) {
    in.read(buf, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw DataError("unexpected end of binary data");
    }
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    read_exact(in, reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    read_exact(in, reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

inline std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(read_u32(in)); }

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

inline void read_f64s(std::istream& in, std::span<double> out) {
    for (double& v : out) v = read_f64(in);
}

inline std::string read_string(std::istream& in, std::size_t max_len = 1U << 24) {
    const auto n = read_u32(in);
    if (n > max_len) {
        throw DataError("binary string length out of range");
    }
    std::string s(n, '\0');
    read_exact(in, s.data(), n);
    return s;
}

}  // namespace maneuver::binary
