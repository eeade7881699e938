#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "evseq/error.hpp"

namespace evseq::detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    out.write(b, 8);
}

inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_le(std::istream& in, int bytes, const std::string& what) {
    unsigned char b[8] = {};
    in.read(reinterpret_cast<char*>(b), bytes);
    if (in.gcount() != bytes) throw IoError("truncated file while reading " + what);
    std::uint64_t v = 0;
    for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
    return static_cast<std::uint32_t>(get_le(in, 4, what));
}
inline std::uint64_t get_u64(std::istream& in, const std::string& what) {
    return get_le(in, 8, what);
}
inline float get_f32(std::istream& in, const std::string& what) {
    return std::bit_cast<float>(get_u32(in, what));
}
inline double get_f64(std::istream& in, const std::string& what) {
    return std::bit_cast<double>(get_u64(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& path) {
    char b[4] = {};
    in.read(b, 4);
    if (in.gcount() != 4 || b[0] != magic[0] || b[1] != magic[1] || b[2] != magic[2] ||
        b[3] != magic[3]) {
        throw IoError(path + ": bad magic, expected " + std::string(magic, 4));
    }
}

}  // namespace evseq::detail
