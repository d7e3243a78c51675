#pragma once

#include "prkd/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace prkd::detail {

template <typename UInt>
void write_le(std::ostream& out, UInt value) {
    unsigned char bytes[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(UInt));
}

template <typename UInt>
UInt read_le(std::istream& in, const std::string& what) {
    unsigned char bytes[sizeof(UInt)];
    const auto offset = static_cast<std::int64_t>(in.tellg());
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt)))
        throw IoError("truncated " + what, offset);
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) value |= static_cast<UInt>(bytes[i]) << (8 * i);
    return value;
}

inline void write_f32_le(std::ostream& out, std::span<const float> values) {
    std::vector<unsigned char> raw(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(values[i]);
        for (int b = 0; b < 4; ++b) raw[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

inline std::vector<float> read_f32_le(std::istream& in, std::size_t count, const std::string& what) {
    const auto offset = static_cast<std::int64_t>(in.tellg());
    std::vector<unsigned char> raw(count * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw IoError("truncated " + what, offset + static_cast<std::int64_t>(in.gcount()));
    std::vector<float> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = std::uint32_t{raw[4 * i]} | std::uint32_t{raw[4 * i + 1]} << 8 |
                                   std::uint32_t{raw[4 * i + 2]} << 16 | std::uint32_t{raw[4 * i + 3]} << 24;
        values[i] = std::bit_cast<float>(bits);
    }
    return values;
}

}  // namespace prkd::detail
