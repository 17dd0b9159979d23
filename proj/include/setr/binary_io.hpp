#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "setr/errors.hpp"

namespace setr::io {

// Little-endian primitive encoding for the binary container formats.

template <typename V>
    requires std::is_arithmetic_v<V>
void write_le(std::ostream& out, V value) {
    std::array<char, sizeof(V)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(V));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), bytes.size());
}

template <typename V>
    requires std::is_arithmetic_v<V>
V read_le(std::istream& in) {
    std::array<char, sizeof(V)> bytes;
    if (!in.read(bytes.data(), bytes.size())) throw DataError("unexpected end of file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    V value;
    std::memcpy(&value, bytes.data(), sizeof(V));
    return value;
}

template <typename V>
void write_array(std::ostream& out, std::span<const V> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (V v : values) write_le(out, v);
    }
}

template <typename V>
void read_array(std::istream& in, std::span<V> values) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()))) {
            throw DataError("unexpected end of file");
        }
    } else {
        for (V& v : values) v = read_le<V>(in);
    }
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::uint32_t max_len = 1u << 20) {
    const auto len = read_le<std::uint32_t>(in);
    if (len > max_len) throw DataError("string length " + std::to_string(len) + " exceeds limit");
    std::string s(len, '\0');
    if (len && !in.read(s.data(), len)) throw DataError("unexpected end of file");
    return s;
}

inline void expect_magic(std::istream& in, std::string_view magic, const std::string& what) {
    std::string got(magic.size(), '\0');
    if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
        throw DataError(what + ": bad magic, not a " + std::string(magic) + " file");
    }
}

}  // namespace setr::io
