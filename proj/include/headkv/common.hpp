// Copyright (C) 2026 headkv project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace headkv {

using Token = std::int32_t;

/// Recoverable failure raised when an operation's preconditions are violated
/// or an internal invariant breaks at runtime.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad JSON, out-of-range fields, unknown names).
class ConfigError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw Error(msg);
    }
}

/// Half-open token-position interval [begin, end).
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool empty() const { return end <= begin; }
    bool contains(std::size_t pos) const { return pos >= begin && pos < end; }

    bool operator==(const Span&) const = default;
};

namespace detail {

// splitmix64 finalizer; also used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
std::uint64_t mix(std::uint64_t seed, std::uint64_t v, Rest... rest) {
    return mix(splitmix64(seed ^ (v + 0x9E3779B97F4A7C15ULL)), rest...);
}

inline std::uint64_t fnv1a(const Token* data, std::size_t n) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(data[i]));
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace detail

}  // namespace headkv
