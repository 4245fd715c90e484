// Seeding for reproducible simulation streams.
//
// Each (seed, scenario key, replicate) triple gets its own mt19937_64 whose
// seed is derived by splitmix64 mixing, so results never depend on which
// worker ran which replicate.

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fewmeta {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// FNV-1a; used to turn a scenario's canonical key into a stream tag.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t replicate) noexcept {
    return splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ replicate);
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t replicate) {
    return Rng(stream_seed(seed, tag, replicate));
}

}  // namespace fewmeta
