#pragma once

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace essnl {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Child seed: the base seed folded with each coordinate through mix64.
/// Distinct coordinate tuples give unrelated child streams.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t h = mix64(base);
    for (auto c : coords) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

/// FNV-1a, used for tags and fingerprints.
constexpr std::uint64_t hash_string(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Bit pattern of a double, so power levels can be seed coordinates.
inline std::uint64_t seed_coord(double v) noexcept { return std::bit_cast<std::uint64_t>(v); }

}  // namespace essnl
