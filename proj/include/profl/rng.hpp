#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace profl {

// splitmix64 finalizer; good enough to spread seed material.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed, a purpose tag and up
// to two indices (round, client, ...). Every random decision in a run pulls
// its seed through here so that one run seed pins the whole simulation.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t s = mix64(base ^ h);
    s = mix64(s ^ (a + 0x9e3779b97f4a7c15ULL));
    s = mix64(s ^ (b + 0x7f4a7c15f39cc060ULL));
    return s;
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::string_view tag,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
    return std::mt19937_64(derive_seed(base, tag, a, b));
}

}  // namespace profl
