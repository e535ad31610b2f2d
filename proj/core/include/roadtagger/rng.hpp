#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace roadtagger {

// Single deterministic RNG used everywhere a stream of draws is needed.
// Feature rendering uses the counter-based helpers below instead, so that
// per-vertex noise does not depend on generation order.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
    return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL));
}

// Uniform in [0,1) from a counter; stable across platforms and call order.
inline double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t bits = splitmix64(hash_combine(seed, counter));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two counter-based uniforms.
inline double counter_gaussian(std::uint64_t seed, std::uint64_t counter) {
    double u1 = counter_uniform(seed, counter * 2);
    double u2 = counter_uniform(seed, counter * 2 + 1);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace roadtagger
