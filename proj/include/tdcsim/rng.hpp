#pragma once

#include <cmath>
#include <cstdint>

namespace tdcsim {

// Counter-based pseudo-random primitives. Every draw is a pure function of
// (seed, counter, salt), so sampling can be split across chunks or workers
// without changing the result.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t counter,
                                  std::uint64_t salt = 0) {
    return splitmix64(splitmix64(seed ^ (salt * 0x9e3779b97f4a7c15ull)) ^ counter);
}

// Uniform double in [0, 1).
inline double u01(std::uint64_t seed, std::uint64_t counter, std::uint64_t salt = 0) {
    return static_cast<double>(hash_combine(seed, counter, salt) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two derived uniforms.
inline double gauss01(std::uint64_t seed, std::uint64_t counter, std::uint64_t salt = 0) {
    const double u1 = 1.0 - u01(seed, counter, salt * 2 + 1);  // (0, 1]
    const double u2 = u01(seed, counter, salt * 2 + 2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

// Poisson count. Direct method for small means, rounded Gaussian above:
// at mean > 256 the normal approximation error is far below the Poisson
// fluctuation scale for every statistic we consume.
inline std::uint64_t poisson(double mean, std::uint64_t seed, std::uint64_t counter,
                             std::uint64_t salt = 0) {
    if (mean <= 0.0) return 0;
    if (mean < 256.0) {
        const double limit = std::exp(-mean);
        double p = 1.0;
        std::uint64_t k = 0;
        std::uint64_t sub = 0;
        do {
            ++k;
            p *= u01(seed, counter, salt * 4096 + sub++);
        } while (p > limit);
        return k - 1;
    }
    const double g = gauss01(seed, counter, salt * 4096 + 4095);
    const double v = mean + std::sqrt(mean) * g;
    return v <= 0.0 ? 0 : static_cast<std::uint64_t>(v + 0.5);
}

}  // namespace tdcsim
