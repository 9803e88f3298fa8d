#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace lnc {

// All randomness in the project flows through these helpers. std::mt19937_64
// has a standard-pinned sequence; the distribution helpers below are written
// out by hand because the std distributions are implementation-defined and
// would break byte-level reproducibility across toolchains.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive an independent substream from a root seed and a counter.
inline std::mt19937_64 substream(uint64_t root_seed, uint64_t counter) {
    return std::mt19937_64(splitmix64(root_seed ^ splitmix64(counter)));
}

/// Named substream; hashes the label so call sites stay readable.
inline std::mt19937_64 substream(uint64_t root_seed, std::string_view label,
                                 uint64_t counter = 0) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return std::mt19937_64(splitmix64(root_seed ^ h ^ splitmix64(counter)));
}

/// Uniform double in [0, 1).
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n). Rejection to avoid modulo bias.
inline uint64_t uniform_below(std::mt19937_64& rng, uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

/// Standard normal via Box-Muller (one value per call; the pair's second
/// half is discarded to keep stream consumption position-independent).
inline double normal01(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline double normal(std::mt19937_64& rng, double mean, double sd) {
    return mean + sd * normal01(rng);
}

/// Fisher-Yates; std::shuffle is implementation-defined.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace lnc
