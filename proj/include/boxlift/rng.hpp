#pragma once

#include <cmath>
#include <cstdint>

namespace boxlift {

/// SplitMix64 generator. Every random draw in this project goes through this
/// struct so that results are bit-identical across platforms and compilers;
/// std::random distributions are implementation-defined and must not be used.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; consumes exactly two uniform draws.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Knuth's product method; draw count varies with the outcome.
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01();
        } while (p > limit);
        return k - 1;
    }
};

/// Deterministic sub-stream derivation: the (root, salt) pair fixes the
/// stream, so consumers with different salts never interleave draws.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t salt) {
    SplitMix64 g(root ^ (0xD1B54A32D192ED03ull * (salt + 1)));
    return g.next_u64();
}

}  // namespace boxlift
