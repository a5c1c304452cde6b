#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "eadnet/common.hpp"

namespace eadnet {

/// Seedable PRNG used everywhere randomness is needed. Built on mt19937_64
/// with hand-rolled uniform/normal mappings so the output stream depends only
/// on the seed, not on the standard library's distribution implementations.
/// Reproducibility contract: same seed, same draw sequence within this
/// implementation. Cross-implementation bit-exactness is not promised.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [0,1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform_in(double a, double b) { return a + (b - a) * uniform(); }

    /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
    double normal() {
        double u1 = uniform();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;  // keep log finite
        const double u2 = uniform();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    /// Uniform integer in [0, n). Lemire multiply-shift; bias is < 2^-64.
    i64 uniform_int(i64 n) {
        const auto x = gen_();
        return static_cast<i64>((static_cast<unsigned __int128>(x) * static_cast<std::uint64_t>(n)) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Derive an independent per-task seed from a base seed and a task index
    /// (splitmix64 finalizer over the pair).
    static std::uint64_t derive(std::uint64_t base, std::uint64_t index) {
        std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (index + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace eadnet
