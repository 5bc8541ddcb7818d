#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "rfexplore/errors.hpp"

namespace rfe {

// Seeded random stream. All distributions are implemented on top of raw
// 64-bit draws so that sequences are reproducible across standard libraries
// (std::uniform_real_distribution and friends are implementation-defined).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        if (n <= 0) throw ContractError("uniform_int: n must be positive");
        // Rejection to avoid modulo bias.
        const std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % static_cast<std::uint64_t>(n));
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= bound);
        return static_cast<int>(x % static_cast<std::uint64_t>(n));
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Index drawn with probability weights[i] / sum(weights).
    int categorical(std::span<const double> weights) {
        double total = 0;
        for (double w : weights) {
            if (w < 0) throw ContractError("categorical: negative weight");
            total += w;
        }
        if (total <= 0) throw ContractError("categorical: weights sum to zero");
        const double u = uniform() * total;
        double acc = 0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

    // Derive an independent child stream. Consumes one draw from this stream.
    Rng split(std::uint64_t tag) {
        std::uint64_t x = next_u64() ^ (tag * 0x9E3779B97F4A7C15ULL);
        // splitmix64 finalizer
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        x = x ^ (x >> 31);
        return Rng(x);
    }

  private:
    std::mt19937_64 gen_;
    double cached_ = 0;
    bool have_cached_ = false;
};

}  // namespace rfe
