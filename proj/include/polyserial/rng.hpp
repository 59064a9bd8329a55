#pragma once

// Deterministic random number generation for the simulation harness.
//
// xoshiro256++ state seeded through splitmix64.  Streams are derived from an
// explicit 64-bit (seed, stream) pair, so repetition i of a study always sees
// the same draws no matter how repetitions are scheduled across threads.
// Normal variates use the inverse CDF: one uniform in, one variate out, which
// keeps sequences order-stable.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "normal.hpp"

namespace polyserial {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0) {
        std::uint64_t mix = stream_id + 0x9E3779B97F4A7C15ULL;
        mix = detail::splitmix64(mix);
        std::uint64_t sm = seed ^ mix;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    /// Stream `id` derived from a study-level seed.
    static Rng stream(std::uint64_t seed, std::uint64_t id) { return Rng(seed, id); }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    /// Uniform draw in the open interval (0, 1).
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Standard normal via the inverse CDF.
    double normal() { return std_normal_quantile(uniform()); }

    double exponential() { return -std::log(uniform()); }

    /// Gamma(shape, 1) by Marsaglia-Tsang squeeze; any shape > 0.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("Rng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double chi_square(double df) { return 2.0 * gamma(0.5 * df); }

    /// Uniformly chosen index in [0, n).
    std::uint64_t index(std::uint64_t n) {
        // Rejection to avoid modulo bias.
        const std::uint64_t limit = n * (UINT64_MAX / n);
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return draw % n;
    }

private:
    std::array<std::uint64_t, 4> state_;
};

}  // namespace polyserial
