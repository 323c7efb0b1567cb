#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace agbd {

// Counter-based pseudo-random generation. Every draw is a pure function of
// (seed, stream, index, draw), so producers can evaluate any element of a
// stream independently, in any order and from any number of workers, and
// the result never depends on the schedule.
//
// The generator chains the SplitMix64 finalizer, injecting one key between
// stages. That construction is bijective per stage and gives full avalanche
// over the combined key material.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream) : key_(mix(mix(seed + GOLDEN) + stream)) {}

    std::uint64_t bits(std::uint64_t index, std::uint64_t draw = 0) const {
        return mix(mix(key_ + index) + draw);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform(std::uint64_t index, std::uint64_t draw = 0) const {
        return static_cast<double>(bits(index, draw) >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a logarithm argument.
    double uniform_open(std::uint64_t index, std::uint64_t draw = 0) const {
        return static_cast<double>((bits(index, draw) >> 11) + 1) * 0x1.0p-53;
    }

    double uniform_range(double lo, double hi, std::uint64_t index, std::uint64_t draw = 0) const {
        return lo + (hi - lo) * uniform(index, draw);
    }

    // Standard normal via Box-Muller; consumes draws `draw` and `draw + 1`.
    double normal(std::uint64_t index, std::uint64_t draw = 0) const {
        const double u1 = uniform_open(index, draw);
        const double u2 = uniform(index, draw + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Unbiased integer in [0, n); n >= 1. Rejection advances the draw counter.
    std::uint64_t below(std::uint64_t n, std::uint64_t index, std::uint64_t draw = 0) const {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t b = bits(index, draw);
        while (b >= limit) b = bits(index, ++draw);
        return b % n;
    }

    // Poisson count by summing exponential gaps until they exceed lambda.
    // O(lambda) draws; exact for any practical rate.
    std::uint64_t poisson(double lambda, std::uint64_t index) const {
        std::uint64_t k = 0;
        double acc = 0.0;
        for (std::uint64_t draw = 0;; ++draw) {
            acc += -std::log(uniform_open(index, draw));
            if (acc > lambda) return k;
            ++k;
        }
    }

    static std::uint64_t hash_string(std::string_view s) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

private:
    static constexpr std::uint64_t GOLDEN = 0x9e3779b97f4a7c15ull;

    static std::uint64_t mix(std::uint64_t x) {
        x += GOLDEN;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t key_;
};

}  // namespace agbd
