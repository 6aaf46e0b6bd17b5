#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gkdv {

/// Counter-based SplitMix64: draw k of stream `seed` is a pure function of (seed, k).
class SplitMix64 {
public:
    static constexpr const char* name = "splitmix64";

    explicit SplitMix64(std::uint64_t seed = 0) : seed_(seed) {}

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t at(std::uint64_t k) const { return mix(seed_ + (k + 1) * 0x9e3779b97f4a7c15ULL); }
    std::uint64_t next() { return at(counter_++); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal by Box–Muller (one value per two draws).
    double normal() {
        double u1 = uniform(), u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace gkdv
