#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

namespace marginlab {

/// Counter-based generator: every draw is a pure function of (seed, stream, counter),
/// so step t of a run can be reproduced without replaying steps 0..t-1.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(mix(mix(seed + kGolden) ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))) {}

    constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
        return mix(mix(key_ + (counter + 1) * kGolden) ^ key_);
    }

    /// Uniform on [0, 1) with 53 random bits.
    constexpr double uniform(std::uint64_t counter) const noexcept {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    /// Uniform on {0, ..., n-1} via the 128-bit multiply-shift reduction.
    std::size_t index(std::uint64_t counter, std::size_t n) const noexcept {
        const auto wide = static_cast<unsigned __int128>(bits(counter)) * n;
        return static_cast<std::size_t>(wide >> 64);
    }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
};

/// Sequential view over a CounterRng, for generators that draw an unknown number of values.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) noexcept : rng_(seed, stream) {}

    double uniform() noexcept { return rng_.uniform(counter_++); }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal (Box-Muller, cosine branch only).
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::size_t index(std::size_t n) noexcept { return rng_.index(counter_++, n); }

private:
    CounterRng rng_;
    std::uint64_t counter_ = 0;
};

}  // namespace marginlab
