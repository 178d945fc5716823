#ifndef GEOSEG_CORE_RNG_HPP
#define GEOSEG_CORE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string_view>

namespace geoseg {

/// Seeded generator with portable derived distributions.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. The std distributions are implementation-defined, so
/// the bounded-integer, uniform-real and normal draws are implemented
/// here on top of raw 64-bit outputs. Any other implementation of
/// MT19937-64 reproduces the same shuffles given the same seed.
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, bound] by rejection on the top of the range.
    std::uint64_t uniform_int(std::uint64_t bound) {
        if (bound == UINT64_MAX) return engine_();
        const std::uint64_t span = bound + 1;
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % span;
    }

    /// Uniform real in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one draw per call, second discarded).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// In-place Fisher-Yates shuffle (descending index variant).
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(i - 1));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::mt19937_64& engine() { return engine_; }
    const std::mt19937_64& engine() const { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace geoseg

#endif  // GEOSEG_CORE_RNG_HPP
