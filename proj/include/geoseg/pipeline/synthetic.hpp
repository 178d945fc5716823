#ifndef GEOSEG_PIPELINE_SYNTHETIC_HPP
#define GEOSEG_PIPELINE_SYNTHETIC_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "geoseg/core/rng.hpp"
#include "geoseg/curation/curation.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg::pipeline {

/// Small labelled scenes for smoke tests and overfit probes: textured
/// ground with rectangular roofs. Scene kLeakProneIndex holds an
/// L-shaped building whose inner corner touches a paved yard of similar
/// brightness.
struct ProbeSpec {
    std::size_t count = 8;
    std::size_t size = 64;
    std::uint64_t seed = 7;
    double gsd = 0.5;
};

inline constexpr std::size_t kLeakProneIndex = 0;

namespace detail {

using Rgb = std::array<double, 3>;

struct Canvas {
    std::size_t size;
    std::array<Grid<double>, 3> px;
    Grid<std::uint8_t> mask;

    explicit Canvas(std::size_t n) : size(n), px{Grid<double>(n, n), Grid<double>(n, n), Grid<double>(n, n)}, mask(n, n) {}

    void paint(std::size_t r0, std::size_t c0, std::size_t h, std::size_t w, const Rgb& color, Rng& rng, double jitter,
               bool building) {
        for (std::size_t r = r0; r < std::min(size, r0 + h); ++r)
            for (std::size_t c = c0; c < std::min(size, c0 + w); ++c) {
                for (int k = 0; k < 3; ++k) px[k](r, c) = color[k] + rng.uniform(-jitter, jitter);
                if (building) mask(r, c) = 1;
            }
    }
};

inline double to_byte(double v) { return std::clamp(std::round(v), 0.0, 255.0); }

}  // namespace detail

inline std::vector<curation::TilePair> make_probe_set(const ProbeSpec& spec = {}) {
    if (spec.size < 32 || spec.count == 0) throw ConfigError("probe set needs size >= 32 and count >= 1");
    static constexpr std::array<detail::Rgb, 4> kRoofs{{{205, 195, 185}, {175, 85, 65}, {135, 135, 150}, {225, 220, 205}}};
    static constexpr std::array<detail::Rgb, 3> kGround{{{85, 120, 65}, {110, 130, 80}, {120, 105, 85}}};
    const detail::Rgb yard{160, 155, 145};

    Rng rng(spec.seed);
    std::vector<curation::TilePair> out;
    const std::size_t n = spec.size;
    for (std::size_t i = 0; i < spec.count; ++i) {
        detail::Canvas cv(n);
        const auto& ground = kGround[rng.uniform_int(kGround.size() - 1)];
        cv.paint(0, 0, n, n, ground, rng, 18.0, false);
        // a few vegetation patches
        for (int k = 0; k < 3; ++k) {
            const auto r = rng.uniform_int(n - 12), c = rng.uniform_int(n - 12);
            cv.paint(r, c, 6 + rng.uniform_int(6), 6 + rng.uniform_int(6), {60, 100, 50}, rng, 12.0, false);
        }
        if (i == kLeakProneIndex) {
            const std::size_t r0 = n / 8, c0 = n / 8, span = n / 2 + n / 8, arm = n / 5;
            // yard filling the inner corner of the L
            cv.paint(r0 + arm, c0 + arm, span - arm, span - arm, yard, rng, 10.0, false);
            const auto& roof = kRoofs[0];
            cv.paint(r0, c0, arm, span, roof, rng, 8.0, true);
            cv.paint(r0, c0, span, arm, roof, rng, 8.0, true);
        } else {
            const int buildings = 2 + static_cast<int>(rng.uniform_int(2));
            for (int b = 0; b < buildings; ++b) {
                const std::size_t h = n / 8 + rng.uniform_int(n / 4), w = n / 8 + rng.uniform_int(n / 4);
                const std::size_t r = rng.uniform_int(n - h), c = rng.uniform_int(n - w);
                cv.paint(r, c, h, w, kRoofs[rng.uniform_int(kRoofs.size() - 1)], rng, 8.0, true);
            }
        }
        for (auto& g : cv.px)
            for (double& v : g) v = detail::to_byte(v);
        Tile tile = make_rgb_tile(std::move(cv.px[0]), std::move(cv.px[1]), std::move(cv.px[2]), spec.gsd);
        tile.source_id = "probe" + std::to_string(i);
        out.push_back({std::move(tile), MaskTile(std::move(cv.mask))});
    }
    return out;
}

}  // namespace geoseg::pipeline

#endif  // GEOSEG_PIPELINE_SYNTHETIC_HPP
