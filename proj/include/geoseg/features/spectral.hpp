#ifndef GEOSEG_FEATURES_SPECTRAL_HPP
#define GEOSEG_FEATURES_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <limits>

#include "geoseg/core/error.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg::features {

inline void require_rgb(const Tile& tile, const char* who) {
    if (tile.band_count() != 3 || tile.bands[0].name != "R" || tile.bands[1].name != "G" || tile.bands[2].name != "B")
        throw ConfigError(std::string(who) + ": expects a 3-band tile ordered R, G, B");
}

/// Per-pixel maximum over all bands.
inline Band brightness(const Tile& tile) {
    if (tile.band_count() == 0) throw ConfigError("brightness: tile has no bands");
    Grid<double> out = tile.bands.front().data;
    ValueRange range = tile.bands.front().range;
    for (std::size_t b = 1; b < tile.band_count(); ++b) {
        const auto src = tile.bands[b].data.values();
        auto dst = out.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
        range.min = std::min(range.min, tile.bands[b].range.min);
        range.max = std::max(range.max, tile.bands[b].range.max);
    }
    return Band(std::move(out), range, "BRIGHTNESS");
}

/// Rec.601 luma of an RGB tile; the single-band input to edge detection.
inline Band luma(const Tile& tile) {
    require_rgb(tile, "luma");
    Grid<double> out(tile.height(), tile.width());
    const auto r = tile.bands[0].data.values();
    const auto g = tile.bands[1].data.values();
    const auto b = tile.bands[2].data.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    return Band(std::move(out), tile.bands[0].range, "LUMA");
}

/// Sobel gradient magnitude sqrt(Gx^2 + Gy^2) with edge replication.
///
///   Gx = [-1 0 1; -2 0 2; -1 0 1]      Gy = [1 2 1; 0 0 0; -1 -2 -1]
///
/// Output range is the observed [min, max] of the magnitude.
inline Band sobel_magnitude(const Band& gray) {
    if (gray.height() < 3 || gray.width() < 3) throw ConfigError("sobel_magnitude: input must be at least 3x3");
    const auto h = static_cast<std::ptrdiff_t>(gray.height());
    const auto w = static_cast<std::ptrdiff_t>(gray.width());
    const auto& g = gray.data;
    Grid<double> out(gray.height(), gray.width());
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            const double tl = g.clamped(r - 1, c - 1), tc = g.clamped(r - 1, c), tr = g.clamped(r - 1, c + 1);
            const double ml = g.clamped(r, c - 1), mr = g.clamped(r, c + 1);
            const double bl = g.clamped(r + 1, c - 1), bc = g.clamped(r + 1, c), br = g.clamped(r + 1, c + 1);
            const double gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
            const double gy = (tl + 2.0 * tc + tr) - (bl + 2.0 * bc + br);
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::sqrt(gx * gx + gy * gy);
        }
    }
    Band band(std::move(out), {}, "SOBEL");
    band.range = band.observed_range();
    return band;
}

/// Visible Difference Vegetation Index (2G - R - B) / (2G + R + B), in
/// [-1, 1]. Pixels whose denominator is zero get 0.
inline Band vdvi(const Tile& tile) {
    require_rgb(tile, "vdvi");
    Grid<double> out(tile.height(), tile.width());
    const auto r = tile.bands[0].data.values();
    const auto g = tile.bands[1].data.values();
    const auto b = tile.bands[2].data.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double num = 2.0 * g[i] - r[i] - b[i];
        const double den = 2.0 * g[i] + r[i] + b[i];
        const double v = den == 0.0 ? 0.0 : num / den;
        dst[i] = std::clamp(v, -1.0, 1.0);  // bounded even for negative inputs
    }
    return Band(std::move(out), {-1.0, 1.0}, "VDVI");
}

}  // namespace geoseg::features

#endif  // GEOSEG_FEATURES_SPECTRAL_HPP
