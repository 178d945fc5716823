#ifndef GEOSEG_FEATURES_EQUALIZE_HPP
#define GEOSEG_FEATURES_EQUALIZE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "geoseg/raster/raster.hpp"

namespace geoseg::features {

/// Per-band histogram equalisation of byte-range data: each level v maps
/// to round(cdf(v) * 255), where cdf is the cumulative pixel fraction.
inline Tile hist_equalize(const Tile& tile) {
    Tile out = tile;
    for (auto& band : out.bands) {
        std::array<std::uint64_t, 256> hist{};
        auto vals = band.data.values();
        std::vector<std::uint8_t> levels(vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double q = std::round(std::clamp(vals[i], 0.0, 255.0));
            levels[i] = static_cast<std::uint8_t>(q);
            ++hist[levels[i]];
        }
        if (std::count(hist.begin(), hist.end(), 0u) == 255) {
            for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = levels[i];
            band.range = kByteRange;
            continue;
        }
        std::array<double, 256> lut{};
        std::uint64_t running = 0;
        const auto total = static_cast<double>(vals.size());
        for (std::size_t v = 0; v < 256; ++v) {
            running += hist[v];
            lut[v] = std::round(static_cast<double>(running) / total * 255.0);
        }
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = lut[levels[i]];
        band.range = kByteRange;
    }
    return out;
}

}  // namespace geoseg::features

#endif  // GEOSEG_FEATURES_EQUALIZE_HPP
