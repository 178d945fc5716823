#ifndef GEOSEG_FEATURES_MBI_HPP
#define GEOSEG_FEATURES_MBI_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/features/morphology.hpp"
#include "geoseg/features/spectral.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg::features {

/// Morphological Building Index parameters. Scales run
/// s_min, s_min + delta_s, ... up to s_max.
struct MbiParams {
    std::vector<double> directions{0.0, 45.0, 90.0, 135.0};
    std::size_t s_min = 2;
    std::size_t s_max = 52;
    std::size_t delta_s = 5;
    std::size_t n_bands = 0;  // 0: use every band of the tile

    std::vector<std::size_t> scales() const {
        std::vector<std::size_t> out;
        for (std::size_t s = s_min; s <= s_max; s += delta_s) out.push_back(s);
        return out;
    }

    void validate() const {
        if (directions.empty()) throw ConfigError("mbi: directions must be non-empty");
        if (s_min < 1) throw ConfigError("mbi: s_min must be >= 1");
        if (delta_s < 1) throw ConfigError("mbi: delta_s must be >= 1");
        if (s_min + delta_s > s_max) throw ConfigError("mbi: s_min + delta_s must not exceed s_max");
    }
};

/// Mean differential top-hat profile over all directions and adjacent
/// scale pairs, before normalisation.
///
/// For each direction d and scale s the white top-hat by reconstruction
/// TH(d, s) = b - OBR_{d,s}(b) is taken on the brightness b; the profile
/// entry is |TH(d, s + ds) - TH(d, s)|.
inline Band mbi_profile(const Tile& tile, const MbiParams& params = {}) {
    params.validate();
    if (params.n_bands != 0 && params.n_bands != tile.band_count())
        throw ConfigError("mbi: tile band count does not match n_bands");
    if (params.s_max > std::min(tile.height(), tile.width()))
        throw ConfigError("mbi: s_max exceeds the image size");

    const Band bright = brightness(tile);
    const auto scales = params.scales();
    Grid<double> sum(tile.height(), tile.width(), 0.0);
    std::size_t terms = 0;
    for (double dir : params.directions) {
        Grid<double> previous = white_tophat(bright.data, linear_element(dir, scales.front()));
        for (std::size_t k = 1; k < scales.size(); ++k) {
            Grid<double> current = white_tophat(bright.data, linear_element(dir, scales[k]));
            auto acc = sum.values();
            const auto cur = current.values();
            const auto prev = previous.values();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::abs(cur[i] - prev[i]);
            previous = std::move(current);
            ++terms;
        }
    }
    for (double& v : sum) v /= static_cast<double>(terms);
    Band out(std::move(sum), {}, "MBI");
    out.range = out.observed_range();
    return out;
}

/// MBI min-max normalised to [0, 1]; a constant profile maps to zeros.
inline Band mbi(const Tile& tile, const MbiParams& params = {}) {
    Band profile = mbi_profile(tile, params);
    const ValueRange observed = profile.observed_range();
    const double span = observed.max - observed.min;
    for (double& v : profile.data) v = span > 0.0 ? (v - observed.min) / span : 0.0;
    profile.range = kUnitRange;
    return profile;
}

}  // namespace geoseg::features

#endif  // GEOSEG_FEATURES_MBI_HPP
