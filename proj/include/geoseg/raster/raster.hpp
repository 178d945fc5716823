#ifndef GEOSEG_RASTER_RASTER_HPP
#define GEOSEG_RASTER_RASTER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/raster/grid.hpp"

namespace geoseg {

/// Declared value interval of a band, used for normalisation.
struct ValueRange {
    double min = 0.0;
    double max = 255.0;

    bool degenerate() const noexcept { return min == max; }
    friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

inline constexpr ValueRange kByteRange{0.0, 255.0};
inline constexpr ValueRange kUnitRange{0.0, 1.0};

/// One real-valued raster layer.
struct Band {
    Grid<double> data;
    ValueRange range = kByteRange;
    std::string name;

    Band() = default;
    Band(Grid<double> grid, ValueRange value_range, std::string band_name)
        : data(std::move(grid)), range(value_range), name(std::move(band_name)) {
        validate();
    }

    std::size_t height() const noexcept { return data.height(); }
    std::size_t width() const noexcept { return data.width(); }

    void validate() const {
        if (data.empty()) throw ConfigError("band '" + name + "' is empty");
        if (!(range.min <= range.max)) throw ConfigError("band '" + name + "' has an inverted value range");
        for (double v : data)
            if (!std::isfinite(v)) throw NumericError("band '" + name + "' contains a non-finite value");
    }

    /// Range spanned by the actual values.
    ValueRange observed_range() const {
        auto [lo, hi] = std::minmax_element(data.begin(), data.end());
        return {*lo, *hi};
    }
};

struct PixelOffset {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const PixelOffset&, const PixelOffset&) = default;
    friend auto operator<=>(const PixelOffset&, const PixelOffset&) = default;
};

/// Multi-band raster patch. All bands share one shape.
struct Tile {
    std::vector<Band> bands;
    double gsd = 1.0;
    std::string source_id;
    PixelOffset origin;

    Tile() = default;
    explicit Tile(std::vector<Band> tile_bands, double ground_sample_distance = 1.0,
                  std::string source = {}, PixelOffset offset = {})
        : bands(std::move(tile_bands)), gsd(ground_sample_distance), source_id(std::move(source)),
          origin(offset) {
        validate();
    }

    std::size_t height() const noexcept { return bands.empty() ? 0 : bands.front().height(); }
    std::size_t width() const noexcept { return bands.empty() ? 0 : bands.front().width(); }
    std::size_t band_count() const noexcept { return bands.size(); }

    const Band& band(std::size_t i) const { return bands.at(i); }

    /// Band lookup by name; throws DataError if absent.
    const Band& band(const std::string& band_name) const {
        for (const auto& b : bands)
            if (b.name == band_name) return b;
        throw DataError("tile has no band named '" + band_name + "'");
    }

    void validate() const {
        if (bands.empty()) throw ConfigError("tile has no bands");
        if (!(gsd > 0.0)) throw ConfigError("tile gsd must be positive");
        for (const auto& b : bands)
            if (!b.data.same_shape(bands.front().data))
                throw ConfigError("tile bands differ in dimensions");
    }
};

/// Binary building (1) / background (0) label raster.
class MaskTile {
public:
    MaskTile() = default;
    explicit MaskTile(Grid<std::uint8_t> grid) : data_(std::move(grid)) {
        for (auto v : data_)
            if (v > 1) throw DataError("mask values must be 0 or 1");
    }
    MaskTile(std::size_t height, std::size_t width, std::uint8_t fill = 0)
        : MaskTile(Grid<std::uint8_t>(height, width, fill)) {}

    const Grid<std::uint8_t>& data() const noexcept { return data_; }
    std::size_t height() const noexcept { return data_.height(); }
    std::size_t width() const noexcept { return data_.width(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::uint8_t operator()(std::size_t r, std::size_t c) const noexcept { return data_(r, c); }
    void set(std::size_t r, std::size_t c, bool building) noexcept { data_(r, c) = building ? 1 : 0; }

    friend bool operator==(const MaskTile&, const MaskTile&) = default;

private:
    Grid<std::uint8_t> data_;
};

/// Per-pixel building probability in [0, 1].
class ProbMap {
public:
    ProbMap() = default;
    explicit ProbMap(Grid<double> grid) : data_(std::move(grid)) {
        for (double v : data_)
            if (!(v >= 0.0 && v <= 1.0)) throw NumericError("probability outside [0,1]");
    }

    const Grid<double>& data() const noexcept { return data_; }
    std::size_t height() const noexcept { return data_.height(); }
    std::size_t width() const noexcept { return data_.width(); }
    std::size_t size() const noexcept { return data_.size(); }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_(r, c); }

private:
    Grid<double> data_;
};

/// Affine map of the band's declared range onto `target`. A degenerate
/// declared range sends every pixel to the target midpoint.
inline Band normalize_band(const Band& band, ValueRange target = kByteRange) {
    if (!(band.range.min <= band.range.max) || !(target.min <= target.max))
        throw ConfigError("normalize_band: invalid value range");
    Grid<double> out(band.height(), band.width());
    auto src = band.data.values();
    auto dst = out.values();
    if (band.range.degenerate()) {
        const double mid = 0.5 * (target.min + target.max);
        for (std::size_t i = 0; i < src.size(); ++i) {
            if (!std::isfinite(src[i])) throw NumericError("normalize_band: non-finite input");
            dst[i] = mid;
        }
    } else {
        const double scale = (target.max - target.min) / (band.range.max - band.range.min);
        for (std::size_t i = 0; i < src.size(); ++i) {
            if (!std::isfinite(src[i])) throw NumericError("normalize_band: non-finite input");
            dst[i] = target.min + (src[i] - band.range.min) * scale;
        }
    }
    Band result;
    result.data = std::move(out);
    result.range = target;
    result.name = band.name;
    return result;
}

/// Tile of three byte-range bands named R, G, B.
inline Tile make_rgb_tile(Grid<double> r, Grid<double> g, Grid<double> b, double gsd = 1.0) {
    std::vector<Band> bands;
    bands.emplace_back(std::move(r), kByteRange, "R");
    bands.emplace_back(std::move(g), kByteRange, "G");
    bands.emplace_back(std::move(b), kByteRange, "B");
    return Tile(std::move(bands), gsd);
}

}  // namespace geoseg

#endif  // GEOSEG_RASTER_RASTER_HPP
