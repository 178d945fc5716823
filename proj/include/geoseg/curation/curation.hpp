#ifndef GEOSEG_CURATION_CURATION_HPP
#define GEOSEG_CURATION_CURATION_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/core/rng.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg::curation {

struct CurationConfig {
    std::size_t tile_size = 224;
    double hlf_threshold = 0.3;
    double split_ratio = 0.85;
    std::uint64_t seed = 0;

    void validate() const {
        if (tile_size == 0) throw ConfigError("curation.tile_size must be positive");
        if (!(hlf_threshold >= 0.0 && hlf_threshold <= 1.0))
            throw ConfigError("curation.hlf_threshold must lie in [0,1]");
        if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("curation.split_ratio must lie in (0,1)");
    }
};

struct TilePair {
    Tile image;
    MaskTile mask;
};

/// Cut an aligned image/mask pair into a non-overlapping grid of full
/// tile_size x tile_size chips, row-major. Partial edge strips are dropped.
inline std::vector<TilePair> chip(const Tile& image, const MaskTile& mask, std::size_t tile_size) {
    if (tile_size == 0) throw ConfigError("chip: tile_size must be positive");
    if (image.height() != mask.height() || image.width() != mask.width())
        throw DataError("chip: image and mask dimensions differ");
    if (image.height() < tile_size || image.width() < tile_size)
        throw DataError("chip: image '" + image.source_id + "' is smaller than the tile size");

    const std::size_t rows = image.height() / tile_size;
    const std::size_t cols = image.width() / tile_size;
    std::vector<TilePair> out;
    out.reserve(rows * cols);
    for (std::size_t tr = 0; tr < rows; ++tr) {
        for (std::size_t tc = 0; tc < cols; ++tc) {
            const std::size_t r0 = tr * tile_size;
            const std::size_t c0 = tc * tile_size;
            std::vector<Band> bands;
            for (const Band& b : image.bands) {
                Grid<double> g(tile_size, tile_size);
                for (std::size_t r = 0; r < tile_size; ++r)
                    for (std::size_t c = 0; c < tile_size; ++c) g(r, c) = b.data(r0 + r, c0 + c);
                bands.emplace_back(std::move(g), b.range, b.name);
            }
            Grid<std::uint8_t> m(tile_size, tile_size);
            for (std::size_t r = 0; r < tile_size; ++r)
                for (std::size_t c = 0; c < tile_size; ++c) m(r, c) = mask(r0 + r, c0 + c);
            PixelOffset origin{image.origin.row + r0, image.origin.col + c0};
            out.push_back({Tile(std::move(bands), image.gsd, image.source_id, origin), MaskTile(std::move(m))});
        }
    }
    return out;
}

/// High Label Filter score: building pixels over all pixels.
inline double hlf(const MaskTile& mask) {
    std::size_t built = 0;
    for (auto v : mask.data()) built += v;
    return static_cast<double>(built) / static_cast<double>(mask.size());
}

/// Keep the pairs whose HLF is at least `threshold`, preserving order.
inline std::vector<TilePair> filter_by_hlf(std::vector<TilePair> pairs, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("filter_by_hlf: threshold must lie in [0,1]");
    std::vector<TilePair> kept;
    for (auto& p : pairs)
        if (hlf(p.mask) >= threshold) kept.push_back(std::move(p));
    return kept;
}

/// Number of training items for n items: round-half-up of n * ratio.
inline std::size_t train_count(std::size_t n, double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 0.5));
}

/// Per-index train membership after a seeded Fisher-Yates permutation:
/// the first train_count(n, ratio) permuted indices go to training.
inline std::vector<bool> split_assignment(std::size_t n, double ratio, std::uint64_t seed) {
    if (n == 0) throw DataError("split_train_val: empty input");
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split_train_val: ratio must lie in (0,1)");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t k = train_count(n, ratio);
    std::vector<bool> is_train(n, false);
    for (std::size_t i = 0; i < k; ++i) is_train[order[i]] = true;
    return is_train;
}

/// Deterministic disjoint, exhaustive train/validation partition. Both
/// halves keep the input's relative order.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_val(std::vector<T> items, double ratio, std::uint64_t seed) {
    const auto is_train = split_assignment(items.size(), ratio, seed);
    std::pair<std::vector<T>, std::vector<T>> out;
    for (std::size_t i = 0; i < items.size(); ++i)
        (is_train[i] ? out.first : out.second).push_back(std::move(items[i]));
    return out;
}

}  // namespace geoseg::curation

#endif  // GEOSEG_CURATION_CURATION_HPP
