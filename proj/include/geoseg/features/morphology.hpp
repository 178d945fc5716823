#ifndef GEOSEG_FEATURES_MORPHOLOGY_HPP
#define GEOSEG_FEATURES_MORPHOLOGY_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/raster/grid.hpp"

namespace geoseg::features {

struct Offset {
    std::ptrdiff_t dr = 0;
    std::ptrdiff_t dc = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

/// Pixel offsets of a centred linear structuring element `length` pixels
/// long at `angle_deg` (0 = along +column, 90 = toward -row). Steps are
/// normalised by the dominant axis, so diagonals advance one pixel per
/// row and column.
inline std::vector<Offset> linear_element(double angle_deg, std::size_t length) {
    if (length == 0) throw ConfigError("linear_element: length must be positive");
    const double rad = angle_deg * std::numbers::pi / 180.0;
    const double cx = std::cos(rad);
    const double sy = std::sin(rad);
    const double dominant = std::max(std::abs(cx), std::abs(sy));
    const auto len = static_cast<std::ptrdiff_t>(length);
    const std::ptrdiff_t first = -(len - 1) / 2;
    std::vector<Offset> out;
    out.reserve(length);
    for (std::ptrdiff_t k = first; k < first + len; ++k) {
        const double kd = static_cast<double>(k);
        out.push_back({static_cast<std::ptrdiff_t>(std::lround(-kd * sy / dominant)),
                       static_cast<std::ptrdiff_t>(std::lround(kd * cx / dominant))});
    }
    return out;
}

/// Grey-level erosion (minimum over the element) with edge replication.
inline Grid<double> erode(const Grid<double>& image, const std::vector<Offset>& element) {
    Grid<double> out(image.height(), image.width());
    const auto h = static_cast<std::ptrdiff_t>(image.height());
    const auto w = static_cast<std::ptrdiff_t>(image.width());
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double m = image.clamped(r + element.front().dr, c + element.front().dc);
            for (const auto& o : element) m = std::min(m, image.clamped(r + o.dr, c + o.dc));
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m;
        }
    }
    return out;
}

/// Morphological reconstruction by dilation of `marker` under `mask`
/// (8-connectivity), using the hybrid raster-scan + FIFO algorithm.
/// Requires marker <= mask pointwise.
inline Grid<double> reconstruct_by_dilation(Grid<double> marker, const Grid<double>& mask) {
    if (!marker.same_shape(mask)) throw ConfigError("reconstruct_by_dilation: shape mismatch");
    const auto h = static_cast<std::ptrdiff_t>(mask.height());
    const auto w = static_cast<std::ptrdiff_t>(mask.width());
    auto inside = [&](std::ptrdiff_t r, std::ptrdiff_t c) { return r >= 0 && r < h && c >= 0 && c < w; };
    auto at = [&](Grid<double>& g, std::ptrdiff_t r, std::ptrdiff_t c) -> double& {
        return g(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    };
    auto mask_at = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
        return mask(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    };
    for (std::size_t i = 0; i < marker.size(); ++i)
        marker.values()[i] = std::min(marker.values()[i], mask.values()[i]);

    // Neighbours preceding a pixel in raster order, and their mirror.
    static constexpr Offset kForward[] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}};
    static constexpr Offset kBackward[] = {{1, 1}, {1, 0}, {1, -1}, {0, 1}};

    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double m = at(marker, r, c);
            for (const auto& o : kForward)
                if (inside(r + o.dr, c + o.dc)) m = std::max(m, at(marker, r + o.dr, c + o.dc));
            at(marker, r, c) = std::min(m, mask_at(r, c));
        }
    }

    std::deque<std::pair<std::ptrdiff_t, std::ptrdiff_t>> fifo;
    for (std::ptrdiff_t r = h - 1; r >= 0; --r) {
        for (std::ptrdiff_t c = w - 1; c >= 0; --c) {
            double m = at(marker, r, c);
            for (const auto& o : kBackward)
                if (inside(r + o.dr, c + o.dc)) m = std::max(m, at(marker, r + o.dr, c + o.dc));
            m = std::min(m, mask_at(r, c));
            at(marker, r, c) = m;
            for (const auto& o : kBackward) {
                const auto qr = r + o.dr, qc = c + o.dc;
                if (inside(qr, qc) && at(marker, qr, qc) < m && at(marker, qr, qc) < mask_at(qr, qc)) {
                    fifo.emplace_back(r, c);
                    break;
                }
            }
        }
    }

    while (!fifo.empty()) {
        const auto [r, c] = fifo.front();
        fifo.pop_front();
        const double m = at(marker, r, c);
        for (std::ptrdiff_t dr = -1; dr <= 1; ++dr) {
            for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const auto qr = r + dr, qc = c + dc;
                if (!inside(qr, qc)) continue;
                double& q = at(marker, qr, qc);
                const double limit = mask_at(qr, qc);
                if (q < m && q != limit) {
                    q = std::min(m, limit);
                    fifo.emplace_back(qr, qc);
                }
            }
        }
    }
    return marker;
}

/// Opening by reconstruction: erode with the element, then rebuild every
/// structure that survived the erosion.
inline Grid<double> opening_by_reconstruction(const Grid<double>& image, const std::vector<Offset>& element) {
    return reconstruct_by_dilation(erode(image, element), image);
}

/// White top-hat by reconstruction: image minus its opening by reconstruction.
inline Grid<double> white_tophat(const Grid<double>& image, const std::vector<Offset>& element) {
    Grid<double> opened = opening_by_reconstruction(image, element);
    auto src = image.values();
    auto dst = opened.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] - dst[i];
    return opened;
}

}  // namespace geoseg::features

#endif  // GEOSEG_FEATURES_MORPHOLOGY_HPP
