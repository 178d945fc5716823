// Brute-force reference implementations used by the tests. They share
// no code with the library beyond the data types.
#ifndef GEOSEG_TESTS_ORACLES_HPP
#define GEOSEG_TESTS_ORACLES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "geoseg/core/rng.hpp"
#include "geoseg/raster/raster.hpp"

namespace oracle {

using geoseg::Grid;
using geoseg::MaskTile;
using geoseg::Tile;

inline double px(const Tile& t, std::size_t band, long r, long c) {
    const long h = static_cast<long>(t.height()), w = static_cast<long>(t.width());
    r = r < 0 ? 0 : (r >= h ? h - 1 : r);
    c = c < 0 ? 0 : (c >= w ? w - 1 : c);
    return t.bands[band].data(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

inline Grid<double> brightness(const Tile& t) {
    Grid<double> out(t.height(), t.width());
    for (std::size_t r = 0; r < t.height(); ++r)
        for (std::size_t c = 0; c < t.width(); ++c) {
            double m = -1e300;
            for (std::size_t b = 0; b < t.band_count(); ++b) m = std::max(m, t.bands[b].data(r, c));
            out(r, c) = m;
        }
    return out;
}

/// |G| of the luma with the textbook kernels, written out term by term.
inline Grid<double> sobel(const Tile& t) {
    auto y = [&](long r, long c) { return 0.299 * px(t, 0, r, c) + 0.587 * px(t, 1, r, c) + 0.114 * px(t, 2, r, c); };
    Grid<double> out(t.height(), t.width());
    for (long r = 0; r < static_cast<long>(t.height()); ++r)
        for (long c = 0; c < static_cast<long>(t.width()); ++c) {
            const double gx = (y(r - 1, c + 1) + 2 * y(r, c + 1) + y(r + 1, c + 1)) -
                              (y(r - 1, c - 1) + 2 * y(r, c - 1) + y(r + 1, c - 1));
            const double gy = (y(r - 1, c - 1) + 2 * y(r - 1, c) + y(r - 1, c + 1)) -
                              (y(r + 1, c - 1) + 2 * y(r + 1, c) + y(r + 1, c + 1));
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

inline Grid<double> vdvi(const Tile& t) {
    Grid<double> out(t.height(), t.width());
    for (std::size_t r = 0; r < t.height(); ++r)
        for (std::size_t c = 0; c < t.width(); ++c) {
            const double R = t.bands[0].data(r, c), G = t.bands[1].data(r, c), B = t.bands[2].data(r, c);
            const double den = 2 * G + R + B;
            out(r, c) = den == 0.0 ? 0.0 : (2 * G - R - B) / den;
        }
    return out;
}

struct Pca {
    Grid<double> pc1;
    Eigen::Vector3d eigenvalues;  // descending
    Eigen::Matrix3d eigenvectors; // columns, matching eigenvalues
};

/// Population covariance over pixels, Eigen's self-adjoint solver,
/// leading eigenvector signed so its components sum to >= 0.
inline Pca pca(const Tile& t) {
    const std::size_t n = t.height() * t.width();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i)
        for (int b = 0; b < 3; ++b) X(static_cast<Eigen::Index>(i), b) = t.bands[static_cast<std::size_t>(b)].data.values()[i];
    const Eigen::RowVector3d mean = X.colwise().mean();
    X.rowwise() -= mean;
    const Eigen::Matrix3d cov = (X.transpose() * X) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Pca out{Grid<double>(t.height(), t.width()), {}, {}};
    for (int k = 0; k < 3; ++k) {
        out.eigenvalues(k) = es.eigenvalues()(2 - k);
        out.eigenvectors.col(k) = es.eigenvectors().col(2 - k);
    }
    if (out.eigenvectors.col(0).sum() < 0) out.eigenvectors.col(0) *= -1.0;
    const Eigen::VectorXd proj = X * out.eigenvectors.col(0);
    for (std::size_t i = 0; i < n; ++i) out.pc1.values()[i] = proj(static_cast<Eigen::Index>(i));
    return out;
}

// ---- morphology from first principles ----

/// Centred digital segment of `len` pixels at `deg` degrees (0 = +column,
/// 90 = -row), one pixel per step along the dominant axis.
inline std::vector<std::array<long, 2>> segment(double deg, long len) {
    const double a = deg * std::numbers::pi / 180.0;
    const double ux = std::cos(a), uy = -std::sin(a);
    const double scale = std::max(std::fabs(ux), std::fabs(uy));
    std::vector<std::array<long, 2>> pts;
    const long start = -((len - 1) / 2);
    for (long i = 0; i < len; ++i) {
        const double k = static_cast<double>(start + i);
        pts.push_back({std::lround(k * uy / scale), std::lround(k * ux / scale)});
    }
    return pts;
}

inline Grid<double> erode(const Grid<double>& g, const std::vector<std::array<long, 2>>& se) {
    const long h = static_cast<long>(g.height()), w = static_cast<long>(g.width());
    Grid<double> out(g.height(), g.width());
    for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c) {
            double m = 1e300;
            for (const auto& p : se) {
                const long rr = std::clamp(r + p[0], 0L, h - 1), cc = std::clamp(c + p[1], 0L, w - 1);
                m = std::min(m, g(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)));
            }
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m;
        }
    return out;
}

/// Iterated elementary geodesic dilation (3x3, 8-connected, no padding)
/// until nothing changes.
inline Grid<double> reconstruct(Grid<double> marker, const Grid<double>& mask) {
    const long h = static_cast<long>(mask.height()), w = static_cast<long>(mask.width());
    for (std::size_t i = 0; i < marker.size(); ++i) marker.values()[i] = std::min(marker.values()[i], mask.values()[i]);
    bool changed = true;
    while (changed) {
        changed = false;
        Grid<double> next(mask.height(), mask.width());
        for (long r = 0; r < h; ++r)
            for (long c = 0; c < w; ++c) {
                double m = -1e300;
                for (long dr = -1; dr <= 1; ++dr)
                    for (long dc = -1; dc <= 1; ++dc) {
                        const long rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                        m = std::max(m, marker(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)));
                    }
                const auto R = static_cast<std::size_t>(r), C = static_cast<std::size_t>(c);
                next(R, C) = std::min(m, mask(R, C));
                if (next(R, C) != marker(R, C)) changed = true;
            }
        marker = std::move(next);
    }
    return marker;
}

inline Grid<double> tophat(const Grid<double>& b, double deg, long len) {
    Grid<double> opened = reconstruct(erode(b, segment(deg, len)), b);
    for (std::size_t i = 0; i < opened.size(); ++i) opened.values()[i] = b.values()[i] - opened.values()[i];
    return opened;
}

/// Mean over directions and adjacent scale pairs of |TH(s + ds) - TH(s)|.
inline Grid<double> mbi_profile(const Tile& t, const std::vector<double>& dirs, long s_min, long s_max, long ds) {
    const Grid<double> b = brightness(t);
    Grid<double> acc(t.height(), t.width(), 0.0);
    int terms = 0;
    for (double d : dirs)
        for (long s = s_min; s + ds <= s_max; s += ds) {
            const Grid<double> lo = tophat(b, d, s), hi = tophat(b, d, s + ds);
            for (std::size_t i = 0; i < acc.size(); ++i) acc.values()[i] += std::fabs(hi.values()[i] - lo.values()[i]);
            ++terms;
        }
    for (double& v : acc) v /= terms;
    return acc;
}

// ---- metrics ----

struct Counts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
};

inline Counts count(const MaskTile& pred, const MaskTile& gt) {
    Counts k;
    for (std::size_t r = 0; r < gt.height(); ++r)
        for (std::size_t c = 0; c < gt.width(); ++c) {
            const int p = pred(r, c), g = gt(r, c);
            if (p == 1 && g == 1) ++k.tp;
            if (p == 0 && g == 0) ++k.tn;
            if (p == 1 && g == 0) ++k.fp;
            if (p == 0 && g == 1) ++k.fn;
        }
    return k;
}

/// Seven metrics; NaN marks a zero denominator. F1 is the harmonic mean
/// of precision and recall.
inline std::array<double, 7> metrics(const Counts& k) {
    const double tp = static_cast<double>(k.tp), tn = static_cast<double>(k.tn), fp = static_cast<double>(k.fp),
                 fn = static_cast<double>(k.fn);
    auto div = [](double a, double b) { return b == 0.0 ? std::nan("") : a / b; };
    const double precision = div(tp, tp + fp), recall = div(tp, tp + fn);
    const double f1 = (std::isnan(precision) || std::isnan(recall)) ? std::nan("")
                                                                    : div(2 * precision * recall, precision + recall);
    return {div(tp + tn, tp + tn + fp + fn), precision, recall, f1, div(fp, tp), div(fn, tp), div(tp, tp + fp + fn)};
}

// ---- random inputs ----

inline Tile random_tile(geoseg::Rng& rng, std::size_t h, std::size_t w, bool binary_bright = false) {
    std::array<Grid<double>, 3> g{Grid<double>(h, w), Grid<double>(h, w), Grid<double>(h, w)};
    for (std::size_t i = 0; i < h * w; ++i) {
        const bool on = rng.uniform() < 0.3;
        for (auto& band : g)
            band.values()[i] = binary_bright ? (on ? 200.0 + static_cast<double>(rng.uniform_int(55)) : static_cast<double>(rng.uniform_int(40)))
                                             : static_cast<double>(rng.uniform_int(255));
    }
    return geoseg::make_rgb_tile(std::move(g[0]), std::move(g[1]), std::move(g[2]));
}

inline MaskTile random_mask(geoseg::Rng& rng, std::size_t h, std::size_t w, double p_one) {
    MaskTile m(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) m.set(r, c, rng.uniform() < p_one);
    return m;
}

inline double max_abs_diff(const Grid<double>& a, const Grid<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.values()[i] - b.values()[i]));
    return m;
}

/// Largest relative error between an analytic gradient and central
/// differences of f at x.
inline double gradient_error(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                             const std::vector<double>& analytic, double h = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double up = f(x);
        x[i] = x0 - h;
        const double down = f(x);
        x[i] = x0;
        const double numeric = (up - down) / (2 * h);
        const double scale = std::max({std::fabs(numeric), std::fabs(analytic[i]), 1e-12});
        worst = std::max(worst, std::fabs(numeric - analytic[i]) / scale);
    }
    return worst;
}

}  // namespace oracle

#endif  // GEOSEG_TESTS_ORACLES_HPP
