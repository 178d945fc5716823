#ifndef GEOSEG_FEATURES_PCA_HPP
#define GEOSEG_FEATURES_PCA_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "geoseg/raster/raster.hpp"

namespace geoseg::features {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

struct SymmetricEigen3 {
    Vec3 values{};                 // descending
    std::array<Vec3, 3> vectors{};  // vectors[k] pairs with values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix.
inline SymmetricEigen3 eigen_symmetric3(Mat3 a) {
    Mat3 v{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    for (int sweep = 0; sweep < 64; ++sweep) {
        const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        const double diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if (off <= 1e-30 * diag || off == 0.0) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int i, int j) { return a[i][i] > a[j][j]; });
    SymmetricEigen3 out;
    for (int k = 0; k < 3; ++k) {
        out.values[k] = a[order[k]][order[k]];
        for (int r = 0; r < 3; ++r) out.vectors[k][r] = v[r][order[k]];
    }
    return out;
}

struct PcaResult {
    Band pc1;
    Vec3 mean{};
    Mat3 covariance{};
    SymmetricEigen3 eigen;
    bool degenerate = false;  // zero covariance: pc1 is all zeros
};

/// Population covariance of the three bands over all pixels.
inline std::pair<Vec3, Mat3> band_covariance(const Tile& tile) {
    const std::size_t n = tile.height() * tile.width();
    Vec3 mean{};
    for (int b = 0; b < 3; ++b) {
        double sum = 0.0;
        for (double v : tile.bands[b].data) sum += v;
        mean[b] = sum / static_cast<double>(n);
    }
    Mat3 cov{};
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 d;
        for (int b = 0; b < 3; ++b) d[b] = tile.bands[b].data.values()[i] - mean[b];
        for (int r = 0; r < 3; ++r)
            for (int c = r; c < 3; ++c) cov[r][c] += d[r] * d[c];
    }
    for (int r = 0; r < 3; ++r)
        for (int c = r; c < 3; ++c) {
            cov[r][c] /= static_cast<double>(n);
            cov[c][r] = cov[r][c];
        }
    return {mean, cov};
}

/// First principal component of a 3-band tile, computed per image.
///
/// Bands are mean-centred and projected onto the leading eigenvector of
/// their covariance. The eigenvector sign is chosen so that its sum of
/// components is non-negative (brighter pixels map to larger PC1).
inline PcaResult pc1(const Tile& tile) {
    if (tile.band_count() != 3) throw ConfigError("pc1: expects a 3-band tile");
    PcaResult result;
    std::tie(result.mean, result.covariance) = band_covariance(tile);
    const auto& cov = result.covariance;
    const double trace = cov[0][0] + cov[1][1] + cov[2][2];

    Grid<double> out(tile.height(), tile.width(), 0.0);
    if (trace == 0.0) {
        result.degenerate = true;
        result.pc1 = Band(std::move(out), {0.0, 0.0}, "PC1");
        return result;
    }

    result.eigen = eigen_symmetric3(cov);
    for (auto& vec : result.eigen.vectors) {
        double dot = vec[0] + vec[1] + vec[2];
        if (dot == 0.0) dot = vec[0] != 0.0 ? vec[0] : (vec[1] != 0.0 ? vec[1] : vec[2]);
        if (dot < 0.0)
            for (auto& x : vec) x = -x;
    }
    const Vec3& lead = result.eigen.vectors[0];
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        double p = 0.0;
        for (int b = 0; b < 3; ++b) p += lead[b] * (tile.bands[b].data.values()[i] - result.mean[b]);
        dst[i] = p;
    }
    result.pc1 = Band(std::move(out), {}, "PC1");
    result.pc1.range = result.pc1.observed_range();
    return result;
}

}  // namespace geoseg::features

#endif  // GEOSEG_FEATURES_PCA_HPP
