#ifndef GEOSEG_TRAINING_LOSS_HPP
#define GEOSEG_TRAINING_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/nn/tensor.hpp"
#include "geoseg/raster/raster.hpp"

namespace geoseg::training {

struct LossConfig {
    double alpha = 1.0;     // Dice weight in the combined loss
    double epsilon = 1e-7;  // probability clamp for the log terms

    void validate() const {
        if (!(alpha >= 0.0)) throw ConfigError("loss alpha must be >= 0");
        if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("loss epsilon must lie in (0, 0.5)");
    }
};

enum class LossKind { Combo, Bce, Dice };

inline std::string_view to_string(LossKind k) {
    switch (k) {
        case LossKind::Combo: return "combo";
        case LossKind::Bce: return "bce";
        case LossKind::Dice: return "dice";
    }
    return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
    if (s == "combo") return LossKind::Combo;
    if (s == "bce") return LossKind::Bce;
    if (s == "dice") return LossKind::Dice;
    throw ConfigError("unknown loss '" + std::string(s) + "' (expected combo, bce or dice)");
}

inline constexpr double kDiceSmooth = 1e-7;

namespace detail {

inline void check_pair(std::span<const double> p, std::span<const std::uint8_t> g) {
    if (p.size() != g.size()) throw ConfigError("loss: prediction and mask sizes differ");
    if (p.empty()) throw ConfigError("loss: empty input");
}

}  // namespace detail

/// Mean binary cross-entropy with p clamped to [eps, 1 - eps]. If `grad`
/// is given, d(loss)/dp is accumulated into it (0 where the clamp is
/// active).
inline double bce_loss(std::span<const double> p, std::span<const std::uint8_t> g, const LossConfig& cfg = {},
                       std::span<double> grad = {}) {
    detail::check_pair(p, g);
    const double eps = cfg.epsilon;
    const double ps = static_cast<double>(p.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], eps, 1.0 - eps);
        sum += g[i] ? std::log(q) : std::log1p(-q);
        if (!grad.empty() && p[i] >= eps && p[i] <= 1.0 - eps) grad[i] += g[i] ? -1.0 / (ps * q) : 1.0 / (ps * (1.0 - q));
    }
    return -sum / ps;
}

/// 1 - (2 sum(pg) + s) / (sum(p^2) + sum(g^2) + s).
inline double dice_loss(std::span<const double> p, std::span<const std::uint8_t> g, std::span<double> grad = {}) {
    detail::check_pair(p, g);
    double inter = 0.0, pp = 0.0, gg = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += p[i] * g[i];
        pp += p[i] * p[i];
        gg += g[i];
    }
    const double num = 2.0 * inter + kDiceSmooth;
    const double den = pp + gg + kDiceSmooth;
    if (!grad.empty()) {
        const double inv = 1.0 / (den * den);
        for (std::size_t i = 0; i < p.size(); ++i) grad[i] -= (2.0 * g[i] * den - num * 2.0 * p[i]) * inv;
    }
    return 1.0 - num / den;
}

inline double loss_value(LossKind kind, std::span<const double> p, std::span<const std::uint8_t> g,
                         const LossConfig& cfg = {}, std::span<double> grad = {}) {
    if (!grad.empty() && grad.size() != p.size()) throw ConfigError("loss: gradient buffer size mismatch");
    switch (kind) {
        case LossKind::Bce: return bce_loss(p, g, cfg, grad);
        case LossKind::Dice: return dice_loss(p, g, grad);
        case LossKind::Combo: break;
    }
    const double b = bce_loss(p, g, cfg, grad);
    if (cfg.alpha == 0.0) return b;
    std::vector<double> dg;
    if (!grad.empty()) dg.assign(p.size(), 0.0);
    const double d = dice_loss(p, g, dg);
    for (std::size_t i = 0; i < dg.size(); ++i) grad[i] += cfg.alpha * dg[i];
    return b + cfg.alpha * d;
}

inline double combo_loss(std::span<const double> p, std::span<const std::uint8_t> g, const LossConfig& cfg = {},
                         std::span<double> grad = {}) {
    return loss_value(LossKind::Combo, p, g, cfg, grad);
}

namespace detail {

inline void check_shapes(const ProbMap& p, const MaskTile& g) {
    if (p.height() != g.height() || p.width() != g.width())
        throw ConfigError("loss: probability map and mask shapes differ");
}

}  // namespace detail

inline double bce_loss(const ProbMap& p, const MaskTile& g, const LossConfig& cfg = {}) {
    detail::check_shapes(p, g);
    return bce_loss(p.data().values(), g.data().values(), cfg);
}

inline double dice_loss(const ProbMap& p, const MaskTile& g) {
    detail::check_shapes(p, g);
    return dice_loss(p.data().values(), g.data().values());
}

inline double combo_loss(const ProbMap& p, const MaskTile& g, const LossConfig& cfg = {}) {
    detail::check_shapes(p, g);
    return combo_loss(p.data().values(), g.data().values(), cfg);
}

/// Batch loss on two-class logits (N, 2, H, W): per-image loss on
/// p = softmax(z)[1], averaged over the batch. If `dlogits` is non-null
/// it receives d(loss)/d(logits).
inline double logits_loss(LossKind kind, const nn::Tensor& logits, std::span<const std::vector<std::uint8_t>> masks,
                          const LossConfig& cfg, nn::Tensor* dlogits = nullptr) {
    if (logits.rank() != 4 || logits.c() != 2) throw ConfigError("loss: logits must be N x 2 x H x W");
    const int n = logits.n();
    if (static_cast<int>(masks.size()) != n) throw ConfigError("loss: batch size and mask count differ");
    const std::size_t plane = static_cast<std::size_t>(logits.h()) * logits.w();
    if (dlogits) *dlogits = nn::Tensor(logits.shape());
    std::vector<double> p(plane), dp(plane);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const float* z0 = logits.data() + (static_cast<std::size_t>(i) * 2) * plane;
        const float* z1 = z0 + plane;
        for (std::size_t k = 0; k < plane; ++k) p[k] = 1.0 / (1.0 + std::exp(static_cast<double>(z0[k]) - z1[k]));
        std::fill(dp.begin(), dp.end(), 0.0);
        total += loss_value(kind, p, masks[static_cast<std::size_t>(i)], cfg, dlogits ? std::span<double>(dp)
                                                                                      : std::span<double>());
        if (dlogits) {
            float* d0 = dlogits->data() + (static_cast<std::size_t>(i) * 2) * plane;
            float* d1 = d0 + plane;
            for (std::size_t k = 0; k < plane; ++k) {
                const double dz = dp[k] * p[k] * (1.0 - p[k]) / n;
                d1[k] = static_cast<float>(dz);
                d0[k] = static_cast<float>(-dz);
            }
        }
    }
    return total / n;
}

}  // namespace geoseg::training

#endif  // GEOSEG_TRAINING_LOSS_HPP
