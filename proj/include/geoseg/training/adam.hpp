#ifndef GEOSEG_TRAINING_ADAM_HPP
#define GEOSEG_TRAINING_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/nn/tensor.hpp"

namespace geoseg::training {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("adam betas must lie in [0,1)");
        if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
    }
};

/// Adam with bias correction. Moments live in each Parameter; only
/// trainable parameters are touched, so frozen ones stay bit-identical.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    void step(const std::vector<nn::Parameter*>& params, double lr, double beta1) {
        ++t_;
        const double b2 = cfg_.beta2;
        // bias corrections fold into the step size and epsilon
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        const float step_size = static_cast<float>(lr / c1);
        const float sqrt_c2 = static_cast<float>(std::sqrt(c2));
        const float eps = static_cast<float>(cfg_.eps);
        const float fb1 = static_cast<float>(beta1), fb2 = static_cast<float>(b2);
        for (auto* p : params) {
            if (!p->trainable) continue;
            float* w = p->value.data();
            const float* g = p->grad.data();
            float* m = p->adam_m.data();
            float* v = p->adam_v.data();
            for (std::size_t i = 0, n = p->value.numel(); i < n; ++i) {
                m[i] = fb1 * m[i] + (1.0f - fb1) * g[i];
                v[i] = fb2 * v[i] + (1.0f - fb2) * g[i] * g[i];
                w[i] -= step_size * m[i] / (std::sqrt(v[i]) / sqrt_c2 + eps);
            }
        }
    }

    void step(const std::vector<nn::Parameter*>& params, double lr) { step(params, lr, cfg_.beta1); }

    static void zero_grad(const std::vector<nn::Parameter*>& params) {
        for (auto* p : params) p->grad.zero();
    }

    std::int64_t step_count() const noexcept { return t_; }
    void set_step_count(std::int64_t t) noexcept { t_ = t; }
    const AdamConfig& config() const noexcept { return cfg_; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

}  // namespace geoseg::training

#endif  // GEOSEG_TRAINING_ADAM_HPP
