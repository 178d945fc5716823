#ifndef GEOSEG_NN_LAYERS_HPP
#define GEOSEG_NN_LAYERS_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "geoseg/core/rng.hpp"
#include "geoseg/nn/ops.hpp"
#include "geoseg/nn/tensor.hpp"

namespace geoseg::nn {

/// Receives every parameter and buffer of a module tree.
struct ParamVisitor {
    std::vector<Parameter*> params;
    std::vector<Buffer> buffers;
};

/// He (Kaiming) normal: N(0, 2 / fan_in).
inline Tensor he_normal(Rng& rng, std::vector<int> shape, int fan_in) {
    Tensor t(std::move(shape));
    const double stddev = std::sqrt(2.0 / fan_in);
    for (float& v : t.values()) v = static_cast<float>(rng.normal(0.0, stddev));
    return t;
}

struct Conv2d {
    Parameter weight;
    std::optional<Parameter> bias;
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(Rng& rng, const std::string& name, const std::string& group, int in, int out, int kernel, int stride_,
           int pad_, bool with_bias)
        : weight(name + ".weight", group, he_normal(rng, {out, in, kernel, kernel}, in * kernel * kernel)),
          stride(stride_), pad(pad_) {
        if (with_bias) bias.emplace(name + ".bias", group, Tensor({out}));
    }

    int in_channels() const { return weight.value.dim(1); }
    int out_channels() const { return weight.value.dim(0); }

    Var operator()(Context& ctx, const Var& x) { return conv2d(ctx, x, weight, bias ? &*bias : nullptr, stride, pad); }

    void visit(ParamVisitor& v) {
        v.params.push_back(&weight);
        if (bias) v.params.push_back(&*bias);
    }
};

/// Batch normalisation over (N, H, W) per channel. A frozen (non-trainable)
/// instance always normalises with its running statistics and never
/// updates them.
struct BatchNorm2d {
    Parameter gamma;
    Parameter beta;
    Tensor running_mean;
    Tensor running_var;
    std::string name;
    float momentum = 0.1f;
    float eps = 1e-5f;

    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name_, const std::string& group, int channels, float gamma_init = 1.0f)
        : gamma(name_ + ".weight", group, Tensor({channels}, gamma_init)),
          beta(name_ + ".bias", group, Tensor({channels})), running_mean({channels}),
          running_var({channels}, 1.0f), name(name_) {}

    Var operator()(Context& ctx, const Var& x) {
        const Tensor& in = x->value;
        if (in.c() != gamma.value.dim(0)) throw ConfigError("batch norm '" + name + "': channel mismatch");
        const int channels = in.c();
        const std::size_t plane = static_cast<std::size_t>(in.h()) * in.w();
        const std::size_t per_channel = plane * in.n();
        const bool batch_stats = ctx.training && gamma.trainable;
        Var out = make_var(Tensor(in.shape()), x->requires_grad || gamma.trainable || beta.trainable);

        auto inv_std = std::make_shared<std::vector<float>>(channels);
        std::shared_ptr<Tensor> xhat;
        if (batch_stats) xhat = std::make_shared<Tensor>(in.shape());

        for (int c = 0; c < channels; ++c) {
            double mean, var;
            if (batch_stats) {
                double sum = 0.0, sq = 0.0;
                for (int n = 0; n < in.n(); ++n) {
                    const float* p = in.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) sum += p[i];
                }
                mean = sum / static_cast<double>(per_channel);
                for (int n = 0; n < in.n(); ++n) {
                    const float* p = in.data() + (static_cast<std::size_t>(n) * channels + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
                }
                var = sq / static_cast<double>(per_channel);
                const double unbiased = per_channel > 1 ? var * per_channel / (per_channel - 1) : var;
                running_mean[c] = static_cast<float>((1.0 - momentum) * running_mean[c] + momentum * mean);
                running_var[c] = static_cast<float>((1.0 - momentum) * running_var[c] + momentum * unbiased);
            } else {
                mean = running_mean[c];
                var = running_var[c];
            }
            const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
            (*inv_std)[c] = is;
            const float g = gamma.value[c], b = beta.value[c], m = static_cast<float>(mean);
            for (int n = 0; n < in.n(); ++n) {
                const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const float xh = (in[base + i] - m) * is;
                    if (xhat) (*xhat)[base + i] = xh;
                    out->value[base + i] = g * xh + b;
                }
            }
        }

        if (ctx.recording() && out->requires_grad) {
            ctx.tape->record([this, x, out, inv_std, xhat, plane, per_channel] {
                if (out->grad.empty()) return;
                const Tensor& in = x->value;
                const Tensor& dy = out->grad;
                const int channels = in.c();
                for (int c = 0; c < channels; ++c) {
                    const float is = (*inv_std)[c];
                    const float mean = xhat ? 0.0f : running_mean[c];
                    double sum_dy = 0.0, sum_dy_xh = 0.0;
                    for (int n = 0; n < in.n(); ++n) {
                        const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            const float xh = xhat ? (*xhat)[base + i] : (in[base + i] - mean) * is;
                            sum_dy += dy[base + i];
                            sum_dy_xh += static_cast<double>(dy[base + i]) * xh;
                        }
                    }
                    if (gamma.trainable) gamma.grad[c] += static_cast<float>(sum_dy_xh);
                    if (beta.trainable) beta.grad[c] += static_cast<float>(sum_dy);
                    if (!x->requires_grad) continue;
                    auto& dx = x->grad_buffer();
                    const float g = gamma.value[c];
                    if (xhat) {
                        const double m = static_cast<double>(per_channel);
                        const float k = static_cast<float>(g * is / m);
                        for (int n = 0; n < in.n(); ++n) {
                            const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
                            for (std::size_t i = 0; i < plane; ++i) {
                                const double term = m * dy[base + i] - sum_dy - (*xhat)[base + i] * sum_dy_xh;
                                dx[base + i] += static_cast<float>(k * term);
                            }
                        }
                    } else {
                        const float k = g * is;
                        for (int n = 0; n < in.n(); ++n) {
                            const std::size_t base = (static_cast<std::size_t>(n) * channels + c) * plane;
                            for (std::size_t i = 0; i < plane; ++i) dx[base + i] += k * dy[base + i];
                        }
                    }
                }
            });
        }
        return out;
    }

    void visit(ParamVisitor& v) {
        v.params.push_back(&gamma);
        v.params.push_back(&beta);
        v.buffers.push_back({name + ".running_mean", &running_mean});
        v.buffers.push_back({name + ".running_var", &running_var});
    }
};

/// conv -> batch norm -> optional ReLU.
struct ConvLayer {
    Conv2d conv;
    BatchNorm2d bn;
    bool activate = true;

    ConvLayer() = default;
    ConvLayer(Rng& rng, const std::string& name, const std::string& group, int in, int out, int kernel, int stride,
              bool act = true)
        : conv(rng, name + ".0", group, in, out, kernel, stride, kernel / 2, false),
          bn(name + ".1", group, out), activate(act) {}

    Var operator()(Context& ctx, const Var& x) {
        Var y = bn(ctx, conv(ctx, x));
        return activate ? relu(ctx, y) : y;
    }

    void visit(ParamVisitor& v) {
        conv.visit(v);
        bn.visit(v);
    }
};

/// Two-conv residual block of a 34-layer residual encoder, with an
/// optional strided 1x1 projection on the shortcut. The second batch norm
/// starts at zero so each block is initially the identity.
struct BasicBlock {
    Conv2d conv1;
    BatchNorm2d bn1;
    Conv2d conv2;
    BatchNorm2d bn2;
    std::optional<Conv2d> down_conv;
    std::optional<BatchNorm2d> down_bn;

    BasicBlock() = default;
    BasicBlock(Rng& rng, const std::string& name, const std::string& group, int in, int out, int stride)
        : conv1(rng, name + ".conv1", group, in, out, 3, stride, 1, false), bn1(name + ".bn1", group, out),
          conv2(rng, name + ".conv2", group, out, out, 3, 1, 1, false), bn2(name + ".bn2", group, out, 0.0f) {
        if (stride != 1 || in != out) {
            down_conv.emplace(rng, name + ".downsample.0", group, in, out, 1, stride, 0, false);
            down_bn.emplace(name + ".downsample.1", group, out);
        }
    }

    Var operator()(Context& ctx, const Var& x) {
        Var y = relu(ctx, bn1(ctx, conv1(ctx, x)));
        y = bn2(ctx, conv2(ctx, y));
        Var shortcut = down_conv ? (*down_bn)(ctx, (*down_conv)(ctx, x)) : x;
        return relu(ctx, add(ctx, y, shortcut));
    }

    void visit(ParamVisitor& v) {
        conv1.visit(v);
        bn1.visit(v);
        conv2.visit(v);
        bn2.visit(v);
        if (down_conv) {
            down_conv->visit(v);
            down_bn->visit(v);
        }
    }
};

/// 1x1 conv to out*r*r channels, ReLU, periodic shuffle by r. Initialised
/// ICNR-style: the r*r sub-kernels of each output channel start equal, so
/// the upsampled map begins as a nearest-neighbour enlargement.
struct ShuffleUpsample {
    Conv2d conv;
    int factor = 2;

    ShuffleUpsample() = default;
    ShuffleUpsample(Rng& rng, const std::string& name, const std::string& group, int in, int out, int r = 2)
        : conv(rng, name + ".conv", group, in, out * r * r, 1, 1, 0, true), factor(r) {
        const Tensor base = he_normal(rng, {out, in, 1, 1}, in);
        Tensor& w = conv.weight.value;
        for (int o = 0; o < out; ++o)
            for (int k = 0; k < r * r; ++k)
                for (int i = 0; i < in; ++i) w.at(o * r * r + k, i, 0, 0) = base.at(o, i, 0, 0);
    }

    Var operator()(Context& ctx, const Var& x) { return pixel_shuffle(ctx, relu(ctx, conv(ctx, x)), factor); }

    void visit(ParamVisitor& v) { conv.visit(v); }
};

}  // namespace geoseg::nn

#endif  // GEOSEG_NN_LAYERS_HPP
