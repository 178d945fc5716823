#ifndef GEOSEG_NN_OPS_HPP
#define GEOSEG_NN_OPS_HPP

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <vector>

#include "geoseg/core/error.hpp"
#include "geoseg/nn/tensor.hpp"

namespace geoseg::nn {

namespace detail {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
    int channels, height, width, kernel, stride, pad, out_h, out_w;

    int rows() const noexcept { return channels * kernel * kernel; }
    int cols() const noexcept { return out_h * out_w; }
    bool pointwise() const noexcept { return kernel == 1 && stride == 1 && pad == 0; }
};

inline void im2col(const float* x, const ConvGeometry& g, float* col) {
    const int k = g.kernel;
    for (int c = 0; c < g.channels; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                float* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * g.cols();
                for (int oh = 0; oh < g.out_h; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    float* dst = row + static_cast<std::size_t>(oh) * g.out_w;
                    if (ih < 0 || ih >= g.height) {
                        std::fill(dst, dst + g.out_w, 0.0f);
                        continue;
                    }
                    const float* src = x + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        dst[ow] = (iw < 0 || iw >= g.width) ? 0.0f : src[iw];
                    }
                }
            }
        }
    }
}

inline void col2im_add(const float* col, const ConvGeometry& g, float* dx) {
    const int k = g.kernel;
    for (int c = 0; c < g.channels; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const float* row = col + static_cast<std::size_t>((c * k + ki) * k + kj) * g.cols();
                for (int oh = 0; oh < g.out_h; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    if (ih < 0 || ih >= g.height) continue;
                    const float* src = row + static_cast<std::size_t>(oh) * g.out_w;
                    float* dst = dx + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

inline FloatStore& scratch() {
    thread_local FloatStore buffer;
    return buffer;
}

inline void require_rank4(const Tensor& t, const char* who) {
    if (t.rank() != 4) throw ConfigError(std::string(who) + ": expects an NCHW tensor");
}

}  // namespace detail

/// 2-D convolution, zero padding. Weight is (out, in, k, k); bias (out).
inline Var conv2d(Context& ctx, const Var& x, Parameter& weight, Parameter* bias, int stride, int pad) {
    detail::require_rank4(x->value, "conv2d");
    const Tensor& in = x->value;
    const int out_c = weight.value.dim(0);
    const int k = weight.value.dim(2);
    if (weight.value.dim(1) != in.c())
        throw ConfigError("conv2d '" + weight.name + "': input has " + std::to_string(in.c()) + " channels, expected " +
                          std::to_string(weight.value.dim(1)));
    const detail::ConvGeometry g{in.c(), in.h(), in.w(), k, stride, pad,
                                 (in.h() + 2 * pad - k) / stride + 1, (in.w() + 2 * pad - k) / stride + 1};
    if (g.out_h <= 0 || g.out_w <= 0) throw ConfigError("conv2d: input too small for kernel");

    const int batch = in.n();
    Var out = make_var(Tensor::nchw(batch, out_c, g.out_h, g.out_w));
    out->requires_grad = x->requires_grad || weight.trainable || (bias && bias->trainable);

    const detail::ConstMapMat wmat(weight.value.data(), out_c, g.rows());
    auto& col = detail::scratch();
    const std::size_t in_stride = static_cast<std::size_t>(in.c()) * in.h() * in.w();
    const std::size_t out_stride = static_cast<std::size_t>(out_c) * g.cols();
    for (int n = 0; n < batch; ++n) {
        const float* xn = in.data() + n * in_stride;
        detail::MapMat y(out->value.data() + n * out_stride, out_c, g.cols());
        if (g.pointwise()) {
            y.noalias() = wmat * detail::ConstMapMat(xn, g.rows(), g.cols());
        } else {
            col.resize(static_cast<std::size_t>(g.rows()) * g.cols());
            detail::im2col(xn, g, col.data());
            y.noalias() = wmat * detail::ConstMapMat(col.data(), g.rows(), g.cols());
        }
        if (bias) {
            const Eigen::Map<const Eigen::VectorXf> b(bias->value.data(), out_c);
            y.colwise() += b;
        }
    }

    if (ctx.recording() && out->requires_grad) {
        ctx.tape->record([x, out, &weight, bias, g, in_stride, out_stride, out_c, batch] {
            if (out->grad.empty()) return;
            const detail::ConstMapMat wmat(weight.value.data(), out_c, g.rows());
            auto& col = detail::scratch();
            FloatStore dcol;
            for (int n = 0; n < batch; ++n) {
                const detail::ConstMapMat dy(out->grad.data() + n * out_stride, out_c, g.cols());
                const float* xn = x->value.data() + n * in_stride;
                if (weight.trainable) {
                    detail::MapMat dw(weight.grad.data(), out_c, g.rows());
                    if (g.pointwise()) {
                        dw.noalias() += dy * detail::ConstMapMat(xn, g.rows(), g.cols()).transpose();
                    } else {
                        col.resize(static_cast<std::size_t>(g.rows()) * g.cols());
                        detail::im2col(xn, g, col.data());
                        dw.noalias() += dy * detail::ConstMapMat(col.data(), g.rows(), g.cols()).transpose();
                    }
                }
                if (bias && bias->trainable) {
                    const float* dyn = out->grad.data() + n * out_stride;
                    for (int o = 0; o < out_c; ++o) {
                        double sum = 0.0;
                        for (int k = 0; k < g.cols(); ++k) sum += dyn[static_cast<std::size_t>(o) * g.cols() + k];
                        bias->grad[o] += static_cast<float>(sum);
                    }
                }
                if (x->requires_grad) {
                    float* dxn = x->grad_buffer().data() + n * in_stride;
                    if (g.pointwise()) {
                        detail::MapMat dx(dxn, g.rows(), g.cols());
                        dx.noalias() += wmat.transpose() * dy;
                    } else {
                        dcol.resize(static_cast<std::size_t>(g.rows()) * g.cols());
                        detail::MapMat dc(dcol.data(), g.rows(), g.cols());
                        dc.noalias() = wmat.transpose() * dy;
                        detail::col2im_add(dcol.data(), g, dxn);
                    }
                }
            }
        });
    }
    return out;
}

inline Var relu(Context& ctx, const Var& x) {
    Var out = make_var(x->value, x->requires_grad);
    for (float& v : out->value.values()) v = v > 0.0f ? v : 0.0f;
    if (ctx.recording() && out->requires_grad) {
        ctx.tape->record([x, out] {
            if (out->grad.empty()) return;
            auto& dx = x->grad_buffer();
            for (std::size_t i = 0; i < dx.numel(); ++i)
                if (out->value[i] > 0.0f) dx[i] += out->grad[i];
        });
    }
    return out;
}

inline Var add(Context& ctx, const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value)) throw ConfigError("add: shape mismatch");
    Var out = make_var(a->value, a->requires_grad || b->requires_grad);
    auto dst = out->value.values();
    const auto src = b->value.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    if (ctx.recording() && out->requires_grad) {
        ctx.tape->record([a, b, out] {
            if (out->grad.empty()) return;
            for (const Var* v : {&a, &b}) {
                if (!(*v)->requires_grad) continue;
                auto& d = (*v)->grad_buffer();
                for (std::size_t i = 0; i < d.numel(); ++i) d[i] += out->grad[i];
            }
        });
    }
    return out;
}

/// Channel-wise concatenation [a, b].
inline Var concat(Context& ctx, const Var& a, const Var& b) {
    const Tensor& ta = a->value;
    const Tensor& tb = b->value;
    if (ta.n() != tb.n() || ta.h() != tb.h() || ta.w() != tb.w())
        throw ConfigError("concat: incompatible shapes " + ta.shape_string() + " and " + tb.shape_string());
    const std::size_t plane = static_cast<std::size_t>(ta.h()) * ta.w();
    const std::size_t sa = ta.c() * plane, sb = tb.c() * plane;
    Var out = make_var(Tensor::nchw(ta.n(), ta.c() + tb.c(), ta.h(), ta.w()), a->requires_grad || b->requires_grad);
    for (int n = 0; n < ta.n(); ++n) {
        float* dst = out->value.data() + n * (sa + sb);
        std::copy_n(ta.data() + n * sa, sa, dst);
        std::copy_n(tb.data() + n * sb, sb, dst + sa);
    }
    if (ctx.recording() && out->requires_grad) {
        ctx.tape->record([a, b, out, sa, sb] {
            if (out->grad.empty()) return;
            const int batch = out->value.n();
            for (int n = 0; n < batch; ++n) {
                const float* g = out->grad.data() + n * (sa + sb);
                if (a->requires_grad) {
                    float* d = a->grad_buffer().data() + n * sa;
                    for (std::size_t i = 0; i < sa; ++i) d[i] += g[i];
                }
                if (b->requires_grad) {
                    float* d = b->grad_buffer().data() + n * sb;
                    for (std::size_t i = 0; i < sb; ++i) d[i] += g[sa + i];
                }
            }
        });
    }
    return out;
}

/// Periodic shuffle of (N, C*r*r, H, W) into (N, C, r*H, r*W):
/// out[c, r*h + i, r*w + j] = in[c*r*r + i*r + j, h, w].
inline Tensor pixel_shuffle(const Tensor& in, int r) {
    detail::require_rank4(in, "pixel_shuffle");
    if (r < 1 || in.c() % (r * r) != 0) throw ConfigError("pixel_shuffle: channels not divisible by r^2");
    const int oc = in.c() / (r * r);
    Tensor out = Tensor::nchw(in.n(), oc, in.h() * r, in.w() * r);
    for (int n = 0; n < in.n(); ++n)
        for (int c = 0; c < oc; ++c)
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j)
                    for (int h = 0; h < in.h(); ++h)
                        for (int w = 0; w < in.w(); ++w)
                            out.at(n, c, r * h + i, r * w + j) = in.at(n, c * r * r + i * r + j, h, w);
    return out;
}

/// Inverse of pixel_shuffle.
inline Tensor pixel_unshuffle(const Tensor& in, int r) {
    detail::require_rank4(in, "pixel_unshuffle");
    if (r < 1 || in.h() % r != 0 || in.w() % r != 0) throw ConfigError("pixel_unshuffle: size not divisible by r");
    const int h = in.h() / r, w = in.w() / r;
    Tensor out = Tensor::nchw(in.n(), in.c() * r * r, h, w);
    for (int n = 0; n < in.n(); ++n)
        for (int c = 0; c < in.c(); ++c)
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < r; ++j)
                    for (int y = 0; y < h; ++y)
                        for (int x = 0; x < w; ++x)
                            out.at(n, c * r * r + i * r + j, y, x) = in.at(n, c, r * y + i, r * x + j);
    return out;
}

inline Var pixel_shuffle(Context& ctx, const Var& x, int r) {
    Var out = make_var(pixel_shuffle(x->value, r), x->requires_grad);
    if (ctx.recording() && out->requires_grad) {
        ctx.tape->record([x, out, r] {
            if (out->grad.empty()) return;
            const Tensor back = pixel_unshuffle(out->grad, r);
            auto& d = x->grad_buffer();
            for (std::size_t i = 0; i < d.numel(); ++i) d[i] += back[i];
        });
    }
    return out;
}

/// Max pooling with -inf padding.
inline Var max_pool(Context& ctx, const Var& x, int kernel, int stride, int pad) {
    detail::require_rank4(x->value, "max_pool");
    const Tensor& in = x->value;
    const int oh = (in.h() + 2 * pad - kernel) / stride + 1;
    const int ow = (in.w() + 2 * pad - kernel) / stride + 1;
    Var out = make_var(Tensor::nchw(in.n(), in.c(), oh, ow), x->requires_grad);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out->value.numel());
    std::size_t o = 0;
    for (int n = 0; n < in.n(); ++n) {
        for (int c = 0; c < in.c(); ++c) {
            const std::size_t plane = (static_cast<std::size_t>(n) * in.c() + c) * in.h() * in.w();
            for (int y = 0; y < oh; ++y) {
                for (int xw = 0; xw < ow; ++xw, ++o) {
                    float best = -std::numeric_limits<float>::infinity();
                    std::size_t best_i = plane;
                    for (int ki = 0; ki < kernel; ++ki) {
                        const int iy = y * stride - pad + ki;
                        if (iy < 0 || iy >= in.h()) continue;
                        for (int kj = 0; kj < kernel; ++kj) {
                            const int ix = xw * stride - pad + kj;
                            if (ix < 0 || ix >= in.w()) continue;
                            const std::size_t idx = plane + static_cast<std::size_t>(iy) * in.w() + ix;
                            if (in[idx] > best) {
                                best = in[idx];
                                best_i = idx;
                            }
                        }
                    }
                    out->value[o] = best;
                    (*argmax)[o] = best_i;
                }
            }
        }
    }
    if (ctx.recording() && out->requires_grad) {
        ctx.tape->record([x, out, argmax] {
            if (out->grad.empty()) return;
            auto& d = x->grad_buffer();
            for (std::size_t i = 0; i < argmax->size(); ++i) d[(*argmax)[i]] += out->grad[i];
        });
    }
    return out;
}

}  // namespace geoseg::nn

#endif  // GEOSEG_NN_OPS_HPP
