#ifndef GEOSEG_NN_TENSOR_HPP
#define GEOSEG_NN_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "geoseg/core/error.hpp"

namespace geoseg::nn {

/// Float storage with a fixed base alignment, so vectorised kernels take
/// the same code path (and summation order) on every run.
using FloatStore = std::vector<float, Eigen::aligned_allocator<float>>;

/// Dense float tensor, row-major. Activations use NCHW.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, float fill = 0.0f)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}
    Tensor(std::vector<int> shape, const std::vector<float>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (data_.size() != count(shape_)) throw ConfigError("tensor data does not match its shape");
    }

    static Tensor nchw(int n, int c, int h, int w, float fill = 0.0f) { return Tensor({n, c, h, w}, fill); }

    const std::vector<int>& shape() const noexcept { return shape_; }
    int dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    int n() const { return shape_.at(0); }
    int c() const { return shape_.at(1); }
    int h() const { return shape_.at(2); }
    int w() const { return shape_.at(3); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    float& at(int n, int c, int h, int w) noexcept { return data_[offset(n, c, h, w)]; }
    float at(int n, int c, int h, int w) const noexcept { return data_[offset(n, c, h, w)]; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0f); }

    bool same_shape(const Tensor& o) const noexcept { return shape_ == o.shape_; }

    std::string shape_string() const {
        std::string s;
        for (std::size_t i = 0; i < shape_.size(); ++i) s += (i ? "x" : "") + std::to_string(shape_[i]);
        return s;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ConfigError("tensor dimensions must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

private:
    std::size_t offset(int n, int c, int h, int w) const noexcept {
        return ((static_cast<std::size_t>(n) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(c)) *
                    static_cast<std::size_t>(shape_[2]) +
                static_cast<std::size_t>(h)) *
                   static_cast<std::size_t>(shape_[3]) +
               static_cast<std::size_t>(w);
    }

    std::vector<int> shape_;
    FloatStore data_;
};

/// A learnable tensor with its gradient and Adam moments. `group` names
/// the freeze unit it belongs to.
struct Parameter {
    std::string name;
    std::string group;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string param_name, std::string param_group, Tensor init)
        : name(std::move(param_name)), group(std::move(param_group)), value(std::move(init)),
          grad(value.shape()), adam_m(value.shape()), adam_v(value.shape()) {}
};

/// Non-learnable state that still belongs in checkpoints (BN statistics).
struct Buffer {
    std::string name;
    Tensor* value = nullptr;
};

// ---- reverse-mode autodiff over activations ----

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;

    Tensor& grad_buffer() {
        if (grad.empty()) grad = Tensor(value.shape());
        return grad;
    }
};

using Var = std::shared_ptr<Node>;

inline Var make_var(Tensor value, bool requires_grad = false) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return node;
}

/// Records backward closures in execution order; replayed in reverse.
class Tape {
public:
    void record(std::function<void()> fn) { steps_.push_back(std::move(fn)); }

    /// Seed d(loss)/d(root) and propagate to every recorded input.
    void backward(const Var& root, const Tensor& seed) {
        if (!root->value.same_shape(seed)) throw ConfigError("backward: seed gradient shape mismatch");
        root->grad = seed;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
        steps_.clear();
    }

    std::size_t size() const noexcept { return steps_.size(); }
    void clear() { steps_.clear(); }

private:
    std::vector<std::function<void()>> steps_;
};

/// Forward-pass mode. Without a tape nothing is recorded (inference).
struct Context {
    bool training = false;
    Tape* tape = nullptr;

    bool recording() const noexcept { return tape != nullptr; }
};

}  // namespace geoseg::nn

#endif  // GEOSEG_NN_TENSOR_HPP
