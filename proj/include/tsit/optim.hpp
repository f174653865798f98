#pragma once

// Adam optimizer with bias correction, operating on named parameter handles.

#include <cmath>
#include <cstdint>
#include <vector>

#include "tsit/layers.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

template <typename T>
struct AdamConfig {
    T lr = T(1e-4);
    T beta1 = T(0);
    T beta2 = T(0.9);
    T eps = T(1e-8);
};

// Standard Adam update with bias-corrected moments:
//   m <- b1 m + (1-b1) g        mhat = m / (1 - b1^t)
//   v <- b2 v + (1-b2) g^2      vhat = v / (1 - b2^t)
//   p <- p - lr * mhat / (sqrt(vhat) + eps)
// With beta1 = 0 the first moment reduces to the raw gradient, so the very
// first step moves each coordinate by lr * |g| / (|g| + eps) ~ lr.
// A parameter whose gradient is absent (never touched by the backward pass)
// is treated as having zero gradient; its value does not move.
template <typename T>
class Adam {
  public:
    Adam(std::vector<TensorRef<T>> params, AdamConfig<T> cfg)
        : params_(std::move(params)), cfg_(cfg) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].tensor.numel(), T(0));
            v_[i].assign(params_[i].tensor.numel(), T(0));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(cfg_.beta1, T(t_));
        const T bc2 = T(1) - std::pow(cfg_.beta2, T(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<T>& p = params_[i].tensor;
            const bool has = p.has_grad();
            const std::vector<T> zero;
            const T* g = has ? p.grad().data() : nullptr;
            T* x = p.data();
            T* m = m_[i].data();
            T* v = v_[i].data();
            const std::size_t n = p.numel();
            for (std::size_t j = 0; j < n; ++j) {
                const T gj = has ? g[j] : T(0);
                m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * gj;
                v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * gj * gj;
                const T mhat = m[j] / bc1;
                const T vhat = v[j] / bc2;
                x[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    const std::vector<TensorRef<T>>& params() const { return params_; }
    const AdamConfig<T>& config() const { return cfg_; }
    std::uint64_t step_count() const { return t_; }

    // direct state access for checkpointing
    std::vector<std::vector<T>>& m_state() { return m_; }
    std::vector<std::vector<T>>& v_state() { return v_; }
    void set_step_count(std::uint64_t t) { t_ = t; }

  private:
    std::vector<TensorRef<T>> params_;
    AdamConfig<T> cfg_;
    std::vector<std::vector<T>> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace tsit
