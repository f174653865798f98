#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsit/conv.hpp"
#include "tsit/ops.hpp"
#include "tsit/rng.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

// named handle to a trainable parameter (shares storage with the module)
template <typename T>
struct TensorRef {
    std::string name;
    Tensor<T> tensor;
};

// named handle to persistent non-trainable state (running stats, sn_u)
template <typename T>
struct BufferRef {
    std::string name;
    std::vector<T>* data;
    Shape shape;
};

inline constexpr double kNormEps = 1e-5;

// gain for fan-in-scaled Gaussian init under LReLU(slope)
template <typename T>
inline T lrelu_gain(T slope = T(0.2)) {
    return std::sqrt(T(2) / (T(1) + slope * slope));
}

enum class InitScheme { FanInGaussian, Zeros };

template <typename T>
Tensor<T> init_params(Shape shape, InitScheme scheme, std::uint64_t seed, T gain = lrelu_gain<T>()) {
    const std::size_t n = shape_numel(shape);
    std::vector<T> v(n, T(0));
    if (scheme == InitScheme::FanInGaussian) {
        std::size_t fan_in = 1;
        if (shape.size() >= 2) {
            for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
        } else if (!shape.empty()) {
            fan_in = shape[0];
        }
        const T std_dev = gain / std::sqrt(static_cast<T>(fan_in));
        Rng rng(seed);
        for (auto& x : v) x = static_cast<T>(rng.normal()) * std_dev;
    }
    return Tensor<T>::from(std::move(shape), std::move(v), /*requires_grad=*/true);
}

// ---------------------------------------------------------------------------
// batch / instance statistics (Eq. 2 mean over N,H,W; Eq. 3 population std
// with the stabilizer under the root)
// ---------------------------------------------------------------------------

// per-channel (mu, sigma), each shaped [C]; stays on the tape
template <typename T>
std::pair<Tensor<T>, Tensor<T>> batch_stats(const Tensor<T>& z, T eps = T(kNormEps)) {
    if (z.ndim() != 4) throw ShapeError("batch_stats expects [N,C,H,W], got " + shape_str(z.shape()));
    Tensor<T> mu = mean_axes(z, {0, 2, 3});
    Tensor<T> var = variance_axes(z, {0, 2, 3});
    Tensor<T> sigma = sqrt(add_scalar(var, eps));
    return {mu, sigma};
}

// per-(n,c) standardization; statistics always from the current input
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& z, T eps = T(kNormEps)) {
    if (z.ndim() != 4) throw ShapeError("instance_norm expects [N,C,H,W], got " + shape_str(z.shape()));
    Tensor<T> mu = mean_axes(z, {2, 3}, /*keepdims=*/true);
    Tensor<T> var = variance_axes(z, {2, 3}, /*keepdims=*/true);
    Tensor<T> sigma = sqrt(add_scalar(var, eps));
    return div(sub(z, mu), sigma);
}

// Parameter-free batch normalization (the Eq. 1 inner fraction). Batch
// statistics are used (and stay on the tape) in training mode; running
// statistics, updated with momentum, serve inference.
template <typename T>
class BatchNorm {
  public:
    BatchNorm() = default;
    explicit BatchNorm(std::size_t channels, T eps = T(kNormEps), T momentum = T(0.1))
        : channels_(channels),
          eps_(eps),
          momentum_(momentum),
          running_mean_(channels, T(0)),
          running_std_(channels, T(1)) {}

    Tensor<T> forward(const Tensor<T>& z, bool training) {
        if (z.ndim() != 4 || z.dim(1) != channels_) {
            throw ShapeError("batch norm: expected [N," + std::to_string(channels_) +
                             ",H,W], got " + shape_str(z.shape()));
        }
        if (training) {
            Tensor<T> mu = mean_axes(z, {0, 2, 3}, true);
            Tensor<T> var = variance_axes(z, {0, 2, 3}, true);
            Tensor<T> sigma = sqrt(add_scalar(var, eps_));
            for (std::size_t c = 0; c < channels_; ++c) {
                running_mean_[c] = (T(1) - momentum_) * running_mean_[c] + momentum_ * mu.data()[c];
                running_std_[c] = (T(1) - momentum_) * running_std_[c] + momentum_ * sigma.data()[c];
            }
            return div(sub(z, mu), sigma);
        }
        Tensor<T> mu = Tensor<T>::from({1, channels_, 1, 1}, running_mean_);
        Tensor<T> sigma = Tensor<T>::from({1, channels_, 1, 1}, running_std_);
        return div(sub(z, mu), sigma);
    }

    std::size_t channels() const { return channels_; }

    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        out.push_back({prefix + ".running_mean", &running_mean_, Shape{channels_}});
        out.push_back({prefix + ".running_std", &running_std_, Shape{channels_}});
    }

  private:
    std::size_t channels_ = 0;
    T eps_ = T(kNormEps);
    T momentum_ = T(0.1);
    std::vector<T> running_mean_;
    std::vector<T> running_std_;
};

// ---------------------------------------------------------------------------
// spectrally normalized convolution
// ---------------------------------------------------------------------------

struct ConvOpts {
    std::size_t stride = 1;
    std::size_t pad = 0;
    bool spectral_norm = true;
    bool bias = true;
    std::size_t power_iters = 1;  // per training-mode forward
};

template <typename T>
class ConvLayer {
  public:
    ConvLayer() = default;

    ConvLayer(std::size_t inc, std::size_t outc, std::size_t kernel, ConvOpts opts, Rng& rng,
              T gain = lrelu_gain<T>())
        : inc_(inc), outc_(outc), kernel_(kernel), opts_(opts) {
        weight_ = init_params<T>({outc, inc, kernel, kernel}, InitScheme::FanInGaussian,
                                 rng.next_u64(), gain);
        if (opts_.bias) {
            bias_ = init_params<T>({outc}, InitScheme::Zeros, rng.next_u64());
        }
        sn_u_.assign(outc, T(0));
        Rng urng(rng.next_u64());
        T norm = T(0);
        for (auto& u : sn_u_) {
            u = static_cast<T>(urng.normal());
            norm += u * u;
        }
        norm = std::sqrt(norm) + T(1e-12);
        for (auto& u : sn_u_) u /= norm;
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> w = effective_weight(training);
        if (opts_.bias) return conv2d(x, w, bias_, opts_.stride, opts_.pad);
        return conv2d(x, w, opts_.stride, opts_.pad);
    }

    // The weight actually convolved: weight / sigma_hat when spectral norm is
    // on. u (and the derived v) are treated as constants; the division by
    // sigma = u^T W v stays on the tape, and its gradient u v^T is exactly the
    // gradient of ||W^T u|| at the current point.
    Tensor<T> effective_weight(bool training) {
        if (!opts_.spectral_norm) return weight_;
        if (training && opts_.power_iters > 0) power_iterate(opts_.power_iters);
        const std::size_t rest = inc_ * kernel_ * kernel_;
        std::vector<T> v = right_vector();
        Tensor<T> wmat = reshape(weight_, {outc_, rest});
        Tensor<T> vcol = Tensor<T>::from({rest, 1}, std::move(v));
        Tensor<T> ucol = Tensor<T>::from({outc_, 1}, sn_u_);
        Tensor<T> sigma = sum_all(mul(ucol, matmul(wmat, vcol)));
        return div(weight_, add_scalar(sigma, T(1e-12)));
    }

    // one-sided power iteration on the [outc, inc*kh*kw] reshaping (no tape)
    void power_iterate(std::size_t iters) {
        const std::size_t rest = inc_ * kernel_ * kernel_;
        const T* w = weight_.data();
        std::vector<T> v(rest);
        for (std::size_t it = 0; it < iters; ++it) {
            T vn = T(0);
            for (std::size_t j = 0; j < rest; ++j) {
                T s = T(0);
                for (std::size_t i = 0; i < outc_; ++i) s += w[i * rest + j] * sn_u_[i];
                v[j] = s;
                vn += s * s;
            }
            vn = std::sqrt(vn) + T(1e-12);
            for (auto& x : v) x /= vn;
            T un = T(0);
            for (std::size_t i = 0; i < outc_; ++i) {
                T s = T(0);
                for (std::size_t j = 0; j < rest; ++j) s += w[i * rest + j] * v[j];
                sn_u_[i] = s;
                un += s * s;
            }
            un = std::sqrt(un) + T(1e-12);
            for (auto& x : sn_u_) x /= un;
        }
    }

    // current largest-singular-value estimate ||W^T u||
    T sigma_estimate() const {
        const std::size_t rest = inc_ * kernel_ * kernel_;
        const T* w = weight_.data();
        T acc = T(0);
        for (std::size_t j = 0; j < rest; ++j) {
            T s = T(0);
            for (std::size_t i = 0; i < outc_; ++i) s += w[i * rest + j] * sn_u_[i];
            acc += s * s;
        }
        return std::sqrt(acc);
    }

    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }
    ConvOpts& opts() { return opts_; }
    bool has_bias() const { return opts_.bias; }
    bool spectral() const { return opts_.spectral_norm; }
    std::size_t in_channels() const { return inc_; }
    std::size_t out_channels() const { return outc_; }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        out.push_back({prefix + ".weight", weight_});
        if (opts_.bias) out.push_back({prefix + ".bias", bias_});
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        if (opts_.spectral_norm) out.push_back({prefix + ".sn_u", &sn_u_, Shape{outc_}});
    }

  private:
    // v = normalize(W^T u) from the stored u; pure function of (weight, u)
    std::vector<T> right_vector() const {
        const std::size_t rest = inc_ * kernel_ * kernel_;
        const T* w = weight_.data();
        std::vector<T> v(rest);
        T vn = T(0);
        for (std::size_t j = 0; j < rest; ++j) {
            T s = T(0);
            for (std::size_t i = 0; i < outc_; ++i) s += w[i * rest + j] * sn_u_[i];
            v[j] = s;
            vn += s * s;
        }
        vn = std::sqrt(vn) + T(1e-12);
        for (auto& x : v) x /= vn;
        return v;
    }

    std::size_t inc_ = 0, outc_ = 0, kernel_ = 0;
    ConvOpts opts_;
    Tensor<T> weight_;
    Tensor<T> bias_;
    std::vector<T> sn_u_;
};

}  // namespace tsit
