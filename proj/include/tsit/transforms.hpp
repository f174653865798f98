#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tsit/layers.hpp"
#include "tsit/ops.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

// ---------------------------------------------------------------------------
// FADE: element-wise feature-adaptive denormalization.
// Normalizes z with parameter-free batch norm, then modulates with per-pixel
// gamma/beta produced by one-layer convolutions from the injected feature map.
// ---------------------------------------------------------------------------

template <typename T>
class FadeModule {
  public:
    FadeModule() = default;

    FadeModule(std::size_t featc, std::size_t normc, bool spectral, Rng& rng)
        : featc_(featc), normc_(normc), bn_(normc) {
        ConvOpts opts;
        opts.stride = 1;
        opts.pad = 1;
        opts.spectral_norm = spectral;
        opts.bias = true;
        gamma_conv_ = ConvLayer<T>(featc, normc, 3, opts, rng);
        beta_conv_ = ConvLayer<T>(featc, normc, 3, opts, rng);
    }

    Tensor<T> forward(const Tensor<T>& z, const Tensor<T>& f_c, bool training) {
        if (z.ndim() != 4 || f_c.ndim() != 4 || z.dim(2) != f_c.dim(2) ||
            z.dim(3) != f_c.dim(3)) {
            throw ShapeError("fade: spatial extents differ: " + shape_str(z.shape()) + " vs " +
                             shape_str(f_c.shape()));
        }
        if (z.dim(1) != normc_ || f_c.dim(1) != featc_) {
            throw ShapeError("fade: channel mismatch: z " + shape_str(z.shape()) + ", feature " +
                             shape_str(f_c.shape()) + ", expected norm " + std::to_string(normc_) +
                             " feat " + std::to_string(featc_));
        }
        Tensor<T> normalized = bn_.forward(z, training);
        Tensor<T> gamma = gamma_conv_.forward(f_c, training);
        Tensor<T> beta = beta_conv_.forward(f_c, training);
        return add(mul(gamma, normalized), beta);
    }

    ConvLayer<T>& gamma_conv() { return gamma_conv_; }
    ConvLayer<T>& beta_conv() { return beta_conv_; }
    BatchNorm<T>& bn() { return bn_; }
    std::size_t feature_channels() const { return featc_; }
    std::size_t norm_channels() const { return normc_; }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        gamma_conv_.collect_params(prefix + ".gamma_conv", out);
        beta_conv_.collect_params(prefix + ".beta_conv", out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        gamma_conv_.collect_buffers(prefix + ".gamma_conv", out);
        beta_conv_.collect_buffers(prefix + ".beta_conv", out);
        bn_.collect_buffers(prefix + ".bn", out);
    }

  private:
    std::size_t featc_ = 0, normc_ = 0;
    ConvLayer<T> gamma_conv_;
    ConvLayer<T> beta_conv_;
    BatchNorm<T> bn_;
};

// ---------------------------------------------------------------------------
// FAdaIN: feature-adaptive instance normalization (parameter-free).
// Transfers per-(n,channel) spatial moments of the style feature onto z.
// Spatial extents of z and f_s may differ; N and channels must match.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> fadain_forward(const Tensor<T>& z, const Tensor<T>& f_s, T eps = T(kNormEps)) {
    if (z.ndim() != 4 || f_s.ndim() != 4) throw ShapeError("fadain expects 4-D inputs");
    if (z.dim(0) != f_s.dim(0) || z.dim(1) != f_s.dim(1)) {
        throw ShapeError("fadain: N or channel mismatch: " + shape_str(z.shape()) + " vs " +
                         shape_str(f_s.shape()));
    }
    Tensor<T> mu_z = mean_axes(z, {2, 3}, true);
    Tensor<T> sigma_z = sqrt(add_scalar(variance_axes(z, {2, 3}, true), eps));
    Tensor<T> mu_s = mean_axes(f_s, {2, 3}, true);
    Tensor<T> sigma_s = sqrt(add_scalar(variance_axes(f_s, {2, 3}, true), eps));
    return add(mul(sigma_s, div(sub(z, mu_z), sigma_z)), mu_s);
}

// ---------------------------------------------------------------------------
// InjectConcat: ablation substitute for FADE/FAdaIN — channel concatenation
// followed by a 1x1 conv back to z's channel count.
// ---------------------------------------------------------------------------

template <typename T>
class InjectConcat {
  public:
    InjectConcat() = default;

    InjectConcat(std::size_t zc, std::size_t featc, bool spectral, Rng& rng)
        : zc_(zc), featc_(featc) {
        ConvOpts opts;
        opts.stride = 1;
        opts.pad = 0;
        opts.spectral_norm = spectral;
        opts.bias = true;
        conv_ = ConvLayer<T>(zc + featc, zc, 1, opts, rng);
    }

    Tensor<T> forward(const Tensor<T>& z, const Tensor<T>& f, bool training) {
        if (z.dim(2) != f.dim(2) || z.dim(3) != f.dim(3)) {
            throw ShapeError("inject_concat: spatial extents differ: " + shape_str(z.shape()) +
                             " vs " + shape_str(f.shape()));
        }
        if (z.dim(1) != zc_ || f.dim(1) != featc_) {
            throw ShapeError("inject_concat: channel mismatch: " + shape_str(z.shape()) + " and " +
                             shape_str(f.shape()));
        }
        return conv_.forward(concat(z, f, 1), training);
    }

    ConvLayer<T>& conv() { return conv_; }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        conv_.collect_params(prefix + ".conv", out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        conv_.collect_buffers(prefix + ".conv", out);
    }

  private:
    std::size_t zc_ = 0, featc_ = 0;
    ConvLayer<T> conv_;
};

}  // namespace tsit
