#pragma once

#include <string>
#include <vector>

#include "tsit/layers.hpp"
#include "tsit/transforms.hpp"

namespace tsit {

// ---------------------------------------------------------------------------
// Content/style stream residual block:
//   Downsample(2) - Conv(inc,inc,3x3) - IN - LReLU - Conv(inc,outc,3x3) - IN - LReLU
//   skip: Conv(inc,outc,1x1) - IN - LReLU
// Both paths branch after the downsample; merge is elementwise addition.
// ---------------------------------------------------------------------------

template <typename T>
class StreamResBlock {
  public:
    StreamResBlock() = default;

    StreamResBlock(std::size_t inc, std::size_t outc, bool spectral, Rng& rng)
        : inc_(inc), outc_(outc) {
        ConvOpts c3{1, 1, spectral, true, 1};
        ConvOpts c1{1, 0, spectral, true, 1};
        conv1_ = ConvLayer<T>(inc, inc, 3, c3, rng);
        conv2_ = ConvLayer<T>(inc, outc, 3, c3, rng);
        skip_conv_ = ConvLayer<T>(inc, outc, 1, c1, rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.ndim() != 4 || x.dim(1) != inc_) {
            throw ShapeError("stream block: expected " + std::to_string(inc_) + " channels, got " +
                             shape_str(x.shape()));
        }
        if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
            throw ShapeError("stream block: odd spatial extent " + shape_str(x.shape()) +
                             " cannot be downsampled by 2");
        }
        const T slope = T(0.2);
        Tensor<T> d = downsample_nearest(x, 2);
        Tensor<T> m = leaky_relu(instance_norm(conv1_.forward(d, training)), slope);
        m = leaky_relu(instance_norm(conv2_.forward(m, training)), slope);
        Tensor<T> s = leaky_relu(instance_norm(skip_conv_.forward(d, training)), slope);
        return add(m, s);
    }

    std::size_t in_channels() const { return inc_; }
    std::size_t out_channels() const { return outc_; }
    ConvLayer<T>& conv1() { return conv1_; }
    ConvLayer<T>& conv2() { return conv2_; }
    ConvLayer<T>& skip_conv() { return skip_conv_; }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        conv1_.collect_params(prefix + ".conv1", out);
        conv2_.collect_params(prefix + ".conv2", out);
        skip_conv_.collect_params(prefix + ".skip", out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        conv1_.collect_buffers(prefix + ".conv1", out);
        conv2_.collect_buffers(prefix + ".conv2", out);
        skip_conv_.collect_buffers(prefix + ".skip", out);
    }

  private:
    std::size_t inc_ = 0, outc_ = 0;
    ConvLayer<T> conv1_, conv2_, skip_conv_;
};

// ---------------------------------------------------------------------------
// FADE residual block:
//   FADE(inc) - LReLU - Conv(inc,inc,3x3) - FADE(inc) - LReLU - Conv(inc,outc,3x3)
//   skip: FADE(inc) - LReLU - Conv(inc,outc,1x1)
// Merge is addition; the factor-2 nearest upsample is applied once after the
// merge (upsample_last), or to each path before it (flag; identical for
// nearest interpolation). Every FADE consumes the same injected feature map.
// In concat mode each FADE site is replaced by the concat+1x1 substitute.
// ---------------------------------------------------------------------------

template <typename T>
class FadeResBlock {
  public:
    FadeResBlock() = default;

    FadeResBlock(std::size_t inc, std::size_t outc, std::size_t featc, bool concat_mode,
                 bool upsample_last, bool spectral, bool spectral_fade, Rng& rng)
        : inc_(inc), outc_(outc), featc_(featc), concat_mode_(concat_mode),
          upsample_last_(upsample_last) {
        ConvOpts c3{1, 1, spectral, true, 1};
        ConvOpts c1{1, 0, spectral, true, 1};
        if (concat_mode_) {
            ic1_ = InjectConcat<T>(inc, featc, spectral_fade, rng);
            ic2_ = InjectConcat<T>(inc, featc, spectral_fade, rng);
            ic_skip_ = InjectConcat<T>(inc, featc, spectral_fade, rng);
        } else {
            fade1_ = FadeModule<T>(featc, inc, spectral_fade, rng);
            fade2_ = FadeModule<T>(featc, inc, spectral_fade, rng);
            fade_skip_ = FadeModule<T>(featc, inc, spectral_fade, rng);
        }
        conv1_ = ConvLayer<T>(inc, inc, 3, c3, rng);
        conv2_ = ConvLayer<T>(inc, outc, 3, c3, rng);
        skip_conv_ = ConvLayer<T>(inc, outc, 1, c1, rng);
    }

    Tensor<T> forward(const Tensor<T>& z, const Tensor<T>& f_c, bool training) {
        if (z.ndim() != 4 || z.dim(1) != inc_) {
            throw ShapeError("fade block: expected " + std::to_string(inc_) + " channels, got " +
                             shape_str(z.shape()));
        }
        if (z.dim(2) != f_c.dim(2) || z.dim(3) != f_c.dim(3)) {
            throw ShapeError("fade block: extents differ: " + shape_str(z.shape()) + " vs " +
                             shape_str(f_c.shape()));
        }
        const T slope = T(0.2);
        Tensor<T> m = leaky_relu(inject(0, z, f_c, training), slope);
        m = conv1_.forward(m, training);
        m = leaky_relu(inject(1, m, f_c, training), slope);
        m = conv2_.forward(m, training);
        Tensor<T> s = leaky_relu(inject(2, z, f_c, training), slope);
        s = skip_conv_.forward(s, training);
        if (upsample_last_) return upsample_nearest(add(m, s), 2);
        return add(upsample_nearest(m, 2), upsample_nearest(s, 2));
    }

    std::size_t in_channels() const { return inc_; }
    std::size_t out_channels() const { return outc_; }
    std::size_t feature_channels() const { return featc_; }
    FadeModule<T>& fade1() { return fade1_; }
    FadeModule<T>& fade2() { return fade2_; }
    FadeModule<T>& fade_skip() { return fade_skip_; }
    ConvLayer<T>& conv1() { return conv1_; }
    ConvLayer<T>& conv2() { return conv2_; }
    ConvLayer<T>& skip_conv() { return skip_conv_; }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        if (concat_mode_) {
            ic1_.collect_params(prefix + ".ic1", out);
            ic2_.collect_params(prefix + ".ic2", out);
            ic_skip_.collect_params(prefix + ".ic_skip", out);
        } else {
            fade1_.collect_params(prefix + ".fade1", out);
            fade2_.collect_params(prefix + ".fade2", out);
            fade_skip_.collect_params(prefix + ".fade_skip", out);
        }
        conv1_.collect_params(prefix + ".conv1", out);
        conv2_.collect_params(prefix + ".conv2", out);
        skip_conv_.collect_params(prefix + ".skip", out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        if (concat_mode_) {
            ic1_.collect_buffers(prefix + ".ic1", out);
            ic2_.collect_buffers(prefix + ".ic2", out);
            ic_skip_.collect_buffers(prefix + ".ic_skip", out);
        } else {
            fade1_.collect_buffers(prefix + ".fade1", out);
            fade2_.collect_buffers(prefix + ".fade2", out);
            fade_skip_.collect_buffers(prefix + ".fade_skip", out);
        }
        conv1_.collect_buffers(prefix + ".conv1", out);
        conv2_.collect_buffers(prefix + ".conv2", out);
        skip_conv_.collect_buffers(prefix + ".skip", out);
    }

  private:
    Tensor<T> inject(int site, const Tensor<T>& z, const Tensor<T>& f, bool training) {
        if (concat_mode_) {
            InjectConcat<T>& ic = site == 0 ? ic1_ : (site == 1 ? ic2_ : ic_skip_);
            return ic.forward(z, f, training);
        }
        FadeModule<T>& fm = site == 0 ? fade1_ : (site == 1 ? fade2_ : fade_skip_);
        return fm.forward(z, f, training);
    }

    std::size_t inc_ = 0, outc_ = 0, featc_ = 0;
    bool concat_mode_ = false;
    bool upsample_last_ = true;
    FadeModule<T> fade1_, fade2_, fade_skip_;
    InjectConcat<T> ic1_, ic2_, ic_skip_;
    ConvLayer<T> conv1_, conv2_, skip_conv_;
};

}  // namespace tsit
