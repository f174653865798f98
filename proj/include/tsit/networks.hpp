#pragma once

// Full model assembly: symmetric content/style streams, the coarse-to-fine
// generator with per-level feature injection, multi-scale patch
// discriminators, and the TSITModel facade that wires them together
// (including the ablation variants).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tsit/blocks.hpp"
#include "tsit/layers.hpp"
#include "tsit/losses.hpp"
#include "tsit/ops.hpp"
#include "tsit/rng.hpp"
#include "tsit/tensor.hpp"
#include "tsit/transforms.hpp"

namespace tsit {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

struct Ablations {
    bool no_cs = false;            // drop the content stream; the generator's
                                   // element-wise injections see the resized
                                   // raw content image instead
    bool no_ss = false;            // drop the style stream; no moment
                                   // injection at all (unimodal generator)
    bool concat_content = false;   // replace the denormalize/modulate content
                                   // injection with channel concat + 1x1 conv
    bool concat_style = false;     // replace moment transfer with concat+1x1
    bool image_level = false;      // both injections consume resized raw
                                   // images rather than stream features
};

struct NetConfig {
    std::size_t k = 7;                   // stream/generator depth
    std::size_t base_width = 64;         // channels of the full-resolution level
    std::size_t content_channels = 3;    // content-stream input channels (label
                                         // maps use one channel per class)
    std::vector<std::size_t> schedule;   // channels of levels 1..k; empty means
                                         // min(base * 2^(i+1), base * 16)
    std::size_t width_divisor = 1;       // uniform channel reduction for desk runs
    std::size_t d_scales = 3;            // discriminator image pyramid depth
    std::size_t d_layers = 4;            // strided conv layers per discriminator
    bool spectral = true;                // spectral norm on generator/stream/D convs
    bool spectral_fade = true;           // spectral norm on modulation convs too
    bool upsample_last = true;           // upsample after the residual merge
    bool d_conditional = false;          // concat content image onto D input
    Ablations ablations;
};

inline std::vector<std::size_t> default_schedule(std::size_t k, std::size_t base) {
    std::vector<std::size_t> s(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t w = base << (i + 1);  // base * 2^(i+1)
        s[i] = std::min(w, base * 16);
    }
    return s;
}

inline void validate_config(const NetConfig& cfg) {
    if (cfg.k == 0) throw ShapeError("net config: k must be at least 1");
    if (cfg.base_width == 0) throw ShapeError("net config: base_width must be positive");
    if (cfg.content_channels == 0)
        throw ShapeError("net config: content_channels must be positive");
    if (cfg.width_divisor == 0) throw ShapeError("net config: width_divisor must be positive");
    if (!cfg.schedule.empty() && cfg.schedule.size() != cfg.k)
        throw ShapeError("net config: schedule must have exactly k entries");
    if (cfg.base_width % cfg.width_divisor != 0)
        throw ShapeError("net config: width_divisor must divide base_width");
    const auto sched = cfg.schedule.empty() ? default_schedule(cfg.k, cfg.base_width)
                                            : cfg.schedule;
    for (std::size_t w : sched)
        if (w == 0 || w % cfg.width_divisor != 0)
            throw ShapeError("net config: width_divisor must divide every schedule entry");
    if (cfg.d_scales == 0 || cfg.d_layers == 0)
        throw ShapeError("net config: discriminator needs at least one scale and layer");
    for (std::size_t i = 0; i < cfg.d_layers; ++i) {
        std::size_t w = std::min<std::size_t>(std::size_t(64) << i, 512);
        if (w % cfg.width_divisor != 0)
            throw ShapeError("net config: width_divisor must divide discriminator widths");
    }
}

// Channel count at each level 0..k after applying the width divisor.
inline std::vector<std::size_t> channel_ladder(const NetConfig& cfg) {
    validate_config(cfg);
    const auto sched = cfg.schedule.empty() ? default_schedule(cfg.k, cfg.base_width)
                                            : cfg.schedule;
    std::vector<std::size_t> ladder(cfg.k + 1);
    ladder[0] = cfg.base_width / cfg.width_divisor;
    for (std::size_t i = 0; i < cfg.k; ++i) ladder[i + 1] = sched[i] / cfg.width_divisor;
    return ladder;
}

// ---------------------------------------------------------------------------
// shape plans (pure arithmetic; used to cross-check the live networks)
// ---------------------------------------------------------------------------

struct LevelSpec {
    std::size_t channels = 0, height = 0, width = 0;
    bool operator==(const LevelSpec&) const = default;
};

inline void check_divisible(std::size_t h, std::size_t w, std::size_t k) {
    const std::size_t step = std::size_t(1) << k;
    if (h == 0 || w == 0 || h % step != 0 || w % step != 0)
        throw ShapeError("input extent " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible by 2^" + std::to_string(k));
}

// Feature pyramid produced by a stream: level i has ladder[i] channels at
// 1/2^i of the input resolution; k+1 entries, level 0 first.
inline std::vector<LevelSpec> plan_stream_levels(const NetConfig& cfg, std::size_t h,
                                                 std::size_t w) {
    auto ladder = channel_ladder(cfg);
    check_divisible(h, w, cfg.k);
    std::vector<LevelSpec> levels(cfg.k + 1);
    for (std::size_t i = 0; i <= cfg.k; ++i)
        levels[i] = {ladder[i], h >> i, w >> i};
    return levels;
}

struct GeneratorPlan {
    LevelSpec noise;                // z input, deepest level
    std::vector<LevelSpec> sites;   // feature consumed by each block, deepest first
    std::vector<LevelSpec> outputs; // activation after each block
    LevelSpec image;                // final RGB output
};

// The generator mirrors the stream: block s (deepest first) consumes the
// level-(k-s) feature and doubles the resolution.
inline GeneratorPlan plan_generator(const NetConfig& cfg, std::size_t h, std::size_t w) {
    auto stream = plan_stream_levels(cfg, h, w);
    GeneratorPlan plan;
    plan.noise = stream[cfg.k];
    for (std::size_t i = cfg.k; i >= 1; --i) {
        plan.sites.push_back(stream[i]);
        plan.outputs.push_back({stream[i - 1].channels, stream[i - 1].height,
                                stream[i - 1].width});
    }
    plan.image = {3, h, w};
    return plan;
}

// ---------------------------------------------------------------------------
// streams: one 7x7 stem conv then k downsampling residual blocks; the forward
// pass returns the whole feature pyramid f_0..f_k
// ---------------------------------------------------------------------------

template <typename T>
class Stream {
  public:
    Stream() = default;

    Stream(const NetConfig& cfg, Rng& rng, std::size_t in_channels = 3)
        : k_(cfg.k), in_c_(in_channels) {
        auto ladder = channel_ladder(cfg);
        ConvOpts stem{1, 3, cfg.spectral, true, 1};
        stem_ = ConvLayer<T>(in_channels, ladder[0], 7, stem, rng);
        for (std::size_t i = 1; i <= cfg.k; ++i)
            blocks_.emplace_back(ladder[i - 1], ladder[i], cfg.spectral, rng);
    }

    std::vector<Tensor<T>> forward(const Tensor<T>& image, bool training) {
        if (image.ndim() != 4 || image.dim(1) != in_c_)
            throw ShapeError("stream expects an NCHW input with " + std::to_string(in_c_) +
                             " channels, got " + shape_str(image.shape()));
        check_divisible(image.dim(2), image.dim(3), k_);
        std::vector<Tensor<T>> feats;
        feats.reserve(k_ + 1);
        feats.push_back(stem_.forward(image, training));
        for (auto& block : blocks_) feats.push_back(block.forward(feats.back(), training));
        return feats;
    }

    std::size_t depth() const { return k_; }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        stem_.collect_params(prefix + ".stem", out);
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].collect_params(prefix + ".block" + std::to_string(i), out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        stem_.collect_buffers(prefix + ".stem", out);
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].collect_buffers(prefix + ".block" + std::to_string(i), out);
    }

  private:
    std::size_t k_ = 0;
    std::size_t in_c_ = 3;
    ConvLayer<T> stem_;
    std::vector<StreamResBlock<T>> blocks_;
};

// ---------------------------------------------------------------------------
// generator
// ---------------------------------------------------------------------------

// What each generator site expects as injected features.
struct SiteSpec {
    std::size_t level = 0;     // stream level this site consumes (k..1)
    std::size_t in_c = 0;      // activation channels entering the block
    std::size_t out_c = 0;     // activation channels leaving the block
    std::size_t content_c = 0; // channels of the content-side injection
    std::size_t style_c = 0;   // channels of the style-side injection (0: none)
};

template <typename T>
class Generator {
  public:
    Generator() = default;

    Generator(const NetConfig& cfg, Rng& rng) : cfg_(cfg) {
        auto ladder = channel_ladder(cfg);
        const auto& abl = cfg.ablations;
        const bool content_from_image = abl.no_cs || abl.image_level;
        const bool style_enabled = !abl.no_ss;
        const bool style_from_image = abl.image_level;

        ConvOpts c3{1, 1, cfg.spectral, true, 1};
        head_ = ConvLayer<T>(ladder[cfg.k], ladder[cfg.k], 3, c3, rng);
        for (std::size_t i = cfg.k; i >= 1; --i) {
            SiteSpec spec;
            spec.level = i;
            spec.in_c = ladder[i];
            spec.out_c = ladder[i - 1];
            spec.content_c = content_from_image ? cfg.content_channels : ladder[i];
            spec.style_c = style_enabled ? ladder[i] : 0;
            sites_.push_back(spec);
            blocks_.emplace_back(spec.in_c, spec.out_c, spec.content_c, abl.concat_content,
                                 cfg.upsample_last, cfg.spectral, cfg.spectral_fade, rng);
            if (style_enabled && abl.concat_style)
                style_concats_.emplace_back(spec.in_c, spec.in_c, cfg.spectral_fade, rng);
        }
        (void)style_from_image;  // affects only how callers build style_feats
        out_conv_ = ConvLayer<T>(ladder[0], 3, 3, c3, rng);
    }

    // z: noise at the deepest level; content_feats/style_feats: one entry per
    // site, deepest first (style_feats empty when the model has no style path).
    Tensor<T> forward(const Tensor<T>& z, const std::vector<Tensor<T>>& content_feats,
                      const std::vector<Tensor<T>>& style_feats, bool training) {
        if (z.ndim() != 4 || z.dim(1) != sites_.front().in_c)
            throw ShapeError("generator: noise must be NCHW with " +
                             std::to_string(sites_.front().in_c) + " channels, got " +
                             shape_str(z.shape()));
        if (content_feats.size() != sites_.size())
            throw ShapeError("generator: expected " + std::to_string(sites_.size()) +
                             " content features, got " + std::to_string(content_feats.size()));
        const bool has_style = sites_.front().style_c > 0;
        if (has_style && style_feats.size() != sites_.size())
            throw ShapeError("generator: expected " + std::to_string(sites_.size()) +
                             " style features, got " + std::to_string(style_feats.size()));
        if (!has_style && !style_feats.empty())
            throw ShapeError("generator: built without a style path but style features given");

        Tensor<T> h = head_.forward(z, training);
        for (std::size_t s = 0; s < sites_.size(); ++s) {
            if (has_style) {
                if (style_feats[s].dim(1) != sites_[s].style_c)
                    throw ShapeError("generator: style feature at site " + std::to_string(s) +
                                     " must have " + std::to_string(sites_[s].style_c) +
                                     " channels, got " + shape_str(style_feats[s].shape()));
                h = cfg_.ablations.concat_style
                        ? style_concats_[s].forward(h, style_feats[s], training)
                        : fadain_forward(h, style_feats[s]);
            }
            h = blocks_[s].forward(h, content_feats[s], training);
        }
        return tanh(out_conv_.forward(leaky_relu(h, T(0.2)), training));
    }

    const std::vector<SiteSpec>& sites() const { return sites_; }
    std::size_t noise_channels() const { return sites_.front().in_c; }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        head_.collect_params(prefix + ".head", out);
        for (std::size_t s = 0; s < blocks_.size(); ++s) {
            blocks_[s].collect_params(prefix + ".site" + std::to_string(s), out);
            if (!style_concats_.empty())
                style_concats_[s].collect_params(prefix + ".style_concat" + std::to_string(s),
                                                 out);
        }
        out_conv_.collect_params(prefix + ".out", out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        head_.collect_buffers(prefix + ".head", out);
        for (std::size_t s = 0; s < blocks_.size(); ++s) {
            blocks_[s].collect_buffers(prefix + ".site" + std::to_string(s), out);
            if (!style_concats_.empty())
                style_concats_[s].collect_buffers(prefix + ".style_concat" + std::to_string(s),
                                                  out);
        }
        out_conv_.collect_buffers(prefix + ".out", out);
    }

  private:
    NetConfig cfg_;
    ConvLayer<T> head_, out_conv_;
    std::vector<SiteSpec> sites_;
    std::vector<FadeResBlock<T>> blocks_;
    std::vector<InjectConcat<T>> style_concats_;  // only in concat_style mode
};

// ---------------------------------------------------------------------------
// discriminators: per scale, a stack of stride-2 4x4 convs with instance norm
// and leaky ReLU, then a 1-channel 4x4 score conv. The first min(3, d_layers)
// activations are tapped for feature matching.
// ---------------------------------------------------------------------------

template <typename T>
struct DScaleOutput {
    Tensor<T> score;
    std::vector<Tensor<T>> taps;
};

template <typename T>
class PatchDiscriminator {
  public:
    PatchDiscriminator() = default;

    PatchDiscriminator(std::size_t in_c, std::size_t layers, std::size_t divisor, bool spectral,
                       Rng& rng) {
        ConvOpts body{2, 2, spectral, true, 1};
        std::size_t c = in_c;
        for (std::size_t i = 0; i < layers; ++i) {
            std::size_t w = std::min<std::size_t>(std::size_t(64) << i, 512) / divisor;
            convs_.emplace_back(c, w, 4, body, rng);
            c = w;
        }
        ConvOpts score{1, 1, spectral, true, 1};
        score_conv_ = ConvLayer<T>(c, 1, 4, score, rng);
        taps_ = std::min<std::size_t>(3, layers);
    }

    DScaleOutput<T> forward(const Tensor<T>& x, bool training) {
        DScaleOutput<T> out;
        Tensor<T> h = x;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            h = leaky_relu(instance_norm(convs_[i].forward(h, training)), T(0.2));
            if (i < taps_) out.taps.push_back(h);
        }
        out.score = score_conv_.forward(h, training);
        return out;
    }

    std::size_t tap_count() const { return taps_; }
    std::size_t layer_count() const { return convs_.size(); }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        for (std::size_t i = 0; i < convs_.size(); ++i)
            convs_[i].collect_params(prefix + ".conv" + std::to_string(i), out);
        score_conv_.collect_params(prefix + ".score", out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        for (std::size_t i = 0; i < convs_.size(); ++i)
            convs_[i].collect_buffers(prefix + ".conv" + std::to_string(i), out);
        score_conv_.collect_buffers(prefix + ".score", out);
    }

  private:
    std::vector<ConvLayer<T>> convs_;
    ConvLayer<T> score_conv_;
    std::size_t taps_ = 0;
};

template <typename T>
class MultiScaleDiscriminator {
  public:
    MultiScaleDiscriminator() = default;

    MultiScaleDiscriminator(std::size_t in_c, std::size_t scales, std::size_t layers,
                            std::size_t divisor, bool spectral, Rng& rng) {
        for (std::size_t s = 0; s < scales; ++s)
            scales_.emplace_back(in_c, layers, divisor, spectral, rng);
    }

    // scale 0 sees the full-resolution input; each further scale sees a 2x
    // nearest-neighbour downsampling of the previous one
    std::vector<DScaleOutput<T>> forward(const Tensor<T>& x, bool training) {
        std::vector<DScaleOutput<T>> out;
        Tensor<T> h = x;
        for (std::size_t s = 0; s < scales_.size(); ++s) {
            if (s > 0) h = downsample_nearest(h, 2);
            out.push_back(scales_[s].forward(h, training));
        }
        return out;
    }

    std::size_t scale_count() const { return scales_.size(); }
    PatchDiscriminator<T>& scale(std::size_t i) { return scales_[i]; }

    void collect_params(const std::string& prefix, std::vector<TensorRef<T>>& out) {
        for (std::size_t s = 0; s < scales_.size(); ++s)
            scales_[s].collect_params(prefix + ".scale" + std::to_string(s), out);
    }
    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        for (std::size_t s = 0; s < scales_.size(); ++s)
            scales_[s].collect_buffers(prefix + ".scale" + std::to_string(s), out);
    }

  private:
    std::vector<PatchDiscriminator<T>> scales_;
};

// ---------------------------------------------------------------------------
// seeded standard-normal noise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sample_noise(const Shape& shape, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x5EED1));
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal());
    return Tensor<T>::from(shape, std::move(v));
}

// ---------------------------------------------------------------------------
// full model
// ---------------------------------------------------------------------------

template <typename T>
class TSITModel {
  public:
    explicit TSITModel(const NetConfig& cfg, std::uint64_t seed = 0)
        : cfg_(cfg), ladder_(channel_ladder(cfg)) {
        Rng rng(derive_seed(seed, 0x300D));
        const auto& abl = cfg.ablations;
        has_cs_ = !(abl.no_cs || abl.image_level);
        has_ss_ = !abl.no_ss && !abl.image_level;
        style_from_image_ = !abl.no_ss && abl.image_level;
        Rng r_cs = rng.derive(1), r_ss = rng.derive(2), r_g = rng.derive(3), r_d = rng.derive(4);
        if (has_cs_) content_stream_ = Stream<T>(cfg, r_cs, cfg.content_channels);
        if (has_ss_) style_stream_ = Stream<T>(cfg, r_ss);
        generator_ = Generator<T>(cfg, r_g);
        const std::size_t d_in = 3 + (cfg.d_conditional ? cfg.content_channels : 0);
        disc_ = MultiScaleDiscriminator<T>(d_in, cfg.d_scales, cfg.d_layers, cfg.width_divisor,
                                           cfg.spectral, r_d);
    }

    const NetConfig& config() const { return cfg_; }
    bool has_content_stream() const { return has_cs_; }
    bool has_style_stream() const { return has_ss_; }

    Shape noise_shape(std::size_t n, std::size_t h, std::size_t w) const {
        check_divisible(h, w, cfg_.k);
        return Shape{n, ladder_[cfg_.k], h >> cfg_.k, w >> cfg_.k};
    }

    // Translate `content` into the style of `style`, driven by noise z at the
    // deepest level. Differentiable end to end in training mode.
    Tensor<T> generate(const Tensor<T>& content, const Tensor<T>& style, const Tensor<T>& z,
                       bool training) {
        if (content.ndim() != 4 || content.dim(1) != cfg_.content_channels)
            throw ShapeError("generate: content must be NCHW with " +
                             std::to_string(cfg_.content_channels) + " channels, got " +
                             shape_str(content.shape()));
        check_divisible(content.dim(2), content.dim(3), cfg_.k);
        const bool needs_style = has_ss_ || style_from_image_;
        if (needs_style) {
            if (style.ndim() != 4 || style.dim(1) != 3)
                throw ShapeError("generate: style must be NCHW with 3 channels, got " +
                                 shape_str(style.shape()));
            if (style.dim(0) != content.dim(0))
                throw ShapeError("generate: content and style batch sizes differ");
        }
        const Shape want = noise_shape(content.dim(0), content.dim(2), content.dim(3));
        if (z.shape() != want)
            throw ShapeError("generate: noise must have shape " + shape_str(want) + ", got " +
                             shape_str(z.shape()));

        // content-side injection pyramid, deepest site first
        std::vector<Tensor<T>> content_feats;
        if (has_cs_) {
            auto pyramid = content_stream_.forward(content, training);
            for (std::size_t i = cfg_.k; i >= 1; --i) content_feats.push_back(pyramid[i]);
        } else {
            for (std::size_t i = cfg_.k; i >= 1; --i)
                content_feats.push_back(resize_nearest(content, content.dim(2) >> i,
                                                       content.dim(3) >> i));
        }

        // style-side injection, deepest site first
        std::vector<Tensor<T>> style_feats;
        if (has_ss_) {
            if (style.dim(2) % (std::size_t(1) << cfg_.k) != 0 ||
                style.dim(3) % (std::size_t(1) << cfg_.k) != 0)
                throw ShapeError("generate: style extent must be divisible by 2^k");
            auto pyramid = style_stream_.forward(style, training);
            for (std::size_t i = cfg_.k; i >= 1; --i) style_feats.push_back(pyramid[i]);
        } else if (style_from_image_) {
            for (std::size_t i = cfg_.k; i >= 1; --i) {
                Tensor<T> s = cfg_.ablations.concat_style
                                  ? resize_nearest(style, content.dim(2) >> i,
                                                   content.dim(3) >> i)
                                  : style;
                style_feats.push_back(tile_channels(s, ladder_[i]));
            }
        }

        return generator_.forward(z, content_feats, style_feats, training);
    }

    // Run the discriminators on an image (optionally conditioned on content).
    std::vector<DScaleOutput<T>> discriminate(const Tensor<T>& image, const Tensor<T>& content,
                                              bool training) {
        Tensor<T> input = image;
        if (cfg_.d_conditional) {
            if (content.ndim() != 4 || content.dim(0) != image.dim(0) ||
                content.dim(1) != cfg_.content_channels || content.dim(2) != image.dim(2) ||
                content.dim(3) != image.dim(3))
                throw ShapeError("discriminate: conditional input must match image extent");
            input = concat(image, content, 1);
        }
        return disc_.forward(input, training);
    }

    MultiScaleDiscriminator<T>& discriminator() { return disc_; }
    Generator<T>& generator() { return generator_; }
    Stream<T>& content_stream() { return content_stream_; }
    Stream<T>& style_stream() { return style_stream_; }

    // Everything the generator step trains: generator + both streams.
    std::vector<TensorRef<T>> generator_params() {
        std::vector<TensorRef<T>> out;
        generator_.collect_params("g", out);
        if (has_cs_) content_stream_.collect_params("cs", out);
        if (has_ss_) style_stream_.collect_params("ss", out);
        return out;
    }
    std::vector<TensorRef<T>> discriminator_params() {
        std::vector<TensorRef<T>> out;
        disc_.collect_params("d", out);
        return out;
    }
    std::vector<BufferRef<T>> buffers() {
        std::vector<BufferRef<T>> out;
        generator_.collect_buffers("g", out);
        if (has_cs_) content_stream_.collect_buffers("cs", out);
        if (has_ss_) style_stream_.collect_buffers("ss", out);
        disc_.collect_buffers("d", out);
        return out;
    }

  private:
    NetConfig cfg_;
    std::vector<std::size_t> ladder_;
    bool has_cs_ = true, has_ss_ = true, style_from_image_ = false;
    Stream<T> content_stream_, style_stream_;
    Generator<T> generator_;
    MultiScaleDiscriminator<T> disc_;
};

}  // namespace tsit
