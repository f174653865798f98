#pragma once

// Training objectives: multi-scale hinge adversarial losses, a frozen
// random-convolution feature extractor, perceptual loss, and feature
// matching loss.

#include <cstddef>
#include <string>
#include <vector>

#include "tsit/layers.hpp"
#include "tsit/ops.hpp"
#include "tsit/rng.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

template <typename T>
struct LossWeights {
    T lambda_perceptual = T(1);
    T lambda_fm = T(1);
};

// ---------------------------------------------------------------------------
// hinge adversarial losses
//
// Discriminator:  sum over scales of
//     -mean(min(D(real) - 1, 0)) - mean(min(-D(fake) - 1, 0))
// Generator:      sum over scales of -mean(D(fake))
// Means are taken over every element of a scale's score map.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> hinge_d_loss(const std::vector<Tensor<T>>& real_scores,
                       const std::vector<Tensor<T>>& fake_scores) {
    if (real_scores.empty()) throw ShapeError("hinge_d_loss: no score maps");
    if (real_scores.size() != fake_scores.size())
        throw ShapeError("hinge_d_loss: real/fake scale count mismatch");
    Tensor<T> total = Tensor<T>::scalar(T(0));
    for (std::size_t s = 0; s < real_scores.size(); ++s) {
        auto real_term = neg(mean_all(minimum(add_scalar(real_scores[s], T(-1)), T(0))));
        auto fake_term = neg(mean_all(minimum(neg(add_scalar(fake_scores[s], T(1))), T(0))));
        total = add(total, add(real_term, fake_term));
    }
    return total;
}

template <typename T>
Tensor<T> hinge_g_loss(const std::vector<Tensor<T>>& fake_scores) {
    if (fake_scores.empty()) throw ShapeError("hinge_g_loss: no score maps");
    Tensor<T> total = Tensor<T>::scalar(T(0));
    for (const auto& s : fake_scores) total = add(total, neg(mean_all(s)));
    return total;
}

// ---------------------------------------------------------------------------
// frozen random-convolution feature extractor
//
// Five 3x3 conv stages with leaky-ReLU activations; stage 1 keeps the input
// resolution and stages 2-5 each halve it. Weights are drawn once from a
// seeded fan-in Gaussian and never trained, so the extractor is a fixed,
// reproducible feature map. Trained weights in the checkpoint tensor format
// can be loaded over the random ones.
// ---------------------------------------------------------------------------

template <typename T>
class RandomFeatureExtractor {
  public:
    static constexpr std::size_t kStages = 5;

    explicit RandomFeatureExtractor(std::uint64_t seed = 17) : seed_(seed) {
        Rng rng(derive_seed(seed, 0xFEA7));
        const std::size_t widths[kStages] = {16, 32, 64, 128, 128};
        std::size_t in_c = 3;
        for (std::size_t i = 0; i < kStages; ++i) {
            ConvOpts opts;
            opts.stride = (i == 0) ? 1 : 2;
            opts.pad = 1;
            opts.spectral_norm = false;
            stages_.emplace_back(in_c, widths[i], 3, opts, rng);
            freeze(stages_.back());
            in_c = widths[i];
        }
    }

    // Feature maps after each activation, outermost first.
    std::vector<Tensor<T>> extract(const Tensor<T>& image) {
        if (image.ndim() != 4 || image.dim(1) != 3)
            throw ShapeError("feature extractor expects an NCHW image with 3 channels");
        std::vector<Tensor<T>> feats;
        Tensor<T> h = image;
        for (auto& stage : stages_) {
            h = leaky_relu(stage.forward(h, /*training=*/false), T(0.2));
            feats.push_back(h);
        }
        return feats;
    }

    // Deeper layers carry more weight, shallow layers act as regularizers.
    static std::vector<T> level_weights() {
        return {T(1) / T(32), T(1) / T(16), T(1) / T(8), T(1) / T(4), T(1)};
    }

    std::size_t feature_channels() const { return stages_.back().out_channels(); }
    std::uint64_t seed() const { return seed_; }

    // identity string for evaluation reports, so scores from different
    // extractors are never compared against each other
    std::string identity() const {
        return "random-conv/stages=" + std::to_string(kStages) +
               "/seed=" + std::to_string(seed_);
    }

    std::vector<TensorRef<T>> collect_params(const std::string& prefix) {
        std::vector<TensorRef<T>> out;
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            auto sub = stages_[i].collect_params(prefix + ".stage" + std::to_string(i));
            out.insert(out.end(), sub.begin(), sub.end());
        }
        return out;
    }

  private:
    static void freeze(ConvLayer<T>& layer) {
        layer.weight().set_requires_grad(false);
        if (layer.opts().bias) layer.bias().set_requires_grad(false);
    }

    std::vector<ConvLayer<T>> stages_;
    std::uint64_t seed_ = 0;
};

// ---------------------------------------------------------------------------
// perceptual loss: weighted sum over extractor levels of the mean absolute
// (or, optionally, mean squared) feature difference. The target image is a
// constant, so gradients flow only through `generated`.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> perceptual_loss(RandomFeatureExtractor<T>& extractor,
                          const Tensor<T>& generated, const Tensor<T>& target,
                          bool squared = false) {
    if (generated.shape() != target.shape())
        throw ShapeError("perceptual_loss: generated/target shape mismatch");
    auto fg = extractor.extract(generated);
    auto ft = extractor.extract(target.detach());
    auto weights = RandomFeatureExtractor<T>::level_weights();
    Tensor<T> total = Tensor<T>::scalar(T(0));
    for (std::size_t l = 0; l < fg.size(); ++l) {
        auto diff = sub(fg[l], ft[l].detach());
        auto level = squared ? mean_all(square(diff)) : mean_all(abs(diff));
        total = add(total, mul_scalar(level, weights[l]));
    }
    return total;
}

// ---------------------------------------------------------------------------
// feature matching: per discriminator scale, mean absolute difference between
// fake and real intermediate features, averaged over the tapped layers and
// summed over scales. Real features are detached so the discriminator gets
// no gradient from this term.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> feature_matching_loss(const std::vector<std::vector<Tensor<T>>>& fake_feats,
                                const std::vector<std::vector<Tensor<T>>>& real_feats) {
    if (fake_feats.empty()) throw ShapeError("feature_matching_loss: no scales");
    if (fake_feats.size() != real_feats.size())
        throw ShapeError("feature_matching_loss: scale count mismatch");
    Tensor<T> total = Tensor<T>::scalar(T(0));
    for (std::size_t s = 0; s < fake_feats.size(); ++s) {
        if (fake_feats[s].size() != real_feats[s].size() || fake_feats[s].empty())
            throw ShapeError("feature_matching_loss: tap count mismatch");
        Tensor<T> scale_sum = Tensor<T>::scalar(T(0));
        for (std::size_t l = 0; l < fake_feats[s].size(); ++l)
            scale_sum = add(scale_sum, mean_all(abs(sub(fake_feats[s][l], real_feats[s][l].detach()))));
        total = add(total, mul_scalar(scale_sum, T(1) / T(fake_feats[s].size())));
    }
    return total;
}

// Full generator objective: adversarial + weighted auxiliary terms.
template <typename T>
Tensor<T> total_g_loss(const Tensor<T>& adv, const Tensor<T>& perceptual,
                       const Tensor<T>& fm, const LossWeights<T>& w) {
    return add(add(adv, mul_scalar(perceptual, w.lambda_perceptual)),
               mul_scalar(fm, w.lambda_fm));
}

}  // namespace tsit
