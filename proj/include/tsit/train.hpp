#pragma once

// Alternating GAN training: one discriminator update then one generator
// update per step, both on the same batch with fresh forward passes, plus
// checkpoint capture/restore of the full training state.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "tsit/checkpoint.hpp"
#include "tsit/losses.hpp"
#include "tsit/networks.hpp"
#include "tsit/optim.hpp"
#include "tsit/tensor.hpp"

namespace tsit {

template <typename T>
struct TrainConfig {
    T lr_g = T(1e-4);  // generator + both streams
    T lr_d = T(4e-4);  // discriminators update faster (two-time-scale rule)
    T beta1 = T(0);
    T beta2 = T(0.9);
    T adam_eps = T(1e-8);
    LossWeights<T> weights;
    bool perceptual_squared = false;
    std::uint64_t seed = 0;  // drives per-step noise sampling
};

struct StepMetrics {
    std::uint64_t step = 0;
    double loss_d = 0;
    double loss_g_adv = 0;
    double loss_p = 0;
    double loss_fm = 0;
    double wall_ms = 0;

    std::string format() const {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "step %llu  L_D %.6f  L_G_adv %.6f  L_P %.6f  L_FM %.6f  wall_ms %.1f",
                      static_cast<unsigned long long>(step), loss_d, loss_g_adv, loss_p,
                      loss_fm, wall_ms);
        return std::string(buf);
    }
};

template <typename T>
class Trainer {
  public:
    Trainer(TSITModel<T>& model, RandomFeatureExtractor<T>& extractor, TrainConfig<T> cfg)
        : model_(model), extractor_(extractor), cfg_(cfg),
          opt_g_(model.generator_params(), {cfg.lr_g, cfg.beta1, cfg.beta2, cfg.adam_eps}),
          opt_d_(model.discriminator_params(), {cfg.lr_d, cfg.beta1, cfg.beta2, cfg.adam_eps}),
          z_rng_(derive_seed(cfg.seed, 0x7A01)) {}

    // One alternating update. `content`/`style` condition the generator,
    // `d_real` is what the discriminator treats as real, and `p_target` is the
    // perceptual reference. For paired data both are the ground-truth image;
    // for unpaired stylization d_real is the style exemplar and p_target the
    // content image.
    StepMetrics step(const Tensor<T>& content, const Tensor<T>& style,
                     const Tensor<T>& d_real, const Tensor<T>& p_target, const Tensor<T>& z) {
        const auto t0 = std::chrono::steady_clock::now();
        auto& tape = Tape<T>::active();
        StepMetrics metrics;
        metrics.step = ++steps_done_;

        // --- discriminator phase (generator runs without a tape) ---
        Tensor<T> fake_detached;
        {
            NoGradGuard<T> guard;
            fake_detached = model_.generate(content, style, z, /*training=*/true);
        }
        auto real_outs = model_.discriminate(d_real, content, /*training=*/true);
        auto fake_outs = model_.discriminate(fake_detached, content, /*training=*/true);
        auto loss_d = hinge_d_loss(scores(real_outs), scores(fake_outs));
        metrics.loss_d = double(loss_d.item());
        opt_d_.zero_grad();
        opt_g_.zero_grad();
        loss_d.backward();
        opt_d_.step();
        tape.clear();

        // --- generator phase (fresh forward on the same batch) ---
        Tensor<T> fake = model_.generate(content, style, z, /*training=*/true);
        auto fake_outs2 = model_.discriminate(fake, content, /*training=*/true);
        std::vector<std::vector<Tensor<T>>> real_taps;
        {
            NoGradGuard<T> guard;
            auto real_outs2 = model_.discriminate(d_real, content, /*training=*/true);
            for (auto& o : real_outs2) real_taps.push_back(o.taps);
        }
        std::vector<std::vector<Tensor<T>>> fake_taps;
        for (auto& o : fake_outs2) fake_taps.push_back(o.taps);

        auto adv = hinge_g_loss(scores(fake_outs2));
        auto lp = perceptual_loss(extractor_, fake, p_target, cfg_.perceptual_squared);
        auto lfm = feature_matching_loss(fake_taps, real_taps);
        auto total = total_g_loss(adv, lp, lfm, cfg_.weights);
        metrics.loss_g_adv = double(adv.item());
        metrics.loss_p = double(lp.item());
        metrics.loss_fm = double(lfm.item());
        opt_g_.zero_grad();
        opt_d_.zero_grad();
        total.backward();
        opt_g_.step();
        tape.clear();

        metrics.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        return metrics;
    }

    // fresh noise for a batch: advances the trainer's own RNG stream
    Tensor<T> sample_z(std::size_t n, std::size_t h, std::size_t w) {
        const Shape shape = model_.noise_shape(n, h, w);
        std::vector<T> v(shape_numel(shape));
        for (auto& x : v) x = static_cast<T>(z_rng_.normal());
        return Tensor<T>::from(shape, std::move(v));
    }

    Adam<T>& opt_g() { return opt_g_; }
    Adam<T>& opt_d() { return opt_d_; }
    Rng& z_rng() { return z_rng_; }
    std::uint64_t steps_done() const { return steps_done_; }
    void set_steps_done(std::uint64_t s) { steps_done_ = s; }
    const TrainConfig<T>& config() const { return cfg_; }

  private:
    static std::vector<Tensor<T>> scores(std::vector<DScaleOutput<T>>& outs) {
        std::vector<Tensor<T>> s;
        s.reserve(outs.size());
        for (auto& o : outs) s.push_back(o.score);
        return s;
    }

    TSITModel<T>& model_;
    RandomFeatureExtractor<T>& extractor_;
    TrainConfig<T> cfg_;
    Adam<T> opt_g_, opt_d_;
    Rng z_rng_;
    std::uint64_t steps_done_ = 0;
};

// ---------------------------------------------------------------------------
// training-state capture/restore
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void put_adam(Checkpoint& ck, const std::string& prefix, Adam<T>& opt) {
    auto& m = opt.m_state();
    auto& v = opt.v_state();
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        ck.tensors.push_back(
            NamedArray::make(prefix + ".m." + params[i].name, params[i].tensor.shape(), m[i]));
        ck.tensors.push_back(
            NamedArray::make(prefix + ".v." + params[i].name, params[i].tensor.shape(), v[i]));
    }
    ck.tensors.push_back(NamedArray::make<std::uint64_t>(prefix + ".t", Shape{1},
                                                         {opt.step_count()}));
}

template <typename T>
void get_adam(const Checkpoint& ck, const std::string& prefix, Adam<T>& opt) {
    auto& m = opt.m_state();
    auto& v = opt.v_state();
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = ck.require(prefix + ".m." + params[i].name).template as<T>();
        v[i] = ck.require(prefix + ".v." + params[i].name).template as<T>();
        if (m[i].size() != params[i].tensor.numel() || v[i].size() != params[i].tensor.numel())
            throw CheckpointError("optimizer state size mismatch for '" + params[i].name + "'");
    }
    opt.set_step_count(ck.require(prefix + ".t").template as<std::uint64_t>().at(0));
}

}  // namespace detail

template <typename T>
Checkpoint capture_training_state(TSITModel<T>& model, Trainer<T>& trainer,
                                  const std::string& config_text = "") {
    Checkpoint ck;
    ck.step = trainer.steps_done();
    ck.config_text = config_text;
    for (auto& p : model.generator_params())
        ck.tensors.push_back(NamedArray::make("param." + p.name, p.tensor.shape(), p.tensor.vec()));
    for (auto& p : model.discriminator_params())
        ck.tensors.push_back(NamedArray::make("param." + p.name, p.tensor.shape(), p.tensor.vec()));
    for (auto& b : model.buffers())
        ck.tensors.push_back(NamedArray::make("buffer." + b.name, b.shape, *b.data));
    detail::put_adam(ck, "adam_g", trainer.opt_g());
    detail::put_adam(ck, "adam_d", trainer.opt_d());
    ck.rng_states.emplace_back("trainer.z_rng", trainer.z_rng().state());
    return ck;
}

template <typename T>
void restore_training_state(const Checkpoint& ck, TSITModel<T>& model, Trainer<T>& trainer) {
    auto restore_params = [&](std::vector<TensorRef<T>> params) {
        for (auto& p : params) {
            const auto& a = ck.require("param." + p.name);
            if (a.shape != p.tensor.shape())
                throw CheckpointError("shape mismatch restoring '" + p.name + "'");
            p.tensor.vec() = a.template as<T>();
        }
    };
    restore_params(model.generator_params());
    restore_params(model.discriminator_params());
    for (auto& b : model.buffers()) {
        const auto& a = ck.require("buffer." + b.name);
        if (a.numel() != b.data->size())
            throw CheckpointError("buffer size mismatch restoring '" + b.name + "'");
        *b.data = a.template as<T>();
    }
    detail::get_adam(ck, "adam_g", trainer.opt_g());
    detail::get_adam(ck, "adam_d", trainer.opt_d());
    if (const auto* s = ck.find_rng("trainer.z_rng")) trainer.z_rng().set_state(*s);
    trainer.set_steps_done(ck.step);
}

// Restore model parameters and buffers only (no optimizer or RNG state).
// Used when loading a checkpoint for inference, where no Trainer exists.
template <typename T>
void load_model_state(const Checkpoint& ck, TSITModel<T>& model) {
    auto restore_params = [&](std::vector<TensorRef<T>> params) {
        for (auto& p : params) {
            const auto& a = ck.require("param." + p.name);
            if (a.shape != p.tensor.shape())
                throw CheckpointError("shape mismatch restoring '" + p.name + "'");
            p.tensor.vec() = a.template as<T>();
        }
    };
    restore_params(model.generator_params());
    restore_params(model.discriminator_params());
    for (auto& b : model.buffers()) {
        const auto& a = ck.require("buffer." + b.name);
        if (a.numel() != b.data->size())
            throw CheckpointError("buffer size mismatch restoring '" + b.name + "'");
        *b.data = a.template as<T>();
    }
}

// Overwrite a feature extractor's frozen weights from trained values stored
// in the checkpoint tensor format (names: "fx.stageN.weight" / ".bias").
template <typename T>
void load_extractor_weights(RandomFeatureExtractor<T>& fx, const Checkpoint& ck) {
    for (auto& p : fx.collect_params("fx")) {
        const auto& a = ck.require(p.name);
        if (a.shape != p.tensor.shape())
            throw CheckpointError("shape mismatch restoring '" + p.name + "'");
        p.tensor.vec() = a.template as<T>();
    }
}

}  // namespace tsit
