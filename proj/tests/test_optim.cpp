#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "tsit/train.hpp"

using namespace tsit;

namespace {

template <typename T>
Tensor<T> randn_t(const Shape& shape, Rng& rng, bool grad = false, T scale = T(1)) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal()) * scale;
    auto t = Tensor<T>::from(shape, std::move(v));
    t.set_requires_grad(grad);
    return t;
}

// independent scalar Adam, stepped by hand
struct ScalarAdam {
    double lr, b1, b2, eps;
    double m = 0, v = 0;
    int t = 0;
    double step(double x, double g) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        return x - lr * mhat / (std::sqrt(vhat) + eps);
    }
};

// smooth 16x16 test images: low-resolution noise, nearest-upsampled
template <typename T>
std::vector<Tensor<T>> make_toy_images(std::size_t count, std::uint64_t seed) {
    std::vector<Tensor<T>> out;
    Rng rng(derive_seed(seed, 0xDA7A));
    for (std::size_t i = 0; i < count; ++i) {
        NoGradGuard<T> guard;
        auto coarse = randn_t<T>({1, 3, 4, 4}, rng, false, T(0.5));
        out.push_back(upsample_nearest(coarse, 4));
    }
    return out;
}

// fixed "repaint": rotate channels and damp, so targets differ from contents
template <typename T>
Tensor<T> repaint(const Tensor<T>& x) {
    NoGradGuard<T> guard;
    const std::size_t C = x.dim(1), plane = x.dim(2) * x.dim(3);
    std::vector<T> v(x.numel());
    for (std::size_t n = 0; n < x.dim(0); ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const T* src = x.data() + (n * C + (c + 1) % C) * plane;
            T* dst = v.data() + (n * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = T(0.9) * src[i];
        }
    return Tensor<T>::from(x.shape(), std::move(v));
}

template <typename T>
Tensor<T> stack_pair(const Tensor<T>& a, const Tensor<T>& b) {
    NoGradGuard<T> guard;
    return concat(a, b, 0);
}

NetConfig toy_net() {
    NetConfig cfg;
    cfg.k = 2;
    cfg.base_width = 8;
    cfg.width_divisor = 2;
    cfg.d_scales = 2;
    cfg.d_layers = 3;
    return cfg;
}

template <typename T>
std::vector<std::vector<T>> snapshot(std::vector<TensorRef<T>> params) {
    std::vector<std::vector<T>> out;
    for (auto& p : params) out.push_back(p.tensor.vec());
    return out;
}

template <typename T>
bool bit_equal(const std::vector<std::vector<T>>& a, const std::vector<std::vector<T>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("adam first step moves each coordinate by nearly the learning rate") {
    for (double lr : {1e-4, 1e-3, 0.1}) {
        auto x = Tensor<double>::from({4}, {1.0, -2.0, 0.5, 3.0});
        x.set_requires_grad(true);
        auto before = x.vec();
        Adam<double> opt({{"x", x}}, {lr, 0.0, 0.9, 1e-8});
        auto loss = sum_all(mul(x, Tensor<double>::from({4}, {0.7, -1.3, 2.0, 0.05})));
        loss.backward();
        opt.step();
        for (std::size_t i = 0; i < 4; ++i) {
            const double delta = std::abs(x.vec()[i] - before[i]);
            CHECK(delta <= lr * (1 + 1e-12));
            CHECK(delta >= 0.99 * lr);
        }
        Tape<double>::active().clear();
    }
}

TEST_CASE("adam with beta1=0 keeps first moment equal to the current gradient") {
    auto x = Tensor<double>::from({3}, {1.0, 2.0, 3.0});
    x.set_requires_grad(true);
    Adam<double> opt({{"x", x}}, {1e-3, 0.0, 0.9, 1e-8});
    auto loss = sum_all(mul(x, x));  // grad = 2x
    loss.backward();
    auto grad = x.grad();
    opt.step();
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(opt.m_state()[0][i] == doctest::Approx(grad[i]).epsilon(1e-15));
    Tape<double>::active().clear();
}

TEST_CASE("adam matches a hand-stepped scalar oracle over 3 steps of a quadratic") {
    // minimize 0.5 * (x - 3)^2 from x = 1; gradient is x - 3
    auto x = Tensor<double>::scalar(1.0);
    x.set_requires_grad(true);
    const AdamConfig<double> cfg{0.1, 0.0, 0.9, 1e-8};
    Adam<double> opt({{"x", x}}, cfg);
    ScalarAdam oracle{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
    double ox = 1.0;
    for (int i = 0; i < 3; ++i) {
        opt.zero_grad();
        auto loss = mul_scalar(square(add_scalar(x, -3.0)), 0.5);
        loss.backward();
        ox = oracle.step(ox, ox - 3.0);
        opt.step();
        Tape<double>::active().clear();
        CHECK(x.item() == doctest::Approx(ox).epsilon(1e-10));
    }
    // also with nonzero beta1 to exercise the bias correction
    auto y = Tensor<double>::scalar(1.0);
    y.set_requires_grad(true);
    const AdamConfig<double> cfg2{0.1, 0.5, 0.9, 1e-8};
    Adam<double> opt2({{"y", y}}, cfg2);
    ScalarAdam oracle2{cfg2.lr, cfg2.beta1, cfg2.beta2, cfg2.eps};
    double oy = 1.0;
    for (int i = 0; i < 3; ++i) {
        opt2.zero_grad();
        auto loss = mul_scalar(square(add_scalar(y, -3.0)), 0.5);
        loss.backward();
        oy = oracle2.step(oy, oy - 3.0);
        opt2.step();
        Tape<double>::active().clear();
        CHECK(y.item() == doctest::Approx(oy).epsilon(1e-10));
    }
}

TEST_CASE("adam leaves parameters untouched when gradients are zero or lr is zero") {
    auto x = Tensor<double>::from({3}, {1.5, -2.5, 0.25});
    x.set_requires_grad(true);
    auto before = x.vec();
    Adam<double> opt({{"x", x}}, {1e-2, 0.0, 0.9, 1e-8});
    opt.step();  // no gradient at all
    CHECK(x.vec() == before);

    auto y = Tensor<double>::from({2}, {1.0, 2.0});
    y.set_requires_grad(true);
    auto ybefore = y.vec();
    Adam<double> opt0({{"y", y}}, {0.0, 0.0, 0.9, 1e-8});
    auto loss = sum_all(mul(y, y));
    loss.backward();
    opt0.step();
    CHECK(y.vec() == ybefore);
    Tape<double>::active().clear();
}

TEST_CASE("trainer: one step produces finite metrics and changes both parameter sets") {
    auto cfg = toy_net();
    TSITModel<float> model(cfg, 5);
    RandomFeatureExtractor<float> fx(6);
    TrainConfig<float> tc;
    tc.seed = 7;
    Trainer<float> trainer(model, fx, tc);

    auto imgs = make_toy_images<float>(2, 3);
    auto content = stack_pair(imgs[0], imgs[1]);
    auto target = repaint(content);
    auto g_before = snapshot(model.generator_params());
    auto d_before = snapshot(model.discriminator_params());
    auto z = trainer.sample_z(2, 16, 16);
    auto m = trainer.step(content, target, target, target, z);
    CHECK(m.step == 1);
    CHECK(std::isfinite(m.loss_d));
    CHECK(std::isfinite(m.loss_g_adv));
    CHECK(std::isfinite(m.loss_p));
    CHECK(std::isfinite(m.loss_fm));
    CHECK(m.loss_p > 0.0);
    CHECK(m.wall_ms > 0.0);
    CHECK_FALSE(bit_equal(g_before, snapshot(model.generator_params())));
    CHECK_FALSE(bit_equal(d_before, snapshot(model.discriminator_params())));
    auto line = m.format();
    CHECK(line.find("step 1") != std::string::npos);
    CHECK(line.find("L_D") != std::string::npos);
    CHECK(line.find("L_P") != std::string::npos);
    CHECK(line.find("wall_ms") != std::string::npos);
}

TEST_CASE("trainer: zero learning rate freezes exactly that network") {
    auto imgs = make_toy_images<float>(2, 9);
    auto content = stack_pair(imgs[0], imgs[1]);
    auto target = repaint(content);

    {
        TSITModel<float> model(toy_net(), 11);
        RandomFeatureExtractor<float> fx(12);
        TrainConfig<float> tc;
        tc.lr_d = 0.0f;
        Trainer<float> trainer(model, fx, tc);
        auto d_before = snapshot(model.discriminator_params());
        auto g_before = snapshot(model.generator_params());
        trainer.step(content, target, target, target, trainer.sample_z(2, 16, 16));
        CHECK(bit_equal(d_before, snapshot(model.discriminator_params())));
        CHECK_FALSE(bit_equal(g_before, snapshot(model.generator_params())));
    }
    {
        TSITModel<float> model(toy_net(), 11);
        RandomFeatureExtractor<float> fx(12);
        TrainConfig<float> tc;
        tc.lr_g = 0.0f;
        Trainer<float> trainer(model, fx, tc);
        auto d_before = snapshot(model.discriminator_params());
        auto g_before = snapshot(model.generator_params());
        trainer.step(content, target, target, target, trainer.sample_z(2, 16, 16));
        CHECK(bit_equal(g_before, snapshot(model.generator_params())));
        CHECK_FALSE(bit_equal(d_before, snapshot(model.discriminator_params())));
    }
}

TEST_CASE("trainer: identical setups give bit-identical trajectories") {
    auto imgs = make_toy_images<float>(4, 21);
    auto run = [&](std::vector<double>& losses) {
        TSITModel<float> model(toy_net(), 31);
        RandomFeatureExtractor<float> fx(32);
        TrainConfig<float> tc;
        tc.seed = 33;
        Trainer<float> trainer(model, fx, tc);
        for (int s = 0; s < 3; ++s) {
            auto content = stack_pair(imgs[(2 * s) % 4], imgs[(2 * s + 1) % 4]);
            auto target = repaint(content);
            auto m = trainer.step(content, target, target, target,
                                  trainer.sample_z(2, 16, 16));
            losses.push_back(m.loss_d);
            losses.push_back(m.loss_g_adv);
            losses.push_back(m.loss_p);
            losses.push_back(m.loss_fm);
        }
        return snapshot(model.generator_params());
    };
    std::vector<double> la, lb;
    auto pa = run(la);
    auto pb = run(lb);
    CHECK(la == lb);
    CHECK(bit_equal(pa, pb));
}

TEST_CASE("trainer: non-finite input aborts with a numeric error") {
    TSITModel<float> model(toy_net(), 41);
    RandomFeatureExtractor<float> fx(42);
    Trainer<float> trainer(model, fx, {});
    auto imgs = make_toy_images<float>(2, 43);
    auto content = stack_pair(imgs[0], imgs[1]);
    auto bad = content.clone_with_grad();
    bad.vec()[7] = std::numeric_limits<float>::quiet_NaN();
    bad.set_requires_grad(false);
    auto target = repaint(content);
    CHECK_THROWS_AS(trainer.step(bad, target, target, target, trainer.sample_z(2, 16, 16)),
                    NumericError);
    Tape<float>::active().clear();
}

TEST_CASE("toy run: smoothed perceptual loss halves within 200 steps") {
    // reconstruction-dominated settings so 200 steps suffice: high perceptual
    // weight, generator learning faster than the (small) discriminator
    NetConfig net;
    net.k = 2;
    net.base_width = 16;
    net.width_divisor = 2;
    net.d_scales = 2;
    net.d_layers = 3;
    TSITModel<float> model(net, 51);
    RandomFeatureExtractor<float> fx(52);
    TrainConfig<float> tc;
    tc.lr_g = 1e-2f;
    tc.lr_d = 1e-3f;
    tc.weights.lambda_perceptual = 20.0f;
    tc.seed = 53;
    Trainer<float> trainer(model, fx, tc);

    std::vector<Tensor<float>> imgs;
    {
        Rng rng(derive_seed(54, 0xDA7A));
        NoGradGuard<float> guard;
        for (int i = 0; i < 8; ++i)
            imgs.push_back(upsample_nearest(randn_t<float>({1, 3, 4, 4}, rng, false, 0.35f), 4));
    }

    std::vector<double> lp;
    for (int s = 0; s < 200; ++s) {
        auto content = stack_pair(imgs[(2 * s) % 8], imgs[(2 * s + 1) % 8]);
        auto target = repaint(content);
        auto m = trainer.step(content, target, target, target, trainer.sample_z(2, 16, 16));
        lp.push_back(m.loss_p);
    }
    double first = 0, last = 0;
    for (int i = 0; i < 50; ++i) {
        first += lp[i];
        last += lp[150 + i];
    }
    first /= 50;
    last /= 50;
    INFO("window means: first ", first, " last ", last);
    CHECK(last < 0.5 * first);
}

TEST_CASE("checkpoint file round trip is bit-exact and validates its input") {
    Checkpoint ck;
    ck.step = 17;
    ck.config_text = "[net]\nk = 2\n";
    ck.tensors.push_back(NamedArray::make<float>("a", {2, 2}, {1.f, 2.5f, -3.f, 0.125f}));
    ck.tensors.push_back(NamedArray::make<double>("b.c", {3}, {1e-17, -2.0, 5.5}));
    ck.tensors.push_back(NamedArray::make<std::uint64_t>("t", {1}, {42}));
    ck.rng_states.emplace_back("rng", "12345 678 90");

    const std::string path = "/tmp/tsit_test_ck.bin";
    save_checkpoint(path, ck);
    auto back = load_checkpoint(path);
    CHECK(back.step == 17);
    CHECK(back.config_text == ck.config_text);
    REQUIRE(back.tensors.size() == 3);
    CHECK(back.require("a").as<float>() == std::vector<float>{1.f, 2.5f, -3.f, 0.125f});
    CHECK(back.require("b.c").as<double>() == std::vector<double>{1e-17, -2.0, 5.5});
    CHECK(back.require("t").as<std::uint64_t>() == std::vector<std::uint64_t>{42});
    CHECK(back.require("a").shape == Shape{2, 2});
    CHECK(*back.find_rng("rng") == "12345 678 90");
    // dtype confusion is rejected
    CHECK_THROWS_AS(back.require("a").as<double>(), CheckpointError);
    CHECK_THROWS_AS(back.require("missing"), CheckpointError);

    // truncation is detected
    FILE* f = std::fopen(path.c_str(), "rb");
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<char> buf(static_cast<std::size_t>(size));
    REQUIRE(std::fread(buf.data(), 1, buf.size(), f) == buf.size());
    std::fclose(f);
    const std::string trunc = "/tmp/tsit_test_ck_trunc.bin";
    f = std::fopen(trunc.c_str(), "wb");
    std::fwrite(buf.data(), 1, buf.size() - 9, f);
    std::fclose(f);
    CHECK_THROWS_AS(load_checkpoint(trunc), CheckpointError);

    // non-checkpoint data is rejected by the magic
    const std::string junk = "/tmp/tsit_test_ck_junk.bin";
    f = std::fopen(junk.c_str(), "wb");
    std::fwrite("NOPE----", 1, 8, f);
    std::fclose(f);
    CHECK_THROWS_AS(load_checkpoint(junk), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint("/tmp/does_not_exist_tsit.bin"), CheckpointError);
}

TEST_CASE("training state: capture/restore is bit-exact across a fresh model") {
    TSITModel<float> model(toy_net(), 61);
    RandomFeatureExtractor<float> fx(62);
    TrainConfig<float> tc;
    tc.seed = 63;
    Trainer<float> trainer(model, fx, tc);
    auto imgs = make_toy_images<float>(2, 64);
    auto content = stack_pair(imgs[0], imgs[1]);
    auto target = repaint(content);
    for (int s = 0; s < 2; ++s)
        trainer.step(content, target, target, target, trainer.sample_z(2, 16, 16));

    auto ck = capture_training_state(model, trainer, "[net]\nk = 2\n");
    const std::string path = "/tmp/tsit_test_state.bin";
    save_checkpoint(path, ck);
    auto loaded = load_checkpoint(path);

    // different construction seed: every value must come from the checkpoint
    TSITModel<float> fresh(toy_net(), 999);
    RandomFeatureExtractor<float> fx2(62);
    Trainer<float> trainer2(fresh, fx2, tc);
    restore_training_state(loaded, fresh, trainer2);

    CHECK(trainer2.steps_done() == 2);
    CHECK(bit_equal(snapshot(model.generator_params()), snapshot(fresh.generator_params())));
    CHECK(bit_equal(snapshot(model.discriminator_params()),
                    snapshot(fresh.discriminator_params())));
    auto ba = model.buffers();
    auto bb = fresh.buffers();
    REQUIRE(ba.size() == bb.size());
    for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].data == *bb[i].data);
    CHECK(trainer.z_rng().state() == trainer2.z_rng().state());
    CHECK(trainer.opt_g().m_state() == trainer2.opt_g().m_state());
    CHECK(trainer.opt_d().v_state() == trainer2.opt_d().v_state());
    CHECK(trainer.opt_g().step_count() == trainer2.opt_g().step_count());
}

TEST_CASE("resuming from a checkpoint reproduces uninterrupted training bit-exactly") {
    auto imgs = make_toy_images<float>(4, 71);
    auto batch = [&](std::uint64_t s) {
        auto content = stack_pair(imgs[(2 * s) % 4], imgs[(2 * s + 1) % 4]);
        return std::make_pair(content, repaint(content));
    };
    TrainConfig<float> tc;
    tc.seed = 72;

    // uninterrupted: 20 steps
    TSITModel<float> model_a(toy_net(), 73);
    RandomFeatureExtractor<float> fx_a(74);
    Trainer<float> trainer_a(model_a, fx_a, tc);
    Checkpoint mid;
    for (int s = 0; s < 20; ++s) {
        if (s == 10) mid = capture_training_state(model_a, trainer_a);
        auto [content, target] = batch(trainer_a.steps_done());
        trainer_a.step(content, target, target, target, trainer_a.sample_z(2, 16, 16));
    }

    // resumed: restore the mid-run state into a differently-seeded model
    const std::string path = "/tmp/tsit_test_resume.bin";
    save_checkpoint(path, mid);
    TSITModel<float> model_b(toy_net(), 1000);
    RandomFeatureExtractor<float> fx_b(74);
    Trainer<float> trainer_b(model_b, fx_b, tc);
    restore_training_state(load_checkpoint(path), model_b, trainer_b);
    CHECK(trainer_b.steps_done() == 10);
    for (int s = 0; s < 10; ++s) {
        auto [content, target] = batch(trainer_b.steps_done());
        trainer_b.step(content, target, target, target, trainer_b.sample_z(2, 16, 16));
    }

    CHECK(trainer_a.steps_done() == trainer_b.steps_done());
    CHECK(bit_equal(snapshot(model_a.generator_params()),
                    snapshot(model_b.generator_params())));
    CHECK(bit_equal(snapshot(model_a.discriminator_params()),
                    snapshot(model_b.discriminator_params())));
    auto ba = model_a.buffers();
    auto bb = model_b.buffers();
    for (std::size_t i = 0; i < ba.size(); ++i) CHECK(*ba[i].data == *bb[i].data);
}
