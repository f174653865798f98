#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tsit/cli.hpp"
#include "tsit/checkpoint.hpp"
#include "tsit/data.hpp"
#include "tsit/linalg.hpp"
#include "tsit/testing/gradcheck.hpp"
#include "tsit/train.hpp"

namespace tsit {

namespace {

using testing::check_gradients;
using testing::GradCheckReport;

class Suite {
  public:
    Suite(std::string name, std::ostream& log) : name_(std::move(name)), log_(log) {}

    void check(bool ok, const std::string& case_name, const std::string& detail = "") {
        ++total_;
        if (ok) {
            ++passed_;
            return;
        }
        if (first_failure_.empty())
            first_failure_ = name_ + "/" + case_name + (detail.empty() ? "" : ": " + detail);
        log_ << "FAILED " << name_ << "/" << case_name
             << (detail.empty() ? "" : ": " + detail) << "\n";
    }

    void gradcase(const GradCheckReport& report, const std::string& case_name) {
        std::ostringstream os;
        os << report.detail << " [" << report.significant << "/" << report.checked
           << " significant, worst rel " << report.worst_rel << "]";
        check(report.ok, case_name, report.ok ? "" : os.str());
        elements_ += report.checked;
        worst_rel_ = std::max(worst_rel_, report.worst_rel);
    }

    bool summarize() {
        log_ << name_ << ": " << passed_ << "/" << total_ << " ok";
        if (elements_ != 0)
            log_ << " (" << elements_ << " gradient elements, worst rel " << worst_rel_ << ")";
        log_ << "\n";
        return passed_ == total_;
    }

    const std::string& first_failure() const { return first_failure_; }

  private:
    std::string name_;
    std::ostream& log_;
    int total_ = 0, passed_ = 0;
    std::size_t elements_ = 0;
    double worst_rel_ = 0.0;
    std::string first_failure_;
};

Tensor<double> seeded_input(const Shape& shape, std::uint64_t seed, bool requires_grad) {
    Rng rng(seed);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal();
    Tensor<double> t = Tensor<double>::from(shape, std::move(v));
    if (requires_grad) t.set_requires_grad(true);
    return t;
}

// loss reduction that keeps every element's gradient distinct
Tensor<double> squash(const Tensor<double>& y) { return sum_all(mul(y, y)); }

void gradient_suite(Suite& suite) {
    {
        Rng rng(11);
        ConvOpts opts{1, 1, false, true, 1};
        ConvLayer<double> conv(2, 3, 3, opts, rng);
        Tensor<double> x = seeded_input({1, 2, 5, 5}, 12, true);
        suite.gradcase(check_gradients([&] { return squash(conv.forward(x, true)); },
                                       {conv.weight(), conv.bias(), x}, 1e-4, 1e-4, "conv2d"),
                       "conv2d");
    }
    {
        Rng rng(21);
        // power_iters = 0 keeps the singular-vector state frozen during the
        // finite-difference sweep; warm the estimate up first
        ConvOpts opts{2, 1, true, true, 0};
        ConvLayer<double> conv(3, 2, 4, opts, rng);
        conv.power_iterate(10);
        Tensor<double> x = seeded_input({2, 3, 6, 6}, 22, true);
        suite.gradcase(
            check_gradients([&] { return squash(conv.forward(x, true)); },
                            {conv.weight(), conv.bias(), x}, 1e-4, 1e-4, "conv2d/stride2-sn"),
            "conv2d/stride2-sn");
    }
    {
        // project onto a fixed random direction: the sum of squares of a
        // normalized output is nearly constant, which starves the check
        Tensor<double> x = seeded_input({2, 3, 4, 4}, 31, true);
        Tensor<double> m = seeded_input({2, 3, 4, 4}, 32, false);
        suite.gradcase(check_gradients(
                           [&] {
                               auto st = batch_stats(x);
                               auto normed = div(sub(x, reshape(st.first, {1, 3, 1, 1})),
                                                 reshape(st.second, {1, 3, 1, 1}));
                               return sum_all(mul(normed, m));
                           },
                           {x}, 1e-4, 1e-4, "batch_norm"),
                       "batch_norm");
    }
    {
        Tensor<double> x = seeded_input({2, 2, 4, 4}, 41, true);
        suite.gradcase(check_gradients([&] { return squash(instance_norm(x)); }, {x}, 1e-4,
                                       1e-4, "instance_norm"),
                       "instance_norm");
    }
    {
        Rng rng(51);
        FadeModule<double> fade(2, 3, false, rng);
        Tensor<double> z = seeded_input({2, 3, 4, 4}, 52, true);
        Tensor<double> f = seeded_input({2, 2, 4, 4}, 53, true);
        std::vector<Tensor<double>> params{z, f, fade.gamma_conv().weight(),
                                           fade.beta_conv().weight()};
        suite.gradcase(check_gradients([&] { return squash(fade.forward(z, f, true)); },
                                       params, 1e-4, 1e-4, "fade"),
                       "fade");
    }
    {
        Tensor<double> z = seeded_input({1, 3, 4, 4}, 61, true);
        Tensor<double> f = seeded_input({1, 3, 6, 6}, 62, true);
        suite.gradcase(check_gradients([&] { return squash(fadain_forward(z, f)); }, {z, f},
                                       1e-4, 1e-4, "fadain"),
                       "fadain");
    }
    {
        Tensor<double> real = seeded_input({1, 1, 3, 3}, 71, true);
        Tensor<double> fake = seeded_input({1, 1, 3, 3}, 72, true);
        suite.gradcase(check_gradients([&] { return hinge_d_loss<double>({real}, {fake}); },
                                       {real, fake}, 1e-4, 1e-4, "hinge_d"),
                       "hinge_d");
        suite.gradcase(check_gradients([&] { return hinge_g_loss<double>({fake}); }, {fake},
                                       1e-4, 1e-4, "hinge_g"),
                       "hinge_g");
    }
    {
        Tensor<double> x = seeded_input({1, 2, 3, 3}, 81, true);
        suite.gradcase(check_gradients(
                           [&] {
                               auto up = upsample_nearest(x, 2);
                               return squash(leaky_relu(downsample_nearest(up, 2), 0.2));
                           },
                           {x}, 1e-4, 1e-4, "resample"),
                       "resample");
    }
    {
        RandomFeatureExtractor<double> fx(91);
        Tensor<double> g = seeded_input({1, 3, 8, 8}, 92, true);
        Tensor<double> t = seeded_input({1, 3, 8, 8}, 93, false);
        suite.gradcase(check_gradients([&] { return perceptual_loss(fx, g, t, false); }, {g},
                                       1e-4, 1e-4, "perceptual"),
                       "perceptual");
    }
    {
        Tensor<double> a = seeded_input({1, 2, 3, 3}, 101, true);
        Tensor<double> b = seeded_input({1, 2, 3, 3}, 102, true);
        Tensor<double> r = seeded_input({1, 2, 3, 3}, 103, false);
        suite.gradcase(
            check_gradients([&] { return feature_matching_loss<double>({{a, b}}, {{r, r}}); },
                            {a, b}, 1e-4, 1e-4, "feature_matching"),
            "feature_matching");
    }
}

void oracle_suite(Suite& suite) {
    auto score = [](double v) {
        Tensor<double> t = Tensor<double>::filled({1, 1, 1, 1}, v);
        return t;
    };
    {
        const double at_margin = hinge_d_loss<double>({score(1.0)}, {score(-1.0)}).item();
        suite.check(std::abs(at_margin) < 1e-12, "hinge_d(1,-1)==0",
                    "got " + std::to_string(at_margin));
        const double at_zero = hinge_d_loss<double>({score(0.0)}, {score(0.0)}).item();
        suite.check(std::abs(at_zero - 2.0) < 1e-12, "hinge_d(0,0)==2",
                    "got " + std::to_string(at_zero));
        const double g = hinge_g_loss<double>({score(0.37)}).item();
        suite.check(std::abs(g + 0.37) < 1e-12, "hinge_g(s)==-mean(s)",
                    "got " + std::to_string(g));
    }
    {
        Rng rng(111);
        std::vector<float> v(2 * 3 * 6 * 6);
        for (auto& x : v) x = float(rng.normal());
        Tensor<float> z = Tensor<float>::from({2, 3, 6, 6}, std::move(v));
        Tensor<float> out = fadain_forward(z, z);
        float worst = 0;
        for (std::size_t i = 0; i < z.numel(); ++i)
            worst = std::max(worst, std::abs(out.data()[i] - z.data()[i]));
        suite.check(worst < 1e-5f, "fadain(z,z)==z", "worst |diff| " + std::to_string(worst));
    }
    {
        Rng rng(121);
        FadeModule<double> fade(2, 3, false, rng);
        for (auto& v : fade.gamma_conv().weight().vec()) v = 0.0;
        for (auto& v : fade.gamma_conv().bias().vec()) v = 1.0;
        for (auto& v : fade.beta_conv().weight().vec()) v = 0.0;
        for (auto& v : fade.beta_conv().bias().vec()) v = 0.0;
        Tensor<double> z = seeded_input({2, 3, 5, 5}, 122, false);
        Tensor<double> f = seeded_input({2, 2, 5, 5}, 123, false);
        Tensor<double> got = fade.forward(z, f, true);
        auto st = batch_stats(z);
        Tensor<double> want = div(sub(z, reshape(st.first, {1, 3, 1, 1})),
                                  reshape(st.second, {1, 3, 1, 1}));
        double worst = 0;
        for (std::size_t i = 0; i < z.numel(); ++i)
            worst = std::max(worst, std::abs(got.data()[i] - want.data()[i]));
        suite.check(worst < 1e-6, "fade(gamma=1,beta=0)==batch_norm",
                    "worst |diff| " + std::to_string(worst));
    }
    {
        Tensor<float> p = Tensor<float>::filled({4}, 5.0f);
        p.set_requires_grad(true);
        Adam<float> opt({TensorRef<float>{"p", p}}, {1e-3f, 0.0f, 0.9f, 1e-8f});
        Tensor<float> loss = sum_all(mul_scalar(p, 2.0f));
        opt.zero_grad();
        loss.backward();
        opt.step();
        bool in_range = true;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const float moved = std::abs(p.data()[i] - 5.0f);
            in_range = in_range && moved >= 0.99f * 1e-3f && moved <= 1e-3f + 1e-9f;
        }
        suite.check(in_range, "adam_first_step~lr");
        Tape<float>::active().clear();
    }
}

void invariant_suite(Suite& suite) {
    {
        bool all_close = true;
        std::string detail;
        for (std::uint64_t seed : {2u, 7u}) {
            Rng rng(seed * 1000 + 7);
            ConvOpts opts{1, 1, true, false, 1};
            ConvLayer<double> layer(16, 64, 2, opts, rng);
            Rng wr(seed * 99 + 5);
            for (auto& v : layer.weight().vec()) v = wr.normal();
            layer.power_iterate(25);
            const double svd = largest_singular_value(layer.weight().vec(), 64, 64);
            const double rel = std::abs(layer.sigma_estimate() - svd) / svd;
            if (rel >= 0.02) {
                all_close = false;
                detail = "seed " + std::to_string(seed) + " rel " + std::to_string(rel);
            }
        }
        suite.check(all_close, "spectral_norm~svd", detail);
    }
    {
        NetConfig cfg;
        cfg.k = 2;
        cfg.base_width = 8;
        cfg.d_scales = 1;
        cfg.d_layers = 2;
        TSITModel<float> model(cfg, 131);
        NoGradGuard<float> guard;
        SyntheticDataset<float> ds(1, 16, 16, 132);
        auto s = ds.sample(0);
        Tensor<float> z = sample_noise<float>(model.noise_shape(1, 16, 16), 133);
        Tensor<float> out = model.generate(s.content, s.style, z, true);
        suite.check(out.shape() == Shape{1, 3, 16, 16}, "generator_extent",
                    "got " + shape_str(out.shape()));

        Checkpoint ck;
        for (auto& p : model.generator_params())
            ck.tensors.push_back(NamedArray::make("param." + p.name, p.tensor.shape(),
                                                  p.tensor.vec()));
        const std::string path =
            (std::filesystem::temp_directory_path() / "tsit_selftest_ck.tsit").string();
        save_checkpoint(path, ck);
        const Checkpoint back = load_checkpoint(path);
        std::filesystem::remove(path);
        bool identical = true;
        for (auto& p : model.generator_params())
            identical = identical &&
                        back.require("param." + p.name).template as<float>() == p.tensor.vec();
        suite.check(identical, "checkpoint_roundtrip");
    }
    {
        Rng rng(141);
        ImageU8 img;
        img.width = 9;
        img.height = 7;
        img.pixels.resize(9 * 7 * 3);
        for (auto& b : img.pixels) b = std::uint8_t(rng.uniform01() * 256.0);
        const ImageU8 back = decode_png(encode_png(img));
        suite.check(back.width == img.width && back.height == img.height &&
                        back.pixels == img.pixels,
                    "png_roundtrip");
    }
    {
        const RunConfig cfg = parse_run_config(preset_config("desk-style-transfer"));
        const std::string once = serialize_run_config(cfg);
        const std::string twice = serialize_run_config(parse_run_config(once));
        suite.check(once == twice, "config_roundtrip");
    }
}

}  // namespace

int run_selftest(std::ostream& log) {
    Suite gradients("gradients", log);
    gradient_suite(gradients);
    const bool g_ok = gradients.summarize();

    Suite oracles("oracles", log);
    oracle_suite(oracles);
    const bool o_ok = oracles.summarize();

    Suite invariants("invariants", log);
    invariant_suite(invariants);
    const bool i_ok = invariants.summarize();

    if (g_ok && o_ok && i_ok) {
        log << "selftest: all suites passed\n";
        return kExitOk;
    }
    for (const auto* s : {&gradients, &oracles, &invariants})
        if (!s->first_failure().empty()) {
            log << "selftest: FAILED at " << s->first_failure() << "\n";
            break;
        }
    return kExitSelftestFail;
}

}  // namespace tsit
