#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tsit/blocks.hpp"
#include "tsit/testing/gradcheck.hpp"

using namespace tsit;

namespace {

Tensor<double> randn(Shape shape, std::uint64_t seed, bool requires_grad = false,
                     double scale = 1.0, double offset = 0.0) {
    Rng rng(seed);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal() * scale + offset;
    return Tensor<double>::from(std::move(shape), std::move(v), requires_grad);
}

double l2_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.vec()[i] - b.vec()[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("stream block halves extent and grows channels (1x8x16x16 -> 1x16x8x8)") {
    Rng rng(101);
    StreamResBlock<double> blk(8, 16, /*spectral=*/true, rng);
    auto x = randn({1, 8, 16, 16}, 102);
    auto y = blk.forward(x, false);
    CHECK(y.shape() == Shape{1, 16, 8, 8});
}

TEST_CASE("stream block rejects odd extents") {
    Rng rng(103);
    StreamResBlock<double> blk(4, 8, false, rng);
    CHECK_THROWS_AS(blk.forward(Tensor<double>::zeros({1, 4, 5, 6}), false), ShapeError);
    CHECK_THROWS_AS(blk.forward(Tensor<double>::zeros({1, 8, 6, 6}), false), ShapeError);
}

TEST_CASE("stream block with zeroed main path equals its skip path") {
    Rng rng(104);
    StreamResBlock<double> blk(3, 5, false, rng);
    for (auto& v : blk.conv1().weight().vec()) v = 0.0;
    for (auto& v : blk.conv1().bias().vec()) v = 0.0;
    for (auto& v : blk.conv2().weight().vec()) v = 0.0;
    for (auto& v : blk.conv2().bias().vec()) v = 0.0;
    auto x = randn({1, 3, 8, 8}, 105);
    auto y = blk.forward(x, false);
    auto d = downsample_nearest(x, 2);
    auto skip = leaky_relu(instance_norm(blk.skip_conv().forward(d, false)), 0.2);
    for (std::size_t i = 0; i < y.numel(); ++i)
        CHECK(y.vec()[i] == doctest::Approx(skip.vec()[i]).epsilon(1e-12));
}

TEST_CASE("stream block matches the composed-primitive oracle") {
    Rng rng(106);
    StreamResBlock<double> blk(4, 6, false, rng);
    auto x = randn({2, 4, 8, 8}, 107);
    auto y = blk.forward(x, false);
    // independent composition from the same verified primitives
    auto d = downsample_nearest(x, 2);
    auto m = leaky_relu(instance_norm(blk.conv1().forward(d, false)), 0.2);
    m = leaky_relu(instance_norm(blk.conv2().forward(m, false)), 0.2);
    auto s = leaky_relu(instance_norm(blk.skip_conv().forward(d, false)), 0.2);
    auto expect = add(m, s);
    for (std::size_t i = 0; i < y.numel(); ++i)
        CHECK(std::abs(y.vec()[i] - expect.vec()[i]) < 1e-5);
}

TEST_CASE("fade block doubles extent and maps channels (1x16x8x8 -> 1x8x16x16)") {
    Rng rng(108);
    FadeResBlock<double> blk(16, 8, 12, /*concat=*/false, /*upsample_last=*/true,
                             /*spectral=*/true, /*spectral_fade=*/true, rng);
    auto z = randn({1, 16, 8, 8}, 109);
    auto f = randn({1, 12, 8, 8}, 110);
    auto y = blk.forward(z, f, false);
    CHECK(y.shape() == Shape{1, 8, 16, 16});
    CHECK_THROWS_AS(blk.forward(z, Tensor<double>::zeros({1, 12, 4, 4}), false), ShapeError);
}

TEST_CASE("fade block with gamma=1/beta=0 ignores the injected features") {
    Rng rng(111);
    FadeResBlock<double> blk(4, 3, 2, false, true, false, false, rng);
    for (FadeModule<double>* fm : {&blk.fade1(), &blk.fade2(), &blk.fade_skip()}) {
        for (auto& v : fm->gamma_conv().weight().vec()) v = 0.0;
        for (auto& v : fm->gamma_conv().bias().vec()) v = 1.0;
        for (auto& v : fm->beta_conv().weight().vec()) v = 0.0;
        for (auto& v : fm->beta_conv().bias().vec()) v = 0.0;
    }
    auto z = randn({2, 4, 6, 6}, 112);
    auto f1 = randn({2, 2, 6, 6}, 113);
    auto f2 = randn({2, 2, 6, 6}, 114, false, 3.0, 1.0);
    auto y1 = blk.forward(z, f1, true);
    auto y2 = blk.forward(z, f2, true);
    for (std::size_t i = 0; i < y1.numel(); ++i)
        CHECK(y1.vec()[i] == doctest::Approx(y2.vec()[i]).epsilon(1e-12));
}

TEST_CASE("fade block matches the composed-primitive oracle") {
    Rng rng(115);
    FadeResBlock<double> blk(3, 5, 2, false, true, false, false, rng);
    auto z = randn({1, 3, 4, 4}, 116);
    auto f = randn({1, 2, 4, 4}, 117);
    auto y = blk.forward(z, f, true);
    auto m = leaky_relu(blk.fade1().forward(z, f, true), 0.2);
    m = blk.conv1().forward(m, true);
    m = leaky_relu(blk.fade2().forward(m, f, true), 0.2);
    m = blk.conv2().forward(m, true);
    auto s = leaky_relu(blk.fade_skip().forward(z, f, true), 0.2);
    s = blk.skip_conv().forward(s, true);
    auto expect = upsample_nearest(add(m, s), 2);
    for (std::size_t i = 0; i < y.numel(); ++i)
        CHECK(std::abs(y.vec()[i] - expect.vec()[i]) < 1e-5);
}

TEST_CASE("upsample placement flag: merge-then-upsample equals per-path upsample") {
    Rng rng(118);
    FadeResBlock<double> a(3, 4, 2, false, true, false, false, rng);
    Rng rng2(118);
    FadeResBlock<double> b(3, 4, 2, false, false, false, false, rng2);
    auto z = randn({1, 3, 4, 4}, 119);
    auto f = randn({1, 2, 4, 4}, 120);
    auto ya = a.forward(z, f, true);
    auto yb = b.forward(z, f, true);
    REQUIRE(ya.shape() == yb.shape());
    for (std::size_t i = 0; i < ya.numel(); ++i)
        CHECK(ya.vec()[i] == doctest::Approx(yb.vec()[i]).epsilon(1e-12));
}

TEST_CASE("fade block in concat mode substitutes concat+1x1 at every site") {
    Rng rng(121);
    FadeResBlock<double> blk(3, 4, 2, /*concat=*/true, true, false, false, rng);
    auto z = randn({1, 3, 4, 4}, 122);
    auto f = randn({1, 2, 4, 4}, 123);
    auto y = blk.forward(z, f, true);
    CHECK(y.shape() == Shape{1, 4, 8, 8});
    // feature sensitivity survives the substitution
    auto f2 = randn({1, 2, 4, 4}, 124);
    auto y2 = blk.forward(z, f2, true);
    CHECK(l2_diff(y, y2) > 0.0);
}

TEST_CASE("content sensitivity: fade block reacts to its injected features") {
    Rng rng(125);
    FadeResBlock<double> blk(4, 4, 3, false, true, false, false, rng);
    auto z = randn({1, 4, 6, 6}, 126);
    auto fa = randn({1, 3, 6, 6}, 127);
    auto fb = randn({1, 3, 6, 6}, 128);
    auto ya = blk.forward(z, fa, true);
    auto yb = blk.forward(z, fb, true);
    CHECK(l2_diff(ya, yb) > 0.0);
}

TEST_CASE("every block parameter receives gradient from a sum loss") {
    Tape<double>::active().clear();
    {
        Rng rng(129);
        StreamResBlock<double> blk(3, 4, false, rng);
        auto x = randn({1, 3, 8, 8}, 130, true);
        sum_all(blk.forward(x, true)).backward();
        std::vector<TensorRef<double>> params;
        blk.collect_params("blk", params);
        CHECK(params.size() == 6);  // 3 convs x (weight, bias)
        for (auto& p : params) {
            REQUIRE_MESSAGE(p.tensor.has_grad(), p.name);
            double asum = 0.0;
            for (double g : p.tensor.grad()) asum += std::abs(g);
            CHECK_MESSAGE(asum > 0.0, p.name);
        }
        CHECK(x.has_grad());
    }
    Tape<double>::active().clear();
    {
        Rng rng(131);
        FadeResBlock<double> blk(3, 4, 2, false, true, false, false, rng);
        auto z = randn({1, 3, 4, 4}, 132, true);
        auto f = randn({1, 2, 4, 4}, 133, true);
        sum_all(blk.forward(z, f, true)).backward();
        std::vector<TensorRef<double>> params;
        blk.collect_params("blk", params);
        CHECK(params.size() == 18);  // 3 FADEs x 2 convs x 2 + 3 convs x 2
        for (auto& p : params) {
            REQUIRE_MESSAGE(p.tensor.has_grad(), p.name);
            double asum = 0.0;
            for (double g : p.tensor.grad()) asum += std::abs(g);
            CHECK_MESSAGE(asum > 0.0, p.name);
        }
        CHECK(z.has_grad());
        CHECK(f.has_grad());
    }
    Tape<double>::active().clear();
}

TEST_CASE("block gradients match finite differences (spectral norm frozen)") {
    using testing::check_gradients;
    {
        Rng rng(134);
        StreamResBlock<double> blk(2, 3, false, rng);
        auto x = randn({1, 2, 4, 4}, 135, true);
        auto m = randn({1, 3, 2, 2}, 136);
        std::vector<TensorRef<double>> refs;
        blk.collect_params("blk", refs);
        std::vector<Tensor<double>> params = {x};
        for (auto& r : refs) params.push_back(r.tensor);
        auto report = check_gradients(
            [&] { return sum_all(mul(blk.forward(x, true), m)); }, params, 1e-4, 1e-4,
            "stream block");
        INFO(report.detail);
        CHECK(report.ok);
    }
    {
        Rng rng(137);
        FadeResBlock<double> blk(2, 2, 2, false, true, false, false, rng);
        auto z = randn({2, 2, 4, 4}, 138, true);
        auto f = randn({2, 2, 4, 4}, 139, true);
        auto m = randn({2, 2, 8, 8}, 140);
        std::vector<TensorRef<double>> refs;
        blk.collect_params("blk", refs);
        std::vector<Tensor<double>> params = {z, f};
        for (auto& r : refs) params.push_back(r.tensor);
        auto report = check_gradients(
            [&] { return sum_all(mul(blk.forward(z, f, true), m)); }, params, 1e-4, 1e-4,
            "fade block");
        INFO(report.detail);
        CHECK(report.ok);
    }
}
