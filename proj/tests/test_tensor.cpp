#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tsit/conv.hpp"
#include "tsit/ops.hpp"
#include "tsit/rng.hpp"
#include "tsit/tensor.hpp"
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

// independent scalar-loop convolution oracle (cross-correlation)
std::vector<double> conv_oracle(const std::vector<double>& x, std::size_t N, std::size_t C,
                                std::size_t H, std::size_t W, const std::vector<double>& w,
                                std::size_t OC, std::size_t kh, std::size_t kw,
                                const std::vector<double>& b, std::size_t stride,
                                std::size_t pad) {
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
    std::vector<double> out(N * OC * Ho * Wo, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t oc = 0; oc < OC; ++oc)
            for (std::size_t ho = 0; ho < Ho; ++ho)
                for (std::size_t wo = 0; wo < Wo; ++wo) {
                    double acc = b.empty() ? 0.0 : b[oc];
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ki = 0; ki < kh; ++ki)
                            for (std::size_t kj = 0; kj < kw; ++kj) {
                                const long hi = static_cast<long>(ho * stride + ki) -
                                                static_cast<long>(pad);
                                const long wi = static_cast<long>(wo * stride + kj) -
                                                static_cast<long>(pad);
                                if (hi < 0 || hi >= static_cast<long>(H) || wi < 0 ||
                                    wi >= static_cast<long>(W))
                                    continue;
                                acc += x[((n * C + c) * H + hi) * W + wi] *
                                       w[((oc * C + c) * kh + ki) * kw + kj];
                            }
                    out[((n * OC + oc) * Ho + ho) * Wo + wo] = acc;
                }
    return out;
}

}  // namespace

TEST_CASE("elementwise add matches hand value") {
    auto a = Tensor<double>::from({2}, {1.0, 2.0});
    auto b = Tensor<double>::from({2}, {3.0, 4.0});
    auto c = add(a, b);
    CHECK(c.vec() == std::vector<double>{4.0, 6.0});
}

TEST_CASE("grad of sum(a*b) wrt a equals b") {
    Tape<double>::active().clear();
    auto a = randn({2, 3}, 11, true);
    auto b = randn({2, 3}, 12);
    auto loss = sum_all(mul(a, b));
    loss.backward();
    REQUIRE(a.has_grad());
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.grad()[i] == doctest::Approx(b.data()[i]));
}

TEST_CASE("2x2 matmul hand product") {
    auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
    auto b = Tensor<double>::from({2, 2}, {5, 6, 7, 8});
    auto c = matmul(a, b);
    CHECK(c.vec() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("broadcasting rules") {
    auto a = Tensor<double>::from({2, 1}, {1, 2});
    auto b = Tensor<double>::from({1, 3}, {10, 20, 30});
    auto c = add(a, b);
    CHECK(c.shape() == Shape{2, 3});
    CHECK(c.vec() == std::vector<double>{11, 21, 31, 12, 22, 32});

    // scalar broadcast against 4-D
    auto x = Tensor<double>::filled({2, 2, 2, 2}, 3.0);
    auto s = Tensor<double>::scalar(0.5);
    auto y = mul(x, s);
    for (double v : y.vec()) CHECK(v == doctest::Approx(1.5));

    CHECK_THROWS_AS(add(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 2})), ShapeError);
}

TEST_CASE("broadcast backward reduces over expanded axes") {
    Tape<double>::active().clear();
    auto a = Tensor<double>::from({1, 3}, {1, 2, 3}, true);
    auto b = Tensor<double>::filled({4, 3}, 2.0, true);
    auto loss = sum_all(mul(a, b));
    loss.backward();
    // d/da[j] = sum_i b[i][j] = 4 * 2
    for (std::size_t j = 0; j < 3; ++j) CHECK(a.grad()[j] == doctest::Approx(8.0));
    // d/db[i][j] = a[j]
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(b.grad()[i * 3 + j] == doctest::Approx(a.data()[j]));
}

TEST_CASE("reduction forward values and backward fan-out") {
    Tape<double>::active().clear();
    auto x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    auto s0 = sum_axes(x, {0});
    CHECK(s0.shape() == Shape{3});
    CHECK(s0.vec() == std::vector<double>{5, 7, 9});
    auto s1 = sum_axes(x, {1}, true);
    CHECK(s1.shape() == Shape{2, 1});
    CHECK(s1.vec() == std::vector<double>{6, 15});
    auto m = mean_all(x);
    CHECK(m.item() == doctest::Approx(3.5));

    auto loss = sum_all(x);
    loss.backward();
    for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of sum of squares is 2x") {
    Tape<double>::active().clear();
    auto x = randn({3, 4}, 21, true);
    auto loss = sum_all(mul(x, x));
    loss.backward();
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]));
}

TEST_CASE("variance of a constant tensor is zero") {
    auto x = Tensor<double>::filled({2, 5, 3, 3}, 1.25);
    auto v = variance_axes(x, {0, 2, 3});
    CHECK(v.shape() == Shape{5});
    for (double value : v.vec()) CHECK(value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("variance matches two-pass loop oracle") {
    auto x = randn({2, 4, 3, 5}, 31);
    auto v = variance_axes(x, {0, 2, 3});
    const std::size_t N = 2, C = 4, H = 3, W = 5;
    for (std::size_t c = 0; c < C; ++c) {
        double mu = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) mu += x.data()[((n * C + c) * H + h) * W + w];
        mu /= double(N * H * W);
        double var = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    const double d = x.data()[((n * C + c) * H + h) * W + w] - mu;
                    var += d * d;
                }
        var /= double(N * H * W);
        CHECK(v.vec()[c] == doctest::Approx(var).epsilon(1e-10));
    }
}

TEST_CASE("leaky_relu hand value and masks") {
    auto x = Tensor<double>::from({3}, {-1.0, 0.0, 2.0});
    auto y = leaky_relu(x, 0.2);
    CHECK(y.vec()[0] == doctest::Approx(-0.2));
    CHECK(y.vec()[1] == doctest::Approx(0.0));
    CHECK(y.vec()[2] == doctest::Approx(2.0));
}

TEST_CASE("minimum(x, c) value and gradient gate") {
    Tape<double>::active().clear();
    auto x = Tensor<double>::from({4}, {-2.0, -1.0, 0.5, 3.0}, true);
    auto y = minimum(x, 0.0);
    CHECK(y.vec() == std::vector<double>{-2.0, -1.0, 0.0, 0.0});
    sum_all(y).backward();
    CHECK(x.grad() == std::vector<double>{1.0, 1.0, 0.0, 0.0});
}

TEST_CASE("abs gradient is sign, zero at zero") {
    Tape<double>::active().clear();
    auto x = Tensor<double>::from({3}, {-1.5, 0.0, 2.5}, true);
    sum_all(abs(x)).backward();
    CHECK(x.grad() == std::vector<double>{-1.0, 0.0, 1.0});
}

TEST_CASE("concat forward and backward") {
    Tape<double>::active().clear();
    auto a = Tensor<double>::from({1, 2, 1, 2}, {1, 2, 3, 4}, true);
    auto b = Tensor<double>::from({1, 1, 1, 2}, {5, 6}, true);
    auto c = concat(a, b, 1);
    CHECK(c.shape() == Shape{1, 3, 1, 2});
    CHECK(c.vec() == std::vector<double>{1, 2, 3, 4, 5, 6});
    auto w = Tensor<double>::from({1, 3, 1, 2}, {1, 10, 100, 1000, 2, 20});
    sum_all(mul(c, w)).backward();
    CHECK(a.grad() == std::vector<double>{1, 10, 100, 1000});
    CHECK(b.grad() == std::vector<double>{2, 20});
}

TEST_CASE("reshape keeps data and routes gradients") {
    Tape<double>::active().clear();
    auto x = randn({2, 6}, 41, true);
    auto y = reshape(x, {3, 4});
    CHECK(y.shape() == Shape{3, 4});
    CHECK(y.vec() == x.vec());
    auto w = randn({3, 4}, 42);
    sum_all(mul(y, w)).backward();
    for (std::size_t i = 0; i < 12; ++i) CHECK(x.grad()[i] == doctest::Approx(w.data()[i]));
    CHECK_THROWS_AS(reshape(x, {5, 5}), ShapeError);
}

TEST_CASE("conv2d 1x1 identity kernel reproduces input") {
    auto x = randn({2, 1, 3, 3}, 51);
    auto w = Tensor<double>::from({1, 1, 1, 1}, {1.0});
    auto y = conv2d(x, w, 1, 0);
    CHECK(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.vec()[i] == doctest::Approx(x.vec()[i]));
}

TEST_CASE("conv2d 3x3 ones kernel on ramp matches loop oracle") {
    std::vector<double> ramp(16);
    for (std::size_t i = 0; i < 16; ++i) ramp[i] = double(i);
    auto x = Tensor<double>::from({1, 1, 4, 4}, ramp);
    auto w = Tensor<double>::filled({1, 1, 3, 3}, 1.0);
    auto b = Tensor<double>::from({1}, {0.0});
    auto y = conv2d(x, w, b, 1, 1);
    auto expect = conv_oracle(ramp, 1, 1, 4, 4, w.vec(), 1, 3, 3, b.vec(), 1, 1);
    CHECK(y.shape() == Shape{1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) CHECK(y.vec()[i] == doctest::Approx(expect[i]));
    // centre output = sum of the 3x3 neighbourhood of element (1,1) = 45
    CHECK(y.vec()[5] == doctest::Approx(45.0));
}

TEST_CASE("conv2d strided with padding matches loop oracle") {
    auto x = randn({2, 3, 6, 5}, 61);
    auto w = randn({4, 3, 2, 2}, 62);
    auto b = randn({4}, 63);
    for (std::size_t stride : {1, 2}) {
        for (std::size_t pad : {0, 1}) {
            auto y = conv2d(x, w, b, stride, pad);
            auto expect =
                conv_oracle(x.vec(), 2, 3, 6, 5, w.vec(), 4, 2, 2, b.vec(), stride, pad);
            REQUIRE(y.numel() == expect.size());
            for (std::size_t i = 0; i < expect.size(); ++i)
                CHECK(y.vec()[i] == doctest::Approx(expect[i]).epsilon(1e-10));
        }
    }
    CHECK_THROWS_AS(conv2d(x, randn({4, 2, 2, 2}, 64), 1, 0), ShapeError);
}

TEST_CASE("upsample_nearest replicates and accumulates gradient") {
    Tape<double>::active().clear();
    auto x = Tensor<double>::from({1, 1, 2, 2}, {1, 2, 3, 4}, true);
    auto y = upsample_nearest(x, 2);
    CHECK(y.shape() == Shape{1, 1, 4, 4});
    CHECK(y.vec() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    sum_all(y).backward();
    for (double g : x.grad()) CHECK(g == doctest::Approx(4.0));
}

TEST_CASE("downsample_nearest takes top-left sample and routes gradient") {
    Tape<double>::active().clear();
    std::vector<double> v(16);
    for (std::size_t i = 0; i < 16; ++i) v[i] = double(i);
    auto x = Tensor<double>::from({1, 1, 4, 4}, v, true);
    auto y = downsample_nearest(x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.vec() == std::vector<double>{0, 2, 8, 10});
    sum_all(y).backward();
    double total = 0.0;
    for (double g : x.grad()) total += g;
    CHECK(total == doctest::Approx(4.0));
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(0.0));
}

TEST_CASE("detach cuts the graph") {
    Tape<double>::active().clear();
    auto x = randn({2, 2}, 71, true);
    auto y = mul(x, x);
    auto z = y.detach();
    CHECK_FALSE(z.requires_grad());
    auto loss = sum_all(mul(z, z));
    CHECK_FALSE(loss.requires_grad());
}

TEST_CASE("NoGradGuard suppresses recording") {
    auto& tape = Tape<double>::active();
    tape.clear();
    auto x = randn({2, 2}, 72, true);
    {
        NoGradGuard<double> ng;
        auto y = mul(x, x);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(tape.size() == 0);
}

TEST_CASE("backward on a cleared tape is rejected") {
    auto& tape = Tape<double>::active();
    tape.clear();
    auto x = randn({2}, 73, true);
    auto loss = sum_all(x);
    tape.clear();
    CHECK_THROWS_AS(loss.backward(), std::logic_error);
}

TEST_CASE("non-finite forward values raise NumericError naming the op") {
    auto a = Tensor<double>::from({2}, {1.0, 1.0});
    auto b = Tensor<double>::from({2}, {1.0, 0.0});
    try {
        auto c = div(a, b);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("div") != std::string::npos);
    }
    // the scan can be paused (used by tests probing saturation behaviour)
    finite_checks_enabled() = false;
    auto c = div(a, b);
    CHECK(std::isinf(c.vec()[1]));
    finite_checks_enabled() = true;
}

TEST_CASE("finite-difference agreement for every differentiable op") {
    using testing::check_gradients;
    auto mask = randn({3, 4}, 80);

    auto fd = [&](const char* label, const std::function<Tensor<double>()>& loss,
                  std::vector<Tensor<double>> params) {
        auto report = check_gradients(loss, params, 1e-4, 1e-4, label);
        INFO(report.detail);
        CHECK(report.ok);
        CHECK(report.significant > 0);
    };

    {
        auto a = randn({3, 4}, 81, true);
        auto b = randn({3, 4}, 82, true);
        fd("add", [&] { return sum_all(mul(add(a, b), mask)); }, {a, b});
        fd("sub", [&] { return sum_all(mul(sub(a, b), mask)); }, {a, b});
        fd("mul", [&] { return sum_all(mul(mul(a, b), mask)); }, {a, b});
    }
    {
        auto a = randn({3, 4}, 83, true);
        auto b = randn({3, 4}, 84, true, 0.2, 2.0);  // denominators away from zero
        fd("div", [&] { return sum_all(mul(div(a, b), mask)); }, {a, b});
    }
    {
        auto a = randn({3, 1}, 85, true);
        auto b = randn({1, 4}, 86, true);
        fd("broadcast mul", [&] { return sum_all(mul(mul(a, b), mask)); }, {a, b});
    }
    {
        auto x = randn({3, 4}, 87, true, 1.0, 0.3);  // keep clear of the kink at 0
        fd("leaky_relu", [&] { return sum_all(mul(leaky_relu(x, 0.2), mask)); }, {x});
        fd("tanh", [&] { return sum_all(mul(tanh(x), mask)); }, {x});
        fd("neg", [&] { return sum_all(mul(neg(x), mask)); }, {x});
        fd("square", [&] { return sum_all(mul(square(x), mask)); }, {x});
        fd("scalar ops", [&] { return sum_all(mul(add_scalar(mul_scalar(x, 1.7), 0.3), mask)); },
           {x});
        fd("minimum", [&] { return sum_all(mul(minimum(x, 0.25), mask)); }, {x});
        fd("abs", [&] { return sum_all(mul(abs(x), mask)); }, {x});
    }
    {
        auto x = randn({3, 4}, 88, true, 0.3, 3.0);  // positive
        fd("sqrt", [&] { return sum_all(mul(sqrt(x), mask)); }, {x});
    }
    {
        auto a = randn({3, 4}, 89, true);
        auto b = randn({4, 2}, 90, true);
        auto m2 = randn({3, 2}, 91);
        fd("matmul", [&] { return sum_all(mul(matmul(a, b), m2)); }, {a, b});
    }
    {
        auto x = randn({2, 3, 4, 2}, 92, true);
        auto mk = randn({3}, 93);
        fd("mean over N,H,W",
           [&] { return sum_all(mul(mean_axes(x, {0, 2, 3}), mk)); }, {x});
        fd("variance over N,H,W",
           [&] { return sum_all(mul(variance_axes(x, {0, 2, 3}), mk)); }, {x});
    }
    {
        auto x = randn({2, 2, 4, 4}, 94, true);
        auto w = randn({3, 2, 3, 3}, 95, true, 0.5);
        auto b = randn({3}, 96, true);
        auto mc = randn({2, 3, 4, 4}, 97);
        fd("conv2d s1 p1", [&] { return sum_all(mul(conv2d(x, w, b, 1, 1), mc)); }, {x, w, b});
        auto mc2 = randn({2, 3, 2, 2}, 98);
        fd("conv2d s2 p1", [&] { return sum_all(mul(conv2d(x, w, b, 2, 1), mc2)); }, {x, w, b});
    }
    {
        auto x = randn({1, 2, 3, 3}, 99, true);
        auto mu = randn({1, 2, 6, 6}, 100);
        fd("upsample_nearest", [&] { return sum_all(mul(upsample_nearest(x, 2), mu)); }, {x});
        auto x2 = randn({1, 2, 4, 4}, 101, true);
        auto md = randn({1, 2, 2, 2}, 102);
        fd("downsample_nearest", [&] { return sum_all(mul(downsample_nearest(x2, 2), md)); },
           {x2});
    }
    {
        auto a = randn({2, 2, 2, 2}, 103, true);
        auto b = randn({2, 3, 2, 2}, 104, true);
        auto mcat = randn({2, 5, 2, 2}, 105);
        fd("concat", [&] { return sum_all(mul(concat(a, b, 1), mcat)); }, {a, b});
    }
    {
        auto x = randn({2, 6}, 106, true);
        auto mr = randn({3, 4}, 107);
        fd("reshape", [&] { return sum_all(mul(reshape(x, {3, 4}), mr)); }, {x});
    }
}

TEST_CASE("fault hook makes the conv2d gradient check fail") {
    using testing::check_gradients;
    auto x = randn({1, 2, 4, 4}, 110, true);
    auto w = randn({2, 2, 3, 3}, 111, true, 0.5);
    auto m = randn({1, 2, 4, 4}, 112);
    debug_flags().conv2d_grad_fault = true;
    auto report =
        check_gradients([&] { return sum_all(mul(conv2d(x, w, 1, 1), m)); }, {x, w}, 1e-4, 1e-4,
                        "conv2d fault");
    debug_flags().conv2d_grad_fault = false;
    CHECK_FALSE(report.ok);
    CHECK(report.detail.find("conv2d") != std::string::npos);
}

TEST_CASE("deterministic rng streams") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    // state round-trip
    Rng c(77);
    c.normal();
    auto s = c.state();
    Rng d(0);
    d.set_state(s);
    for (int i = 0; i < 10; ++i) CHECK(c.normal() == d.normal());
    // derived streams differ from the root and from each other
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
    // permutation is a permutation, reproducible
    auto p1 = seeded_permutation(10, 5);
    auto p2 = seeded_permutation(10, 5);
    CHECK(p1 == p2);
    std::vector<char> seen(10, 0);
    for (auto i : p1) seen[i] = 1;
    for (char s2 : seen) CHECK(s2 == 1);
}

TEST_CASE("float template instantiation works end to end") {
    Tape<float>::active().clear();
    auto a = Tensor<float>::from({2, 2}, {1.f, 2.f, 3.f, 4.f}, true);
    auto b = Tensor<float>::from({2, 2}, {5.f, 6.f, 7.f, 8.f});
    auto y = matmul(a, b);
    CHECK(y.vec() == std::vector<float>{19.f, 22.f, 43.f, 50.f});
    sum_all(y).backward();
    CHECK(a.has_grad());
    // dA = G * B^T with G = ones: row sums of B columns... dA[i][t] = sum_j B[t][j]
    CHECK(a.grad()[0] == doctest::Approx(11.f));
    CHECK(a.grad()[1] == doctest::Approx(15.f));
}
