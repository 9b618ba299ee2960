#include <doctest.h>

#include <cmath>
#include <random>

#include "eretinex/error.hpp"
#include "eretinex/gradcheck.hpp"
#include "eretinex/nn.hpp"
#include "eretinex/ops.hpp"

using namespace eretinex;

namespace {

TensorF64 random_tensor(Shape dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> v(shape_numel(dims));
    for (auto& x : v) x = d(rng);
    return TensorF64(std::move(dims), std::move(v));
}

// Direct six-loop cross-correlation.
std::vector<double> naive_conv(const TensorF64& x, const TensorF64& w, const TensorF64& b, std::size_t stride,
                               std::size_t pad) {
    const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2), co = w.dim(0), k = w.dim(2);
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    std::vector<double> out(co * oh * ow, 0.0);
    for (std::size_t o = 0; o < co; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                double acc = b.defined() ? b.values()[o] : 0.0;
                for (std::size_t c = 0; c < ci; ++c)
                    for (std::size_t i = 0; i < k; ++i)
                        for (std::size_t j = 0; j < k; ++j) {
                            long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                            long ix = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                            acc += x.values()[(c * h + iy) * wd + ix] * w.values()[((o * ci + c) * k + i) * k + j];
                        }
                out[(o * oh + y) * ow + xx] = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("conv2d of a zero input is the bias") {
    Tensor x({1, 3, 3}, 0.0f);
    Tensor w({2, 1, 3, 3}, 0.7f);
    Tensor b({2}, std::vector<float>{0.25f, -1.5f});
    Tensor y = ops::conv2d(x, w, b, 1, 1);
    CHECK(y.dims() == Shape{2, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(y.values()[i] == 0.25f);
        CHECK(y.values()[9 + i] == -1.5f);
    }
}

TEST_CASE("1x1 identity kernel") {
    Tensor x({1, 4, 5}, 0.0f);
    for (std::size_t i = 0; i < x.numel(); ++i) x.mutable_values()[i] = static_cast<float>(i) * 0.1f;
    Tensor y = ops::conv2d(x, Tensor({1, 1, 1, 1}, 1.0f), Tensor(), 1, 0);
    CHECK(std::equal(x.values().begin(), x.values().end(), y.values().begin()));
}

TEST_CASE("conv2d matches the direct loop") {
    for (std::size_t stride : {1u, 2u}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            TensorF64 x = random_tensor({2, 5, 5}, seed);
            TensorF64 w = random_tensor({3, 2, 3, 3}, seed + 100);
            TensorF64 b = random_tensor({3}, seed + 200);
            TensorF64 y = ops::conv2d(x, w, b, stride, 1);
            auto ref = naive_conv(x, w, b, stride, 1);
            REQUIRE(y.numel() == ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
    // f32 path against the f64 oracle
    TensorF64 x = random_tensor({2, 5, 5}, 9);
    TensorF64 w = random_tensor({3, 2, 3, 3}, 10);
    auto ref = naive_conv(x, w, TensorF64(), 1, 1);
    Tensor y = ops::conv2d(x.cast<float>(), w.cast<float>(), Tensor(), 1, 1);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.values()[i] - ref[i]) < 1e-5);
}

TEST_CASE("depthwise conv equals a block-diagonal dense conv") {
    TensorF64 x = random_tensor({3, 6, 6}, 1);
    TensorF64 wd = random_tensor({3, 1, 5, 5}, 2);
    TensorF64 dense({3, 3, 5, 5}, 0.0);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t = 0; t < 25; ++t) dense.mutable_values()[(c * 3 + c) * 25 + t] = wd.values()[c * 25 + t];
    TensorF64 a = ops::depthwise_conv2d(x, wd, TensorF64(), 1, 2);
    auto ref = naive_conv(x, dense, TensorF64(), 1, 2);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(a.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("conv2d channel mismatch names both shapes") {
    Tensor x({2, 4, 4});
    Tensor w({1, 3, 3, 3});
    try {
        ops::conv2d(x, w, Tensor(), 1, 1);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
        std::string msg = e.what();
        CHECK(msg.find("[2,4,4]") != std::string::npos);
        CHECK(msg.find("[1,3,3,3]") != std::string::npos);
    }
}

TEST_CASE("nearest upsample") {
    Tensor x({1, 2, 2}, std::vector<float>{1, 2, 3, 4});
    Tensor y = ops::upsample_nearest2x(x);
    std::vector<float> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(std::vector<float>(y.values().begin(), y.values().end()) == expect);
}

TEST_CASE("up(down(x)) restores the spatial shape") {
    nn::ParameterList<float> params;
    nn::Rng rng(3);
    nn::Downsample<float> down(params, "down", 8, 6, 3, rng);
    nn::Upsample<float> up(params, "up", 6, 5, 3, rng);
    for (std::size_t h = 4; h <= 64; h += 2) {
        for (std::size_t w : {4u, 10u, 64u}) {
            Tensor x({8, h, w}, 0.1f);
            Tensor d = down(x);
            CHECK(d.dims() == Shape{6, h / 2, w / 2});
            CHECK(up(d).dims() == Shape{5, h, w});
        }
    }
    CHECK_THROWS_AS(down(Tensor({8, 5, 4})), Error);
}

TEST_CASE("channel attention closed forms") {
    nn::ParameterList<float> params;
    nn::Rng rng(0);
    nn::ChannelAttention<float> attn(params, "attn", 4, rng);
    Tensor x({4, 3, 3}, 0.0f);
    for (std::size_t i = 0; i < x.numel(); ++i) x.mutable_values()[i] = 0.1f * static_cast<float>(i % 7) - 0.3f;
    Tensor ctx({4, 3, 3}, 0.8f);

    SUBCASE("zero input gives zero output") {
        Tensor z({4, 3, 3}, 0.0f);
        Tensor y = attn(z, ctx);
        for (float v : y.values()) CHECK(v == 0.0f);
    }
    SUBCASE("zero weights gate at one half") {
        for (auto& p : params.items())
            for (auto& v : p.tensor.mutable_values()) v = 0.0f;
        Tensor y = attn(x, ctx);
        for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == 0.5f * x.values()[i]);
    }
}

TEST_CASE("elementwise closed forms") {
    CHECK(ops::softplus(TensorF64::scalar(0.0)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    Tensor a({2, 2}, 0.5f), b({2, 2}, 1.0f);
    CHECK(ops::mae_loss(a, a).item() == 0.0f);
    CHECK(ops::mae_loss(Tensor({3, 2, 2}, 0.0f), Tensor({3, 2, 2}, 1.0f)).item() == 1.0f);
    CHECK_THROWS_AS(ops::mae_loss(a, Tensor({4}, 0.0f)), Error);
    CHECK(ops::sigmoid(TensorF64::scalar(0.0)).item() == 0.5);
    CHECK(ops::relu(TensorF64::scalar(-2.0)).item() == 0.0);
    // tanh form at x = 1
    double g1 = 0.5 * (1 + std::tanh(std::sqrt(2 / 3.141592653589793) * (1 + 0.044715)));
    CHECK(ops::gelu(TensorF64::scalar(1.0)).item() == doctest::Approx(g1).epsilon(1e-14));
}

TEST_CASE("backward basics") {
    TensorF64 x({4}, std::vector<double>{1, -2, 3, 0.5});
    TensorF64 w({4}, 0.3);
    w.set_requires_grad(true);
    backward(ops::sum(ops::mul(w, x)));
    for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == x.values()[i]);

    SUBCASE("repeated backward accumulates") {
        backward(ops::sum(ops::mul(w, x)));
        for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == 2 * x.values()[i]);
        w.zero_grad();
        backward(ops::sum(ops::mul(w, x)));
        for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == x.values()[i]);
    }
    SUBCASE("non-scalar loss is rejected") {
        CHECK_THROWS_AS(backward(ops::mul(w, x)), Error);
    }
}

TEST_CASE("no-grad mode builds no graph") {
    TensorF64 w({2}, 1.0);
    w.set_requires_grad(true);
    NoGradGuard guard;
    CHECK_FALSE(ops::scale(w, 2.0).requires_grad());
}

TEST_CASE("finite check rejects NaN") {
    set_finite_checks(true);
    Tensor x({2}, std::vector<float>{1.0f, -1.0f});
    Tensor zero({2}, 0.0f);
    CHECK_THROWS_AS(ops::div(zero, zero), Error);
}

TEST_CASE("forward determinism") {
    auto run = [] {
        nn::ParameterList<float> params;
        nn::Rng rng(11);
        nn::Conv2d<float> conv(params, "c", 3, 4, 3, 1, rng);
        Tensor x({3, 8, 8}, 0.3f);
        return conv(x);
    };
    Tensor a = run(), b = run();
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST_CASE("parameter names are unique") {
    nn::ParameterList<float> params;
    params.create("a.weight", {2});
    CHECK_THROWS_AS(params.create("a.weight", {2}), Error);
    CHECK(params.items().front().tensor.requires_grad());
}

TEST_CASE("gradcheck: every registered op") {
    for (const auto& name : gradcheck::op_names()) {
        CAPTURE(name);
        gradcheck::Report r = gradcheck::check_op(name);
        MESSAGE(r.to_line());
        CHECK(r.passed());
        CHECK(r.nonzero > 0);
    }
}

TEST_CASE("gradcheck flags a wrong backward") {
    CHECK(gradcheck::relative_error(1.0, 1.0) == 0.0);
    CHECK(gradcheck::relative_error(1.0, -1.0) == 1.0);
    TensorF64 x({3}, std::vector<double>{0.5, 1.0, 2.0});
    x.set_requires_grad(true);
    // y = 3x with a backward that reports 2
    auto bad_scale = [](const TensorF64& in) {
        std::vector<double> v(in.values().begin(), in.values().end());
        for (auto& e : v) e *= 3.0;
        auto parent = in.node();
        return TensorF64::make_result(in.dims(), std::move(v), {in}, [parent](TensorF64::Node& self) {
            if (auto* g = grad_sink<double>(*parent))
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += 2.0 * self.grad[i];
        });
    };
    auto r = gradcheck::check("bad_scale", [&] { return ops::sum(bad_scale(x)); }, {x});
    CHECK_FALSE(r.passed());
    CHECK(r.max_rel_error == doctest::Approx(0.2));
}
