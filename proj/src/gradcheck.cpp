#include "eretinex/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <utility>

#include "eretinex/error.hpp"
#include "eretinex/metrics.hpp"
#include "eretinex/nn.hpp"
#include "eretinex/ops.hpp"

namespace eretinex::gradcheck {

namespace {

using T64 = TensorF64;

T64 uniform(Shape dims, nn::Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(dims));
    for (auto& x : v) x = dist(rng);
    return T64(std::move(dims), std::move(v)).set_requires_grad(true);
}

// Magnitudes in [0.1, 1] with random sign: keeps relu/abs kinks out of reach
// of the finite-difference step.
T64 signed_away_from_zero(Shape dims, nn::Rng& rng) {
    std::uniform_real_distribution<double> mag(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(shape_numel(dims));
    for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
    return T64(std::move(dims), std::move(v)).set_requires_grad(true);
}

// sum(out * w) with a fixed random w, turning any op output into a scalar
// whose gradient exercises every output element.
struct Projector {
    T64 weights;
    explicit Projector(const Shape& dims, std::uint64_t seed) {
        nn::Rng rng(seed);
        weights = uniform(dims, rng, -1.0, 1.0).detach();
    }
    T64 operator()(const T64& out) const { return ops::sum(ops::mul(out, weights)); }
};

using Factory = std::function<Report(const Options&)>;

Report unary(std::string name, const Options& o, Shape dims, T64 (*make)(Shape, nn::Rng&),
             std::function<T64(const T64&)> f) {
    nn::Rng rng(o.seed);
    T64 x = make(dims, rng);
    T64 probe;
    {
        NoGradGuard g;
        probe = f(x);
    }
    Projector p(probe.dims(), o.seed + 1);
    return check(std::move(name), [&] { return p(f(x)); }, {x}, o);
}

T64 make_uniform(Shape dims, nn::Rng& rng) { return uniform(std::move(dims), rng, -1.0, 1.0); }
T64 make_signed(Shape dims, nn::Rng& rng) { return signed_away_from_zero(std::move(dims), rng); }
T64 make_positive(Shape dims, nn::Rng& rng) { return uniform(std::move(dims), rng, 0.5, 1.5); }
T64 make_unit(Shape dims, nn::Rng& rng) { return uniform(std::move(dims), rng, 0.0, 1.0); }

Report binary(std::string name, const Options& o, Shape da, Shape db, T64 (*make_b)(Shape, nn::Rng&),
              std::function<T64(const T64&, const T64&)> f) {
    nn::Rng rng(o.seed);
    T64 a = make_uniform(da, rng);
    T64 b = make_b(db, rng);
    T64 probe;
    {
        NoGradGuard g;
        probe = f(a, b);
    }
    Projector p(probe.dims(), o.seed + 1);
    return check(std::move(name), [&] { return p(f(a, b)); }, {a, b}, o);
}

Report conv_check(std::string name, const Options& o, bool depthwise, std::size_t stride, bool bias) {
    nn::Rng rng(o.seed);
    const std::size_t ci = 2, co = depthwise ? 2 : 3, k = 3;
    T64 x = make_uniform({ci, 6, 6}, rng);
    T64 w = make_uniform({co, depthwise ? 1u : ci, k, k}, rng);
    T64 b = bias ? make_uniform({co}, rng) : T64();
    auto f = [&] {
        return depthwise ? ops::depthwise_conv2d(x, w, b, stride, 1) : ops::conv2d(x, w, b, stride, 1);
    };
    T64 probe;
    {
        NoGradGuard g;
        probe = f();
    }
    Projector p(probe.dims(), o.seed + 1);
    std::vector<T64> wrt{x, w};
    if (bias) wrt.push_back(b);
    return check(std::move(name), [&] { return p(f()); }, wrt, o);
}

template <class Module>
Report module_check(std::string name, const Options& o, nn::ParameterList<double>& params, Shape in_dims,
                    const Module& module) {
    nn::Rng rng(o.seed + 7);
    T64 x = make_uniform(in_dims, rng);
    T64 probe;
    {
        NoGradGuard g;
        probe = module(x);
    }
    Projector p(probe.dims(), o.seed + 1);
    std::vector<T64> wrt{x};
    for (auto& prm : params.items()) wrt.push_back(prm.tensor);
    return check(std::move(name), [&] { return p(module(x)); }, wrt, o);
}

// Randomises every parameter so that zero-initialised biases do not hide
// missing gradient paths.
void randomize(nn::ParameterList<double>& params, std::uint64_t seed, double scale) {
    nn::Rng rng(seed);
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& p : params.items())
        for (auto& v : p.tensor.mutable_values()) v = d(rng);
}

const std::vector<std::pair<std::string, Factory>>& registry() {
    static const std::vector<std::pair<std::string, Factory>> ops_list = {
        {"add", [](const Options& o) { return binary("add", o, {2, 3, 4}, {2, 3, 4}, make_uniform, ops::add<double>); }},
        {"add_broadcast",
         [](const Options& o) { return binary("add_broadcast", o, {2, 3, 4}, {2, 1, 1}, make_uniform, ops::add<double>); }},
        {"sub", [](const Options& o) { return binary("sub", o, {2, 3, 4}, {1, 3, 4}, make_uniform, ops::sub<double>); }},
        {"mul", [](const Options& o) { return binary("mul", o, {2, 3, 4}, {2, 3, 4}, make_uniform, ops::mul<double>); }},
        {"mul_broadcast",
         [](const Options& o) { return binary("mul_broadcast", o, {3, 4, 4}, {1, 4, 4}, make_uniform, ops::mul<double>); }},
        {"div", [](const Options& o) { return binary("div", o, {2, 3, 4}, {2, 3, 4}, make_positive, ops::div<double>); }},
        {"scale", [](const Options& o) {
             return unary("scale", o, {2, 3, 4}, make_uniform, [](const T64& x) { return ops::scale(x, 2.5); });
         }},
        {"add_scalar", [](const Options& o) {
             return unary("add_scalar", o, {2, 3, 4}, make_uniform, [](const T64& x) { return ops::add_scalar(x, 0.3); });
         }},
        {"sigmoid", [](const Options& o) { return unary("sigmoid", o, {2, 3, 4}, make_uniform, ops::sigmoid<double>); }},
        {"relu", [](const Options& o) { return unary("relu", o, {2, 3, 4}, make_signed, ops::relu<double>); }},
        {"gelu", [](const Options& o) { return unary("gelu", o, {2, 3, 4}, make_uniform, ops::gelu<double>); }},
        {"softplus", [](const Options& o) { return unary("softplus", o, {2, 3, 4}, make_uniform, ops::softplus<double>); }},
        {"clamp", [](const Options& o) {
             return unary("clamp", o, {2, 3, 4}, make_signed, [](const T64& x) { return ops::clamp(x, -0.5, 0.5); });
         }},
        {"sum", [](const Options& o) { return unary("sum", o, {2, 3, 4}, make_uniform, ops::sum<double>); }},
        {"mean", [](const Options& o) { return unary("mean", o, {2, 3, 4}, make_uniform, ops::mean<double>); }},
        {"reshape", [](const Options& o) {
             return unary("reshape", o, {2, 3, 4}, make_uniform, [](const T64& x) { return ops::reshape(x, {6, 4}); });
         }},
        {"global_avg_pool",
         [](const Options& o) { return unary("global_avg_pool", o, {3, 4, 5}, make_uniform, ops::global_avg_pool<double>); }},
        {"channel_mean",
         [](const Options& o) { return unary("channel_mean", o, {3, 4, 5}, make_uniform, ops::channel_mean<double>); }},
        {"concat_channels", [](const Options& o) {
             return binary("concat_channels", o, {2, 3, 3}, {1, 3, 3}, make_uniform, [](const T64& a, const T64& b) {
                 return ops::concat_channels<double>({a, b});
             });
         }},
        {"conv2d", [](const Options& o) { return conv_check("conv2d", o, false, 1, true); }},
        {"conv2d_stride2", [](const Options& o) { return conv_check("conv2d_stride2", o, false, 2, true); }},
        {"conv2d_nobias", [](const Options& o) { return conv_check("conv2d_nobias", o, false, 1, false); }},
        {"depthwise_conv2d", [](const Options& o) { return conv_check("depthwise_conv2d", o, true, 1, true); }},
        {"upsample_nearest2x", [](const Options& o) {
             return unary("upsample_nearest2x", o, {2, 3, 3}, make_uniform, ops::upsample_nearest2x<double>);
         }},
        {"mae_loss", [](const Options& o) {
             // binary() draws `a` first from o.seed, so a0 is a frozen copy of it
             nn::Rng rng(o.seed);
             T64 a0 = make_uniform({2, 3, 4}, rng).detach();
             return binary("mae_loss", o, {2, 3, 4}, {2, 3, 4}, make_signed,
                           [a0](const T64& a, const T64& b) { return ops::mae_loss(ops::add(a, b), a0); });
         }},
        {"downsample", [](const Options& o) {
             nn::ParameterList<double> params;
             nn::Rng rng(o.seed);
             nn::Downsample<double> down(params, "down", 2, 3, 3, rng);
             randomize(params, o.seed + 3, 0.5);
             return module_check("downsample", o, params, {2, 6, 6}, down);
         }},
        {"upsample", [](const Options& o) {
             nn::ParameterList<double> params;
             nn::Rng rng(o.seed);
             nn::Upsample<double> up(params, "up", 2, 3, 3, rng);
             randomize(params, o.seed + 3, 0.5);
             return module_check("upsample", o, params, {2, 3, 3}, up);
         }},
        {"channel_attention", [](const Options& o) {
             nn::ParameterList<double> params;
             nn::Rng rng(o.seed);
             nn::ChannelAttention<double> attn(params, "attn", 4, rng, true);
             randomize(params, o.seed + 3, 0.5);
             nn::Rng crng(o.seed + 11);
             T64 ctx = make_uniform({4, 6, 6}, crng);
             nn::Rng xrng(o.seed + 12);
             T64 x = make_uniform({4, 6, 6}, xrng);
             Projector p({4, 6, 6}, o.seed + 1);
             std::vector<T64> wrt{x, ctx};
             for (auto& prm : params.items()) wrt.push_back(prm.tensor);
             return check("channel_attention", [&] { return p(attn(x, ctx)); }, wrt, o);
         }},
        {"channel_attention_no_context", [](const Options& o) {
             nn::ParameterList<double> params;
             nn::Rng rng(o.seed);
             nn::ChannelAttention<double> attn(params, "attn", 4, rng, false);
             randomize(params, o.seed + 3, 0.5);
             return module_check("channel_attention_no_context", o, params, {4, 6, 6},
                                 [&](const T64& x) { return attn(x, std::nullopt); });
         }},
        {"light_up", [](const Options& o) {
             return binary("light_up", o, {3, 4, 4}, {1, 4, 4}, make_positive, [](const T64& img, const T64& l) {
                 return light_up(img, LightUpMap<double>{l});
             });
         }},
        {"ssim_loss", [](const Options& o) {
             return binary("ssim_loss", o, {3, 12, 12}, {3, 12, 12}, make_unit, [](const T64& a, const T64& b) {
                 return metrics::ssim_perceptual_loss(ops::clamp(a, -2.0, 2.0), b);
             });
         }},
        {"guided_block", [](const Options& o) {
             ModelConfig cfg;
             cfg.base_channels = 4;
             nn::ParameterList<double> params;
             nn::Rng rng(o.seed);
             GuidedBlock<double> block(params, "block", cfg, true, rng);
             randomize(params, o.seed + 3, 0.5);
             nn::Rng grng(o.seed + 11);
             T64 guide = make_uniform({4, 6, 6}, grng);
             nn::Rng xrng(o.seed + 12);
             T64 x = make_uniform({4, 6, 6}, xrng);
             Projector p({4, 6, 6}, o.seed + 1);
             std::vector<T64> wrt{x, guide};
             for (auto& prm : params.items()) wrt.push_back(prm.tensor);
             return check("guided_block", [&] { return p(block(x, guide)); }, wrt, o);
         }},
    };
    return ops_list;
}

}  // namespace

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

std::string Report::to_line() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s %s max_rel_err=%.3e tol=%.1e checked=%zu nonzero=%zu",
                  passed() ? "PASS" : "FAIL", name.c_str(), max_rel_error, tolerance, checked, nonzero);
    return buf;
}

Report check(std::string name, const std::function<TensorF64()>& loss, std::vector<TensorF64> wrt,
             const Options& options) {
    Report report{std::move(name), 0.0, options.tolerance, 0, 0};
    for (auto& t : wrt) t.zero_grad();
    TensorF64 l = loss();
    if (!l.requires_grad()) throw Error(ErrorCode::InvalidArgument, report.name + ": loss does not depend on inputs");
    backward(l);

    nn::Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
    NoGradGuard no_grad;
    for (auto& t : wrt) {
        std::vector<std::size_t> idx(t.numel());
        std::iota(idx.begin(), idx.end(), 0);
        if (idx.size() > options.max_per_tensor) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(options.max_per_tensor);
        }
        auto values = t.mutable_values();
        for (std::size_t i : idx) {
            double analytic = t.has_grad() ? t.grad()[i] : 0.0;
            const double saved = values[i];
            values[i] = saved + options.step;
            double up = loss().item();
            values[i] = saved - options.step;
            double down = loss().item();
            values[i] = saved;
            double numeric = (up - down) / (2.0 * options.step);
            report.max_rel_error = std::max(report.max_rel_error, relative_error(analytic, numeric));
            ++report.checked;
            if (std::abs(analytic) > 1e-12) ++report.nonzero;
        }
    }
    return report;
}

std::vector<std::string> op_names() {
    std::vector<std::string> out;
    for (const auto& [name, f] : registry()) out.push_back(name);
    return out;
}

Report check_op(std::string_view name, const Options& options) {
    for (const auto& [n, f] : registry()) {
        if (n == name) return f(options);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown gradcheck op: " + std::string(name));
}

Report check_full_model(const ModelConfig& config, const Options& options) {
    ERetinexModelF64 model(config, options.seed);
    // Perturb every parameter (biases start at zero) at a scale that keeps
    // the output away from the clamp boundaries for most pixels.
    randomize(model.parameters(), options.seed + 3, 0.2);
    nn::Rng rng(options.seed + 5);
    T64 image = uniform({3, 8, 8}, rng, 0.05, 0.3).detach();
    T64 voxels = uniform({config.voxel_bins, 8, 8}, rng, -1.0, 1.0).detach();
    T64 target = uniform({3, 8, 8}, rng, 0.0, 1.0).detach();
    std::vector<T64> wrt;
    for (auto& p : model.parameters().items()) wrt.push_back(p.tensor);
    EnhanceOptions eo;
    eo.compute_mid = false;
    return check("full_model", [&] { return ops::mae_loss(model.enhance(image, voxels, eo).out, target); }, wrt,
                 options);
}

}  // namespace eretinex::gradcheck
