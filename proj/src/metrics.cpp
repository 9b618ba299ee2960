#include "eretinex/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "eretinex/error.hpp"
#include "eretinex/ops.hpp"

namespace eretinex::metrics {

namespace {

void require_same(const char* what, const Tensor& a, const Tensor& b) {
    if (a.dims() != b.dims()) {
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": shapes " + shape_str(a.dims()) +
                                                  " and " + shape_str(b.dims()) + " differ");
    }
}

void require_window(const Shape& dims, std::size_t window) {
    if (dims.size() != 3 || dims[1] < window || dims[2] < window) {
        throw Error(ErrorCode::ShapeMismatch, "ssim needs [C,H,W] with H, W >= " +
                                                  std::to_string(window) + ", got " + shape_str(dims));
    }
}

// Valid separable filtering of one h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
    std::size_t k = taps.size(), wo = w - k + 1, ho = h - k + 1;
    std::vector<double> rows(h * wo, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += taps[i] * src[y * w + x + i];
            rows[y * wo + x] = acc;
        }
    std::vector<double> out(ho * wo, 0.0);
    for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += taps[i] * rows[(y + i) * wo + x];
            out[y * wo + x] = acc;
        }
    return out;
}

std::string format_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double psnr(const Tensor& pred, const Tensor& target) {
    require_same("psnr", pred, target);
    auto p = pred.values();
    auto t = target.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    double mse = acc / static_cast<double>(p.size());
    if (mse == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(1.0 / mse);
}

double mae(const Tensor& pred, const Tensor& target) {
    require_same("mae", pred, target);
    auto p = pred.values();
    auto t = target.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
    return acc / static_cast<double>(p.size());
}

std::vector<double> gaussian_taps(std::size_t size, double sigma) {
    std::vector<double> taps(size);
    double center = (static_cast<double>(size) - 1.0) / 2.0, total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        double d = static_cast<double>(i) - center;
        taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += taps[i];
    }
    for (auto& t : taps) t /= total;
    return taps;
}

double ssim(const Tensor& pred, const Tensor& target, const SsimOptions& options) {
    require_same("ssim", pred, target);
    require_window(pred.dims(), options.window);
    const std::size_t c = pred.dim(0), h = pred.dim(1), w = pred.dim(2), plane = h * w;
    const double c1 = std::pow(options.k1 * options.data_range, 2);
    const double c2 = std::pow(options.k2 * options.data_range, 2);
    const auto taps = gaussian_taps(options.window, options.sigma);
    auto pv = pred.values();
    auto tv = target.values();

    double total = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = pv[ch * plane + i];
            y[i] = tv[ch * plane + i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        auto mx = filter_valid(x, h, w, taps);
        auto my = filter_valid(y, h, w, taps);
        auto exx = filter_valid(xx, h, w, taps);
        auto eyy = filter_valid(yy, h, w, taps);
        auto exy = filter_valid(xy, h, w, taps);
        double acc = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            double sx = exx[i] - mx[i] * mx[i];
            double sy = eyy[i] - my[i] * my[i];
            double sxy = exy[i] - mx[i] * my[i];
            double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * sxy + c2);
            double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (sx + sy + c2);
            acc += num / den;
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(c);
}

template <class T>
BasicTensor<T> ssim_index(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                          const SsimOptions& options) {
    if (pred.dims() != target.dims()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "ssim: shapes " + shape_str(pred.dims()) + " and " + shape_str(target.dims()) + " differ");
    }
    require_window(pred.dims(), options.window);
    const std::size_t c = pred.dim(0), k = options.window;
    const auto taps = gaussian_taps(k, options.sigma);
    BasicTensor<T> kernel(Shape{c, 1, k, k});
    auto kv = kernel.mutable_values();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) kv[(ch * k + i) * k + j] = static_cast<T>(taps[i] * taps[j]);
    auto blur = [&](const BasicTensor<T>& v) { return ops::depthwise_conv2d(v, kernel, BasicTensor<T>(), 1, 0); };

    const T c1 = static_cast<T>(std::pow(options.k1 * options.data_range, 2));
    const T c2 = static_cast<T>(std::pow(options.k2 * options.data_range, 2));
    auto mx = blur(pred);
    auto my = blur(target);
    auto mxx = ops::mul(mx, mx);
    auto myy = ops::mul(my, my);
    auto mxy = ops::mul(mx, my);
    auto sx = ops::sub(blur(ops::mul(pred, pred)), mxx);
    auto sy = ops::sub(blur(ops::mul(target, target)), myy);
    auto sxy = ops::sub(blur(ops::mul(pred, target)), mxy);
    auto num = ops::mul(ops::add_scalar(ops::scale(mxy, T(2)), c1), ops::add_scalar(ops::scale(sxy, T(2)), c2));
    auto den = ops::mul(ops::add_scalar(ops::add(mxx, myy), c1), ops::add_scalar(ops::add(sx, sy), c2));
    return ops::mean(ops::div(num, den));
}

template <class T>
BasicTensor<T> ssim_perceptual_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    return ops::add_scalar(ops::scale(ssim_index(pred, target), T(-1)), T(1));
}

template BasicTensor<float> ssim_index<float>(const BasicTensor<float>&, const BasicTensor<float>&, const SsimOptions&);
template BasicTensor<double> ssim_index<double>(const BasicTensor<double>&, const BasicTensor<double>&, const SsimOptions&);
template BasicTensor<float> ssim_perceptual_loss<float>(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> ssim_perceptual_loss<double>(const BasicTensor<double>&, const BasicTensor<double>&);

void MetricReport::finalize() {
    psnr = ssim = mae = 0.0;
    psnr_infinite = 0;
    if (per_image.empty()) return;
    std::size_t finite = 0;
    for (const auto& m : per_image) {
        if (std::isinf(m.psnr)) {
            ++psnr_infinite;
        } else {
            psnr += m.psnr;
            ++finite;
        }
        ssim += m.ssim;
        mae += m.mae;
    }
    psnr = finite ? psnr / static_cast<double>(finite) : kPsnrIdentical;
    ssim /= static_cast<double>(per_image.size());
    mae /= static_cast<double>(per_image.size());
}

std::string MetricReport::to_csv() const {
    std::string out;
    for (const auto& m : per_image) {
        out += m.id + "," + format_value(m.psnr) + "," + format_value(m.ssim) + "," + format_value(m.mae) + "\n";
    }
    return out;
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %12s %10s %10s\n", "id", "PSNR(dB)", "SSIM", "MAE");
    os << line;
    for (const auto& m : per_image) {
        std::snprintf(line, sizeof line, "%-12s %12s %10.6f %10.6f\n", m.id.c_str(),
                      format_value(m.psnr).c_str(), m.ssim, m.mae);
        os << line;
    }
    std::snprintf(line, sizeof line, "%-12s %12s %10.6f %10.6f\n", "mean", format_value(psnr).c_str(), ssim, mae);
    os << line;
    if (psnr_infinite) os << "(" << psnr_infinite << " exact match(es) excluded from the PSNR mean)\n";
    return os.str();
}

ImageMetrics measure(std::string id, const Tensor& pred, const Tensor& target) {
    return {std::move(id), psnr(pred, target), ssim(pred, target), mae(pred, target)};
}

}  // namespace eretinex::metrics
