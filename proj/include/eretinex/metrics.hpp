#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "eretinex/tensor.hpp"

namespace eretinex::metrics {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

// 10 log10(1 / MSE) for images in [0, 1]; +inf when MSE == 0.
double psnr(const Tensor& pred, const Tensor& target);
double mae(const Tensor& pred, const Tensor& target);

struct SsimOptions {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

// Mean local SSIM over the valid (unpadded) window positions, per channel,
// then averaged over channels. Requires H, W >= window.
double ssim(const Tensor& pred, const Tensor& target, const SsimOptions& options = {});

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::vector<double> gaussian_taps(std::size_t size, double sigma);

// Differentiable SSIM (same definition as ssim()) built from tensor ops.
template <class T>
BasicTensor<T> ssim_index(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                          const SsimOptions& options = {});

// Default perceptual term: 1 - SSIM.
template <class T>
BasicTensor<T> ssim_perceptual_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

template <class T>
using PerceptualLoss = std::function<BasicTensor<T>(const BasicTensor<T>&, const BasicTensor<T>&)>;

struct ImageMetrics {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
    double mae = 0.0;
};

/// Per-image metrics plus their aggregate. Infinite PSNRs (exact matches)
/// are excluded from the PSNR mean and counted in `psnr_infinite`; if every
/// image is exact the aggregate PSNR is +inf.
struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double mae = 0.0;
    std::size_t psnr_infinite = 0;
    std::vector<ImageMetrics> per_image;

    void add(ImageMetrics m) { per_image.push_back(std::move(m)); }
    void finalize();

    // "id,psnr,ssim,mae" lines, no header.
    std::string to_csv() const;
    std::string to_table() const;
};

ImageMetrics measure(std::string id, const Tensor& pred, const Tensor& target);

}  // namespace eretinex::metrics
