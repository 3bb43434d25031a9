#pragma once

#include <span>
#include <string>
#include <vector>

#include "hazefuse/tensor.hpp"

namespace hazefuse {

inline constexpr double kPsnrCap = 99.0;  // reported for identical images

// Both operands are clamped to [0, 1] first.
double mse(const Tensor& x, const Tensor& y);
double psnr(const Tensor& x, const Tensor& y, double max_val = 1.0);
// BT.601 luma; x and y are 3 x H x W or B x 3 x H x W.
double psnr_y(const Tensor& x, const Tensor& y);
Tensor luma(const Tensor& rgb);

// Windowed SSIM (11x11 Gaussian, sigma 1.5, valid positions only) averaged
// over channels. Accepts C x H x W or 1 x C x H x W.
double ssim(const Tensor& x, const Tensor& y);

struct ImageMetrics {
    std::string id;
    double psnr = 0.0;
    double psnr_y = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::vector<ImageMetrics> images;
    double psnr = 0.0;  // means over images
    double psnr_y = 0.0;
    double ssim = 0.0;
};

ImageMetrics image_metrics(const std::string& id, const Tensor& pred, const Tensor& target);
MetricReport summarize(std::vector<ImageMetrics> images);

// Natural-log KL divergence of two discrete distributions.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct KLCurve {
    std::vector<double> thresholds;
    std::vector<double> exceedance;  // fraction of windows with KL > threshold
};

// Per-window KL(a || b). Both maps are min-max normalized with shared bounds,
// each window becomes a `bins`-bin histogram with add-one smoothing.
std::vector<double> window_kl(const Tensor& depth_a, const Tensor& depth_b, std::size_t window = 16,
                              std::size_t bins = 32);
KLCurve exceedance_curve(std::span<const double> kl_values, std::vector<double> thresholds);
KLCurve kl_exceedance(const Tensor& depth_a, const Tensor& depth_b, std::vector<double> thresholds,
                      std::size_t window = 16, std::size_t bins = 32);

// L2 distance divided by sqrt(element count).
double feature_distance(const Tensor& a, const Tensor& b);

struct DistanceProfile {
    std::vector<double> betas;
    std::vector<std::vector<double>> distances;  // [beta][image]
    std::vector<double> bin_edges;                // ascending, bins + 1 entries
    std::vector<std::vector<double>> histogram;   // [beta][bin], rows sum to 1

    std::vector<double> means() const;
};

// Shared-edge histograms of every beta row, spanning [0, max distance].
DistanceProfile make_distance_profile(std::vector<double> betas, std::vector<std::vector<double>> distances,
                                      std::size_t bins = 20);

}  // namespace hazefuse
