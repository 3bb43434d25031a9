#include "hazefuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hazefuse/errors.hpp"

namespace hazefuse {

namespace {

void require_same(const Tensor& x, const Tensor& y, const char* what) {
    if (x.shape() != y.shape()) {
        throw DimensionError(std::string(what) + " shape mismatch: " + shape_str(x.shape()) + " vs " +
                             shape_str(y.shape()));
    }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double psnr_from_mse(double m, double max_val) {
    if (m <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / m));
}

std::vector<double> gaussian_window() {
    constexpr int n = 11;
    constexpr double sigma = 1.5;
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = std::exp(-0.5 * ((i - 5) * (i - 5)) / (sigma * sigma));
    const double s = std::accumulate(g.begin(), g.end(), 0.0);
    for (double& v : g) v /= s;
    return g;
}

// SSIM of one H x W plane (already clamped).
double ssim_plane(const double* x, const double* y, std::size_t h, std::size_t w) {
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    static const std::vector<double> g = gaussian_window();
    const std::size_t oh = h - 10, ow = w - 10;
    double total = 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (std::size_t i = 0; i < 11; ++i)
                for (std::size_t j = 0; j < 11; ++j) {
                    const double wgt = g[i] * g[j];
                    const double a = x[(oy + i) * w + ox + j], b = y[(oy + i) * w + ox + j];
                    mx += wgt * a;
                    my += wgt * b;
                    sxx += wgt * a * a;
                    syy += wgt * b * b;
                    sxy += wgt * a * b;
                }
            const double vx = std::max(0.0, sxx - mx * mx), vy = std::max(0.0, syy - my * my);
            const double cov = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    return total / static_cast<double>(oh * ow);
}

}  // namespace

double mse(const Tensor& x, const Tensor& y) {
    require_same(x, y, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double d = clamp01(x[i]) - clamp01(y[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(x.numel());
}

double psnr(const Tensor& x, const Tensor& y, double max_val) { return psnr_from_mse(mse(x, y), max_val); }

Tensor luma(const Tensor& rgb) {
    const bool batched = rgb.rank() == 4;
    if (!(rgb.rank() == 3 || batched) || rgb.dim(batched ? 1 : 0) != 3) {
        throw DimensionError("luma expects 3 x H x W or B x 3 x H x W, got " + shape_str(rgb.shape()));
    }
    const std::size_t b = batched ? rgb.dim(0) : 1;
    const std::size_t hw = rgb.numel() / (3 * b);
    std::vector<double> y(b * hw);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
            const double* px = rgb.data().data() + n * 3 * hw + i;
            y[n * hw + i] = 0.299 * clamp01(px[0]) + 0.587 * clamp01(px[hw]) + 0.114 * clamp01(px[2 * hw]);
        }
    return Tensor({b, hw}, std::move(y));
}

double psnr_y(const Tensor& x, const Tensor& y) {
    require_same(x, y, "psnr_y");
    return psnr(luma(x), luma(y));
}

double ssim(const Tensor& x, const Tensor& y) {
    require_same(x, y, "ssim");
    Shape s = x.shape();
    if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
    if (s.size() != 3) throw DimensionError("ssim expects C x H x W, got " + shape_str(x.shape()));
    const std::size_t c = s[0], h = s[1], w = s[2];
    if (h < 11 || w < 11) {
        throw DimensionError("ssim needs at least 11x11 pixels, got " + shape_str(x.shape()));
    }
    std::vector<double> a(x.numel()), b(y.numel());
    std::transform(x.data().begin(), x.data().end(), a.begin(), clamp01);
    std::transform(y.data().begin(), y.data().end(), b.begin(), clamp01);
    double total = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) total += ssim_plane(a.data() + ch * h * w, b.data() + ch * h * w, h, w);
    return total / static_cast<double>(c);
}

ImageMetrics image_metrics(const std::string& id, const Tensor& pred, const Tensor& target) {
    return {id, psnr(pred, target), psnr_y(pred, target), ssim(pred, target)};
}

MetricReport summarize(std::vector<ImageMetrics> images) {
    MetricReport r;
    r.images = std::move(images);
    if (r.images.empty()) return r;
    for (const auto& m : r.images) {
        r.psnr += m.psnr;
        r.psnr_y += m.psnr_y;
        r.ssim += m.ssim;
    }
    const auto n = static_cast<double>(r.images.size());
    r.psnr /= n;
    r.psnr_y /= n;
    r.ssim /= n;
    return r;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw DimensionError("kl_divergence: distributions differ in length");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) throw NumericError("kl_divergence: q has no mass where p does");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(0.0, kl);
}

std::vector<double> window_kl(const Tensor& depth_a, const Tensor& depth_b, std::size_t window, std::size_t bins) {
    require_same(depth_a, depth_b, "window_kl");
    if (depth_a.rank() < 2) throw DimensionError("window_kl expects an H x W map");
    const std::size_t h = depth_a.dim(depth_a.rank() - 2), w = depth_a.dim(depth_a.rank() - 1);
    if (depth_a.numel() != h * w) throw DimensionError("window_kl expects a single-channel map");
    if (window == 0 || bins == 0 || h < window || w < window) {
        throw DimensionError("window_kl: map " + shape_str(depth_a.shape()) + " smaller than window " +
                             std::to_string(window));
    }
    const auto [amin, amax] = std::minmax_element(depth_a.data().begin(), depth_a.data().end());
    const auto [bmin, bmax] = std::minmax_element(depth_b.data().begin(), depth_b.data().end());
    const double lo = std::min(*amin, *bmin), hi = std::max(*amax, *bmax);
    const double span = hi > lo ? hi - lo : 1.0;
    auto bin_of = [&](double v) {
        const auto b = static_cast<std::size_t>((v - lo) / span * static_cast<double>(bins));
        return std::min(b, bins - 1);
    };

    std::vector<double> out;
    const double mass = static_cast<double>(window * window + bins);
    for (std::size_t y0 = 0; y0 + window <= h; y0 += window)
        for (std::size_t x0 = 0; x0 + window <= w; x0 += window) {
            std::vector<double> p(bins, 1.0), q(bins, 1.0);
            for (std::size_t y = y0; y < y0 + window; ++y)
                for (std::size_t x = x0; x < x0 + window; ++x) {
                    p[bin_of(depth_a[y * w + x])] += 1.0;
                    q[bin_of(depth_b[y * w + x])] += 1.0;
                }
            for (std::size_t i = 0; i < bins; ++i) {
                p[i] /= mass;
                q[i] /= mass;
            }
            out.push_back(kl_divergence(p, q));
        }
    return out;
}

KLCurve exceedance_curve(std::span<const double> kl_values, std::vector<double> thresholds) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw ConfigError("KL thresholds must be ascending");
    }
    KLCurve c;
    c.thresholds = std::move(thresholds);
    for (double tau : c.thresholds) {
        const auto above = std::count_if(kl_values.begin(), kl_values.end(), [&](double v) { return v > tau; });
        c.exceedance.push_back(kl_values.empty() ? 0.0
                                                 : static_cast<double>(above) / static_cast<double>(kl_values.size()));
    }
    return c;
}

KLCurve kl_exceedance(const Tensor& depth_a, const Tensor& depth_b, std::vector<double> thresholds,
                      std::size_t window, std::size_t bins) {
    const auto kl = window_kl(depth_a, depth_b, window, bins);
    return exceedance_curve(kl, std::move(thresholds));
}

double feature_distance(const Tensor& a, const Tensor& b) {
    require_same(a, b, "feature_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / static_cast<double>(a.numel()));
}

std::vector<double> DistanceProfile::means() const {
    std::vector<double> m;
    for (const auto& row : distances) {
        m.push_back(row.empty() ? 0.0 : std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size()));
    }
    return m;
}

DistanceProfile make_distance_profile(std::vector<double> betas, std::vector<std::vector<double>> distances,
                                      std::size_t bins) {
    if (betas.size() != distances.size()) throw DimensionError("distance profile: one row per beta required");
    if (bins == 0) throw ConfigError("distance profile needs at least one bin");
    DistanceProfile p;
    p.betas = std::move(betas);
    p.distances = std::move(distances);
    double top = 0.0;
    for (const auto& row : p.distances)
        for (double d : row) top = std::max(top, d);
    if (top <= 0.0) top = 1.0;
    for (std::size_t i = 0; i <= bins; ++i) p.bin_edges.push_back(top * static_cast<double>(i) / static_cast<double>(bins));
    for (const auto& row : p.distances) {
        std::vector<double> h(bins, 0.0);
        for (double d : row) {
            const auto b = std::min(bins - 1, static_cast<std::size_t>(d / top * static_cast<double>(bins)));
            h[b] += 1.0;
        }
        if (!row.empty())
            for (double& v : h) v /= static_cast<double>(row.size());
        p.histogram.push_back(std::move(h));
    }
    return p;
}

}  // namespace hazefuse
