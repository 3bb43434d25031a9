#include "hazefuse/depth.hpp"

#include <algorithm>
#include <cmath>

#include "hazefuse/errors.hpp"
#include "hazefuse/rng.hpp"
#include "hazefuse/tensor_io.hpp"

namespace hazefuse {

namespace {

void require_depth_map(const Tensor& depth) {
    if (depth.rank() != 3 || depth.dim(0) != 1) {
        throw DimensionError("depth map must be 1 x H x W, got " + shape_str(depth.shape()));
    }
}

}  // namespace

Tensor depth_embedding(const Tensor& depth) {
    require_depth_map(depth);
    const std::size_t h = depth.dim(1), w = depth.dim(2), hw = h * w;
    const auto d = depth.data();
    std::vector<double> out(4 * hw, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            const double gx = x + 1 < w ? std::abs(d[i + 1] - d[i]) : 0.0;
            const double gy = y + 1 < h ? std::abs(d[i + w] - d[i]) : 0.0;
            out[i] = d[i] / kMaxSceneDepth;
            out[hw + i] = gx / kMaxSceneDepth;
            out[2 * hw + i] = gy / kMaxSceneDepth;
            out[3 * hw + i] = std::max(gx, gy) > kEdgeJumpMeters ? 1.0 : 0.0;
        }
    return Tensor({4, h, w}, std::move(out));
}

Tensor depth_projection(std::size_t depth_channels) {
    Rng rng(kProjectionSeed);
    std::vector<double> p(depth_channels * 4);
    for (double& v : p) v = rng.uniform(-1.0, 1.0);
    return Tensor({depth_channels, 4}, std::move(p));
}

Tensor block_average(const Tensor& map, std::size_t pool) {
    if (map.rank() != 3) throw DimensionError("block_average expects C x H x W, got " + shape_str(map.shape()));
    const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
    if (pool == 0 || h % pool || w % pool) {
        throw DimensionError("pool factor " + std::to_string(pool) + " does not divide " + shape_str(map.shape()));
    }
    if (pool == 1) return map.clone();
    const std::size_t oh = h / pool, ow = w / pool;
    const auto v = map.data();
    std::vector<double> out(c * oh * ow, 0.0);
    const double inv = 1.0 / static_cast<double>(pool * pool);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (std::size_t i = 0; i < pool; ++i)
                    for (std::size_t j = 0; j < pool; ++j) acc += v[(ch * h + y * pool + i) * w + x * pool + j];
                out[(ch * oh + y) * ow + x] = acc * inv;
            }
    return Tensor({c, oh, ow}, std::move(out));
}

Tensor degrade_depth(const Tensor& depth, double sigma, std::size_t blur_k, std::uint64_t seed) {
    require_depth_map(depth);
    if (!(sigma >= 0.0)) throw ConfigError("depth noise sigma must be >= 0");
    if (blur_k == 0 || blur_k % 2 == 0) throw ConfigError("depth blur kernel must be odd, got " + std::to_string(blur_k));
    const std::size_t h = depth.dim(1), w = depth.dim(2);
    std::vector<double> noisy(depth.data().begin(), depth.data().end());
    if (sigma > 0.0) {
        Rng rng(seed);
        for (double& v : noisy) v += sigma * rng.normal();
    }
    std::vector<double> out = noisy;
    if (blur_k > 1) {
        const auto r = static_cast<long>(blur_k / 2);
        for (long y = 0; y < static_cast<long>(h); ++y)
            for (long x = 0; x < static_cast<long>(w); ++x) {
                double acc = 0.0;
                for (long i = -r; i <= r; ++i)
                    for (long j = -r; j <= r; ++j) {
                        const long yy = std::clamp<long>(y + i, 0, static_cast<long>(h) - 1);
                        const long xx = std::clamp<long>(x + j, 0, static_cast<long>(w) - 1);
                        acc += noisy[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
                    }
                out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] =
                    acc / static_cast<double>(blur_k * blur_k);
            }
    }
    for (double& v : out) v = std::max(v, 0.0);
    return Tensor(depth.shape(), std::move(out));
}

Tensor embed_depth(const Tensor& depth, const FusionConfig& cfg, std::size_t pool) {
    const Tensor e = depth_embedding(depth);
    const Tensor proj = depth_projection(cfg.depth_channels);
    const std::size_t hw = depth.dim(1) * depth.dim(2);
    const auto ev = e.data();
    const auto pv = proj.data();
    std::vector<double> feat(cfg.depth_channels * hw, 0.0);
    for (std::size_t o = 0; o < cfg.depth_channels; ++o)
        for (std::size_t k = 0; k < 4; ++k) {
            const double a = pv[o * 4 + k];
            for (std::size_t i = 0; i < hw; ++i) feat[o * hw + i] += a * ev[k * hw + i];
        }
    Tensor pooled = block_average(Tensor({cfg.depth_channels, depth.dim(1), depth.dim(2)}, std::move(feat)), pool);
    const Shape s = pooled.shape();
    return Tensor({1, s[0], s[1], s[2]}, {pooled.data().begin(), pooled.data().end()});
}

DepthFeatures oracle_features(const Scene& scene, const FusionConfig& cfg, std::size_t pool) {
    return {embed_depth(scene.depth, cfg, pool), {DepthProvenance::Kind::Oracle, 0.0, 1, {}}};
}

DepthFeatures degraded_features(const Scene& scene, const FusionConfig& cfg, std::size_t pool, double sigma,
                                std::size_t blur_k, std::uint64_t seed) {
    const Tensor corrupted = degrade_depth(scene.depth, sigma, blur_k, seed);
    return {embed_depth(corrupted, cfg, pool), {DepthProvenance::Kind::Degraded, sigma, blur_k, {}}};
}

DepthFeatures load_features(const std::filesystem::path& path) {
    Tensor t = load_tensor(path);
    if (t.rank() == 3) {
        const Shape s = t.shape();
        t = Tensor({1, s[0], s[1], s[2]}, {t.data().begin(), t.data().end()});
    }
    if (t.rank() != 4) throw DimensionError("depth feature file must hold a C x H x W or B x C x H x W tensor");
    for (double v : t.data()) {
        if (!std::isfinite(v)) throw NumericError("depth feature file contains non-finite values");
    }
    return {t, {DepthProvenance::Kind::File, 0.0, 1, path.string()}};
}

}  // namespace hazefuse
