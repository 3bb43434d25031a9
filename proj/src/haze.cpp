#include "hazefuse/haze.hpp"

#include <algorithm>
#include <cmath>

#include "hazefuse/errors.hpp"
#include "hazefuse/rng.hpp"

namespace hazefuse {

namespace {

struct Color {
    double r, g, b;
};

Color random_color(Rng& rng) {
    return {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
}

struct Canvas {
    std::size_t h, w;
    std::vector<double> rgb;    // 3 x H x W
    std::vector<double> depth;  // H x W

    void put(std::size_t y, std::size_t x, Color c, double d) {
        const std::size_t hw = h * w;
        rgb[y * w + x] = std::clamp(c.r, 0.0, 1.0);
        rgb[hw + y * w + x] = std::clamp(c.g, 0.0, 1.0);
        rgb[2 * hw + y * w + x] = std::clamp(c.b, 0.0, 1.0);
        depth[y * w + x] = d;
    }
};

// Stripe texture in [-amp, amp].
double texture(std::size_t y, std::size_t x, double freq, double phase, double amp) {
    return amp * std::sin(freq * (static_cast<double>(x) + 0.7 * static_cast<double>(y)) + phase);
}

Scene frontal_plane(std::uint64_t seed, std::size_t h, std::size_t w) {
    Rng rng(seed);
    Canvas cv{h, w, std::vector<double>(3 * h * w), std::vector<double>(h * w)};
    const Color base = random_color(rng);
    const double d = rng.uniform(2.0, 20.0);
    const double freq = rng.uniform(0.3, 1.2), phase = rng.uniform(0.0, 6.28);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double t = texture(y, x, freq, phase, 0.08);
            cv.put(y, x, {base.r + t, base.g + t, base.b + t}, d);
        }
    return {Tensor({3, h, w}, std::move(cv.rgb)), Tensor({1, h, w}, std::move(cv.depth)), seed, {}};
}

}  // namespace

void validate(const Scene& scene) {
    if (!scene.clear.defined() || scene.clear.rank() != 3 || scene.clear.dim(0) != 3) {
        throw DimensionError("scene clear image must be 3 x H x W");
    }
    if (!scene.depth.defined() || scene.depth.rank() != 3 || scene.depth.dim(0) != 1 ||
        scene.depth.dim(1) != scene.clear.dim(1) || scene.depth.dim(2) != scene.clear.dim(2)) {
        throw DimensionError("scene depth " + shape_str(scene.depth.shape()) +
                             " does not match clear image " + shape_str(scene.clear.shape()));
    }
    for (double v : scene.clear.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("scene clear values must lie in [0, 1]");
    }
    for (double v : scene.depth.data()) {
        if (!(v >= 0.0 && std::isfinite(v))) throw ConfigError("scene depth must be finite and >= 0");
    }
}

void validate(const HazeParams& params) {
    if (!(params.beta >= 0.0 && std::isfinite(params.beta))) {
        throw ConfigError("haze beta must be finite and >= 0");
    }
    for (double a : params.airlight) {
        if (!(a > 0.0 && a <= 1.0)) throw ConfigError("atmospheric light must lie in (0, 1]");
    }
}

Scene generate_scene(std::uint64_t seed, std::size_t h, std::size_t w, int difficulty) {
    if (h < 16 || w < 16 || h % 2 || w % 2) {
        throw ConfigError("scene size must be even and at least 16x16, got " + std::to_string(h) +
                          "x" + std::to_string(w));
    }
    if (difficulty < 0) throw ConfigError("scene difficulty must be >= 0");
    Scene scene;
    if (difficulty == 0) {
        scene = frontal_plane(seed, h, w);
    } else {
        Rng rng(seed);
        Canvas cv{h, w, std::vector<double>(3 * h * w), std::vector<double>(h * w)};
        const auto hd = static_cast<double>(h);
        const auto wd = static_cast<double>(w);

        const std::size_t horizon = static_cast<std::size_t>(hd * rng.uniform(0.3, 0.5));
        const Color sky_top{rng.uniform(0.3, 0.6), rng.uniform(0.5, 0.75), rng.uniform(0.75, 0.95)};
        const Color sky_low{rng.uniform(0.7, 0.9), rng.uniform(0.75, 0.92), rng.uniform(0.85, 0.98)};
        const Color ground = random_color(rng);
        const double near_depth = rng.uniform(2.0, 5.0);
        const double g_freq = rng.uniform(0.4, 1.4), g_phase = rng.uniform(0.0, 6.28);

        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                if (y < horizon) {
                    const double s = static_cast<double>(y) / std::max<double>(1.0, static_cast<double>(horizon));
                    cv.put(y, x,
                           {sky_top.r + s * (sky_low.r - sky_top.r), sky_top.g + s * (sky_low.g - sky_top.g),
                            sky_top.b + s * (sky_low.b - sky_top.b)},
                           kMaxSceneDepth);
                } else {
                    // Perspective ground: depth ~ 1 / (rows below horizon).
                    const double rows = static_cast<double>(y - horizon) + 0.5;
                    const double d = std::clamp(near_depth * (hd - static_cast<double>(horizon)) / rows,
                                                kMinSceneDepth, kMaxSceneDepth);
                    const double t = texture(y, x, g_freq * (1.0 + 4.0 / d), g_phase, 0.1);
                    cv.put(y, x, {ground.r + t, ground.g + t, ground.b + t}, d);
                }
            }
        }

        const auto extra = static_cast<std::uint64_t>(std::min(difficulty, 3));
        const std::size_t count = std::min<std::size_t>(8, 3 + rng.below(2 + extra) + (difficulty > 1 ? 1 : 0));
        struct Shape2D {
            bool disk;
            double cy, cx, hy, hx, depth;
            Color color;
            double freq, phase;
        };
        std::vector<Shape2D> shapes;
        for (std::size_t i = 0; i < count; ++i) {
            Shape2D s{};
            s.disk = rng.below(2) == 1;
            s.depth = rng.uniform(2.0, 40.0);
            // Closer objects are drawn larger.
            const double scale = std::clamp(6.0 / s.depth, 0.12, 0.45);
            s.hy = hd * scale * rng.uniform(0.6, 1.2);
            s.hx = wd * scale * rng.uniform(0.6, 1.2);
            s.cy = rng.uniform(static_cast<double>(horizon) * 0.6, hd);
            s.cx = rng.uniform(0.0, wd);
            s.color = random_color(rng);
            s.freq = rng.uniform(0.5, 2.0);
            s.phase = rng.uniform(0.0, 6.28);
            shapes.push_back(s);
        }
        // Painter's order: far to near.
        std::stable_sort(shapes.begin(), shapes.end(),
                         [](const Shape2D& a, const Shape2D& b) { return a.depth > b.depth; });
        for (const auto& s : shapes) {
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double dy = (static_cast<double>(y) + 0.5 - s.cy) / s.hy;
                    const double dx = (static_cast<double>(x) + 0.5 - s.cx) / s.hx;
                    const bool inside = s.disk ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                    if (!inside) continue;
                    const double t = texture(y, x, s.freq, s.phase, 0.12);
                    const double shade = 0.1 * dy;
                    cv.put(y, x, {s.color.r + t - shade, s.color.g + t - shade, s.color.b - t - shade}, s.depth);
                }
        }
        scene = {Tensor({3, h, w}, std::move(cv.rgb)), Tensor({1, h, w}, std::move(cv.depth)), seed, {}};
    }
    scene.id = "scene-" + std::to_string(seed);
    return scene;
}

Tensor transmission(const Tensor& depth, double beta) {
    std::vector<double> t(depth.numel());
    const auto d = depth.data();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::exp(-beta * d[i]);
    return Tensor(depth.shape(), std::move(t));
}

HazyPair synthesize(const Scene& scene, const HazeParams& params) {
    validate(params);
    const std::size_t hw = scene.height() * scene.width();
    const auto j = scene.clear.data();
    const Tensor t = transmission(scene.depth, params.beta);
    std::vector<double> out(3 * hw);
    for (std::size_t c = 0; c < 3; ++c) {
        const double a = params.airlight[c];
        for (std::size_t p = 0; p < hw; ++p) {
            const double jv = j[c * hw + p];
            const double tv = t[p];
            const double v = jv * tv + a * (1.0 - tv);
            // Convex combination of J and A; the clamp only absorbs last-bit rounding.
            out[c * hw + p] = std::clamp(v, std::min(jv, a), std::max(jv, a));
        }
    }
    return {Tensor(scene.clear.shape(), std::move(out)), scene.id, params};
}

Tensor invert(const HazyPair& hazy, const Tensor& depth, const HazeParams& params) {
    validate(params);
    const std::size_t hw = depth.numel();
    if (hazy.hazy.numel() != 3 * hw) {
        throw DimensionError("hazy image " + shape_str(hazy.hazy.shape()) + " does not match depth " +
                             shape_str(depth.shape()));
    }
    const Tensor t = transmission(depth, params.beta);
    std::size_t below = 0;
    for (double v : t.data()) below += v < kTransmissionFloor;
    if (below > 0) {
        throw SingularityError("transmission below floor at " + std::to_string(below) + " pixel(s)");
    }
    const auto iv = hazy.hazy.data();
    std::vector<double> out(3 * hw);
    for (std::size_t c = 0; c < 3; ++c) {
        const double a = params.airlight[c];
        for (std::size_t p = 0; p < hw; ++p) out[c * hw + p] = (iv[c * hw + p] - a * (1.0 - t[p])) / t[p];
    }
    return Tensor(hazy.hazy.shape(), std::move(out));
}

std::vector<double> default_betas() { return {0.04, 0.0704, 0.1008, 0.1312, 0.1616, 0.20}; }

std::vector<HazyPair> beta_sweep(const Scene& scene, const std::vector<double>& betas, double airlight) {
    if (betas.empty()) throw ConfigError("beta sweep needs at least one level");
    if (!std::is_sorted(betas.begin(), betas.end())) throw ConfigError("beta sweep levels must be ascending");
    std::vector<HazyPair> out;
    out.reserve(betas.size());
    for (double b : betas) out.push_back(synthesize(scene, HazeParams::uniform(b, airlight)));
    return out;
}

}  // namespace hazefuse
