#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hazefuse/fusion.hpp"
#include "hazefuse/haze.hpp"
#include "hazefuse/tensor.hpp"

// Depth feature sources. The oracle embeds ground-truth depth, so its output
// never depends on haze; the degraded provider corrupts depth first to mimic
// a weak depth estimator; files allow externally computed features.

namespace hazefuse {

struct DepthProvenance {
    enum class Kind { Oracle, Degraded, File };
    Kind kind = Kind::Oracle;
    double sigma = 0.0;
    std::size_t blur_k = 1;
    std::string path;
};

struct DepthFeatures {
    Tensor features;  // 1 x C_d x H' x W'
    DepthProvenance provenance;
};

inline constexpr std::uint64_t kProjectionSeed = 0x6465707468'5052ull;
inline constexpr double kEdgeJumpMeters = 1.0;

// 4 x H x W per-pixel channels: [d / max_depth, |dd/dx| / max_depth,
// |dd/dy| / max_depth, edge mask]. Forward differences, zero on the last
// column/row.
Tensor depth_embedding(const Tensor& depth);

// Fixed C_d x 4 projection shared by every provider.
Tensor depth_projection(std::size_t depth_channels);

// Block means over pool x pool tiles of a C x H x W map.
Tensor block_average(const Tensor& map, std::size_t pool);

// depth + N(0, sigma^2) noise, then a blur_k x blur_k box blur (edge
// clamped), floored at zero.
Tensor degrade_depth(const Tensor& depth, double sigma, std::size_t blur_k, std::uint64_t seed);

// Features for an arbitrary 1 x H x W depth map; pool is the attach-point
// downsampling factor.
Tensor embed_depth(const Tensor& depth, const FusionConfig& cfg, std::size_t pool);

DepthFeatures oracle_features(const Scene& scene, const FusionConfig& cfg, std::size_t pool = 1);
DepthFeatures degraded_features(const Scene& scene, const FusionConfig& cfg, std::size_t pool, double sigma,
                                std::size_t blur_k, std::uint64_t seed);
DepthFeatures load_features(const std::filesystem::path& path);

}  // namespace hazefuse
