#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hazefuse/depth.hpp"
#include "hazefuse/haze.hpp"

namespace hazefuse {

struct DatasetConfig {
    std::size_t scenes = 512;
    std::size_t size = 32;  // square scenes
    int difficulty = 2;
    std::uint64_t seed = 1;
    std::vector<double> betas = default_betas();
    double airlight = kDefaultAtmosphericLight;
};

enum class Split { Train, Val };

// Every scene rendered at every beta. Sample i is scene i / |betas| at
// beta i % |betas|.
struct Dataset {
    std::vector<Scene> scenes;
    std::vector<double> betas;
    double airlight = kDefaultAtmosphericLight;
    std::vector<Tensor> hazy;  // 3 x H x W per sample

    std::size_t size() const { return hazy.size(); }
    std::size_t scene_of(std::size_t sample) const { return sample / betas.size(); }
    double beta_of(std::size_t sample) const { return betas[sample % betas.size()]; }
    std::string sample_id(std::size_t sample) const;
};

std::uint64_t scene_seed(const DatasetConfig& cfg, Split split, std::size_t index);
Dataset build_dataset(const DatasetConfig& cfg, Split split = Split::Train);
// Wraps existing scenes (e.g. loaded from disk).
Dataset dataset_from_scenes(std::vector<Scene> scenes, std::vector<double> betas, double airlight);

// Stacks per-sample tensors into a batch along a new leading axis.
Tensor stack(const std::vector<Tensor>& items);
Tensor batch_hazy(const Dataset& d, const std::vector<std::size_t>& samples);
Tensor batch_clear(const Dataset& d, const std::vector<std::size_t>& samples);

// Which depth source feeds the fusion module.
struct DepthProviderConfig {
    DepthProvenance::Kind kind = DepthProvenance::Kind::Oracle;
    double sigma = 0.5;
    std::size_t blur_k = 1;
    std::uint64_t seed = 0;
    std::string dir;  // File kind: <dir>/<scene id>.hzt
};

DepthFeatures provide_features(const Scene& scene, const DepthProviderConfig& provider, const FusionConfig& cfg,
                               std::size_t pool);
// The depth map a provider embeds; File providers have none.
Tensor provider_depth(const Scene& scene, const DepthProviderConfig& provider);

// One 1 x C_d x H' x W' tensor per scene of the dataset.
std::vector<Tensor> scene_features(const Dataset& d, const DepthProviderConfig& provider, const FusionConfig& cfg,
                                   std::size_t pool);
// Gathers per-sample depth features (indexed by scene) into a batch.
Tensor batch_features(const Dataset& d, const std::vector<Tensor>& per_scene, const std::vector<std::size_t>& samples);

}  // namespace hazefuse
