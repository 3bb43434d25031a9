#include "hazefuse/dataset.hpp"

#include <cstdio>
#include <filesystem>

#include "hazefuse/errors.hpp"
#include "hazefuse/rng.hpp"

namespace hazefuse {

std::string Dataset::sample_id(std::size_t sample) const {
    char beta[32];
    std::snprintf(beta, sizeof beta, "%.4f", beta_of(sample));
    return scenes[scene_of(sample)].id + "@" + beta;
}

std::uint64_t scene_seed(const DatasetConfig& cfg, Split split, std::size_t index) {
    // Validation scenes come from a disjoint stream.
    const std::uint64_t stream = split == Split::Train ? 0 : (std::uint64_t{1} << 40);
    return derive_seed(cfg.seed, stream + index);
}

Dataset dataset_from_scenes(std::vector<Scene> scenes, std::vector<double> betas, double airlight) {
    if (betas.empty()) throw ConfigError("dataset needs at least one beta level");
    Dataset d;
    d.betas = std::move(betas);
    d.airlight = airlight;
    d.scenes = std::move(scenes);
    d.hazy.reserve(d.scenes.size() * d.betas.size());
    for (const auto& s : d.scenes) {
        validate(s);
        for (const auto& pair : beta_sweep(s, d.betas, airlight)) d.hazy.push_back(pair.hazy);
    }
    return d;
}

Dataset build_dataset(const DatasetConfig& cfg, Split split) {
    if (cfg.scenes == 0) throw ConfigError("dataset needs at least one scene");
    std::vector<Scene> scenes;
    scenes.reserve(cfg.scenes);
    for (std::size_t i = 0; i < cfg.scenes; ++i) {
        scenes.push_back(generate_scene(scene_seed(cfg, split, i), cfg.size, cfg.size, cfg.difficulty));
    }
    return dataset_from_scenes(std::move(scenes), cfg.betas, cfg.airlight);
}

Tensor stack(const std::vector<Tensor>& items) {
    if (items.empty()) throw DimensionError("cannot stack an empty list");
    const Shape inner = items.front().shape();
    std::vector<double> v;
    v.reserve(items.size() * items.front().numel());
    for (const auto& t : items) {
        if (t.shape() != inner) {
            throw DimensionError("stack shape mismatch: " + shape_str(inner) + " vs " + shape_str(t.shape()));
        }
        v.insert(v.end(), t.data().begin(), t.data().end());
    }
    Shape s{items.size()};
    s.insert(s.end(), inner.begin(), inner.end());
    return Tensor(std::move(s), std::move(v));
}

Tensor batch_hazy(const Dataset& d, const std::vector<std::size_t>& samples) {
    std::vector<Tensor> items;
    for (std::size_t i : samples) items.push_back(d.hazy.at(i));
    return stack(items);
}

Tensor batch_clear(const Dataset& d, const std::vector<std::size_t>& samples) {
    std::vector<Tensor> items;
    for (std::size_t i : samples) items.push_back(d.scenes.at(d.scene_of(i)).clear);
    return stack(items);
}

DepthFeatures provide_features(const Scene& scene, const DepthProviderConfig& provider, const FusionConfig& cfg,
                               std::size_t pool) {
    switch (provider.kind) {
        case DepthProvenance::Kind::Oracle:
            return oracle_features(scene, cfg, pool);
        case DepthProvenance::Kind::Degraded:
            return degraded_features(scene, cfg, pool, provider.sigma, provider.blur_k,
                                     derive_seed(provider.seed, scene.seed));
        case DepthProvenance::Kind::File: {
            DepthFeatures f = load_features(std::filesystem::path(provider.dir) / (scene.id + ".hzt"));
            const Shape want{1, cfg.depth_channels, scene.height() / pool, scene.width() / pool};
            if (f.features.shape() != want) {
                throw DimensionError("depth features for " + scene.id + " are " + shape_str(f.features.shape()) +
                                     ", expected " + shape_str(want));
            }
            return f;
        }
    }
    throw ConfigError("unknown depth provider");
}

Tensor provider_depth(const Scene& scene, const DepthProviderConfig& provider) {
    switch (provider.kind) {
        case DepthProvenance::Kind::Oracle:
            return scene.depth;
        case DepthProvenance::Kind::Degraded:
            return degrade_depth(scene.depth, provider.sigma, provider.blur_k, derive_seed(provider.seed, scene.seed));
        case DepthProvenance::Kind::File:
            break;
    }
    throw ConfigError("file depth providers carry features only, not depth maps");
}

std::vector<Tensor> scene_features(const Dataset& d, const DepthProviderConfig& provider, const FusionConfig& cfg,
                                   std::size_t pool) {
    std::vector<Tensor> out;
    out.reserve(d.scenes.size());
    for (const auto& s : d.scenes) out.push_back(provide_features(s, provider, cfg, pool).features);
    return out;
}

Tensor batch_features(const Dataset& d, const std::vector<Tensor>& per_scene, const std::vector<std::size_t>& samples) {
    if (per_scene.size() != d.scenes.size()) {
        throw DimensionError("depth features cover " + std::to_string(per_scene.size()) + " scenes, dataset has " +
                             std::to_string(d.scenes.size()));
    }
    std::vector<double> v;
    Shape inner;
    for (std::size_t i : samples) {
        const Tensor& f = per_scene[d.scene_of(i)];
        inner = Shape(f.shape().begin() + 1, f.shape().end());
        v.insert(v.end(), f.data().begin(), f.data().end());
    }
    Shape s{samples.size()};
    s.insert(s.end(), inner.begin(), inner.end());
    return Tensor(std::move(s), std::move(v));
}

}  // namespace hazefuse
