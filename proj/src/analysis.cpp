#include "hazefuse/analysis.hpp"

#include "hazefuse/errors.hpp"

namespace hazefuse {

DistanceProfile feature_distance_profile(const DehazeNet& net, const ParamSet& params, const std::vector<Scene>& scenes,
                                         const std::vector<double>& betas, double airlight,
                                         const std::vector<Tensor>* depth, std::size_t bins) {
    if (scenes.empty()) throw ConfigError("distance profile needs at least one scene");
    if (depth && depth->size() != scenes.size()) throw DimensionError("one depth feature tensor per scene required");
    constexpr std::size_t kChunk = 16;

    std::vector<std::vector<double>> rows(betas.size());
    for (std::size_t start = 0; start < scenes.size(); start += kChunk) {
        const std::size_t end = std::min(scenes.size(), start + kChunk);
        std::vector<Tensor> clear, fd;
        for (std::size_t i = start; i < end; ++i) {
            clear.push_back(scenes[i].clear);
            if (depth) fd.push_back((*depth)[i]);
        }
        auto stack_depth = [&] {
            if (!depth) return Tensor();
            std::vector<Tensor> squeezed;
            for (const auto& f : fd) squeezed.push_back(Tensor(Shape(f.shape().begin() + 1, f.shape().end()),
                                                               std::vector<double>(f.data().begin(), f.data().end())));
            return stack(squeezed);
        };
        const Tensor fd_batch = stack_depth();
        const Tensor ref = net.attach_features(stack(clear), params, fd_batch);
        const std::size_t per = ref.numel() / clear.size();
        const Shape one(ref.shape().begin() + 1, ref.shape().end());

        for (std::size_t b = 0; b < betas.size(); ++b) {
            std::vector<Tensor> hazy;
            for (std::size_t i = start; i < end; ++i) {
                hazy.push_back(synthesize(scenes[i], HazeParams::uniform(betas[b], airlight)).hazy);
            }
            const Tensor feat = net.attach_features(stack(hazy), params, fd_batch);
            for (std::size_t k = 0; k < hazy.size(); ++k) {
                const Tensor a(one, std::vector<double>(feat.data().begin() + k * per, feat.data().begin() + (k + 1) * per));
                const Tensor r(one, std::vector<double>(ref.data().begin() + k * per, ref.data().begin() + (k + 1) * per));
                rows[b].push_back(feature_distance(a, r));
            }
        }
    }
    return make_distance_profile(betas, std::move(rows), bins);
}

std::vector<double> provider_window_kl(const std::vector<Scene>& scenes, const DepthProviderConfig& provider) {
    std::vector<double> all;
    for (const auto& s : scenes) {
        const auto kl = window_kl(provider_depth(s, provider), s.depth);
        all.insert(all.end(), kl.begin(), kl.end());
    }
    return all;
}

KLCurve provider_kl_curve(const std::vector<Scene>& scenes, const DepthProviderConfig& provider,
                          std::vector<double> thresholds) {
    const auto kl = provider_window_kl(scenes, provider);
    return exceedance_curve(kl, std::move(thresholds));
}

std::vector<double> default_kl_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 20; ++i) t.push_back(i / 20.0);
    return t;
}

}  // namespace hazefuse
