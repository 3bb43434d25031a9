#pragma once

#include <vector>

#include "hazefuse/dataset.hpp"
#include "hazefuse/metrics.hpp"
#include "hazefuse/net.hpp"

namespace hazefuse {

// For each (scene, beta): attach-point features of the hazy render against
// those of the clear image, both with the scene's depth features when the
// network is fused. depth holds one tensor per scene or is null.
DistanceProfile feature_distance_profile(const DehazeNet& net, const ParamSet& params, const std::vector<Scene>& scenes,
                                         const std::vector<double>& betas, double airlight,
                                         const std::vector<Tensor>* depth, std::size_t bins = 20);

// Window KL of each scene's provider depth against its true depth, pooled
// over all scenes.
std::vector<double> provider_window_kl(const std::vector<Scene>& scenes, const DepthProviderConfig& provider);
KLCurve provider_kl_curve(const std::vector<Scene>& scenes, const DepthProviderConfig& provider,
                          std::vector<double> thresholds);

std::vector<double> default_kl_thresholds();

}  // namespace hazefuse
