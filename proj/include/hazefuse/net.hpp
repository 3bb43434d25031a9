#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazefuse/fusion.hpp"
#include "hazefuse/tensor.hpp"

namespace hazefuse {

struct NetConfig {
    std::size_t base_channels = 16;
    std::size_t levels = 3;  // each extra level halves H and W
    std::size_t blocks_per_level = 2;
    bool global_residual = true;
    std::size_t fusion_attach = 0;  // level whose first block hosts the fusion
    bool zero_head = false;         // with global_residual the fresh net is the identity

    void validate() const;
    std::size_t channels_at(std::size_t level) const { return base_channels << level; }
    std::size_t attach_pool() const { return std::size_t{1} << fusion_attach; }
    std::size_t attach_channels() const { return channels_at(fusion_attach); }
};

// One convolution of the backbone, used by the parameter and FLOP counters.
struct LayerSpec {
    std::string name;
    std::size_t in = 0, out = 0, kernel = 1;
    std::size_t level = 0;  // spatial size is (H >> level) x (W >> level)
};

std::vector<LayerSpec> layer_specs(const NetConfig& cfg);
std::size_t count_params(std::span<const LayerSpec> layers);
std::size_t count_params(const NetConfig& cfg);
std::size_t count_params(const NetConfig& cfg, const FusionConfig& fusion);

// FLOPs = 2 x multiply-accumulates of every convolution and attention matmul.
std::size_t conv_flops(std::size_t in, std::size_t out, std::size_t kernel, std::size_t h, std::size_t w);
std::size_t count_flops(std::span<const LayerSpec> layers, std::size_t h, std::size_t w);
std::size_t count_flops(const NetConfig& cfg, std::size_t h, std::size_t w);
std::size_t count_flops(const NetConfig& cfg, const FusionConfig& fusion, std::size_t h, std::size_t w);
std::size_t fusion_flops(const FusionConfig& fusion, std::size_t h, std::size_t w);

// Encoder-decoder with residual blocks, additive skips and a global residual.
// Backbone parameters live under "net.", fusion parameters under "fusion.".
class DehazeNet {
public:
    explicit DehazeNet(NetConfig cfg, std::optional<FusionConfig> fusion = std::nullopt);

    const NetConfig& config() const { return cfg_; }
    bool fused() const { return fusion_.has_value(); }
    const FusionModule& fusion() const;

    ParamSet init_params(std::uint64_t seed) const;
    ParamSet init_fusion_params(std::uint64_t seed) const;

    // depth_features (B x C_d x H' x W') switches on the fusion path; without
    // it the network runs as the plain baseline.
    Tensor forward(const Tensor& hazy, const ParamSet& p, const Tensor& depth_features = {}) const;

    // Output of the attach-level host block (F'_RGB when fused).
    Tensor attach_features(const Tensor& hazy, const ParamSet& p, const Tensor& depth_features = {}) const;

private:
    Tensor run(const Tensor& hazy, const ParamSet& p, const Tensor& depth_features, bool stop_at_attach) const;
    Tensor res_block(const Tensor& x, const ParamSet& p, const std::string& name) const;

    NetConfig cfg_;
    std::optional<FusionModule> fusion_;
};

}  // namespace hazefuse
