#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "hazefuse/tensor.hpp"

namespace hazefuse {

// How the depth-aware interaction forms its attention map.
enum class DaiMode {
    Channel,  // C x C map over channels, tokens contracted (default)
    Spatial,  // HW x HW map over positions, channels contracted
};

struct FusionConfig {
    std::size_t channels = 16;       // RGB feature width at the attach point
    std::size_t depth_channels = 8;  // width of the incoming depth features
    std::size_t heads = 2;           // CFE attention heads
    bool use_pre_zc = true;
    bool use_post_zc = true;
    std::size_t asg_layers = 2;
    std::size_t hgdf_blocks = 1;
    std::size_t ffn_expansion = 2;
    DaiMode dai_mode = DaiMode::Channel;

    // Throws ConfigError listing every violated constraint.
    void validate() const;
};

// RGB-depth fusion: hgdf_blocks x (CFE -> DAI -> ACG/D-FFN) followed by
// adaptive spatial gating, plus the zero-initialized injection into a host
// block. Parameters live in an external ParamSet under `prefix`.
class FusionModule {
public:
    explicit FusionModule(FusionConfig cfg, std::string prefix = "fusion");

    const FusionConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }

    // Fresh parameters: fan-in scaled uniform weights, zero biases, and
    // all-zero ZC layers.
    ParamSet init_params(std::uint64_t seed) const;
    std::size_t param_count() const;

    // Color feature encoder: MHSA over spatial tokens.
    Tensor cfe(const Tensor& f_rgb, const ParamSet& p, std::size_t block = 0) const;
    // Depth-aware interaction: RGB supplies query and value, depth the key.
    Tensor dai(const Tensor& f_a, const Tensor& f_d, const ParamSet& p, std::size_t block = 0) const;
    // Channel gate g = sigmoid(MLP(GAP(f_x))), shape B x C x 1 x 1.
    Tensor acg_gate(const Tensor& f_x, const ParamSet& p, std::size_t block = 0) const;
    // X = f_a + g * f_x, then F = W2(GELU(W1(X))) + X.
    Tensor acg_ffn(const Tensor& f_a, const Tensor& f_x, const ParamSet& p, std::size_t block = 0) const;
    // Spatial mask M = sigmoid(ASG(f_hat)), shape B x 1 x H x W.
    Tensor asg_mask(const Tensor& f_hat, const ParamSet& p) const;
    // f_hat * M + f_rgb * (1 - M)
    Tensor asg(const Tensor& f_hat, const Tensor& f_rgb, const ParamSet& p) const;

    // Auxiliary features F_aux (the ASG output).
    Tensor forward(const Tensor& f_rgb, const Tensor& f_d, const ParamSet& p) const;

    using HostBlock = std::function<Tensor(const Tensor&)>;
    // phi(f_rgb + W_pre f_aux) + W_post f_aux; a disabled ZC layer becomes a
    // plain addition of f_aux.
    Tensor zc_inject(const Tensor& f_rgb, const Tensor& f_aux, const HostBlock& phi, const ParamSet& p) const;

    std::string block_prefix(std::size_t block) const;

private:
    FusionConfig cfg_;
    std::string prefix_;
};

}  // namespace hazefuse
