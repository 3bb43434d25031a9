#include "hazefuse/net.hpp"

#include "hazefuse/errors.hpp"
#include "hazefuse/ops.hpp"
#include "layers.hpp"

namespace hazefuse {

using detail::conv;

void NetConfig::validate() const {
    std::vector<std::string> errs;
    if (base_channels == 0) errs.push_back("net.base_channels must be >= 1");
    if (levels < 1) errs.push_back("net.levels must be >= 1");
    if (blocks_per_level < 1) errs.push_back("net.blocks_per_level must be >= 1");
    if (fusion_attach >= levels) errs.push_back("net.fusion_attach must be < net.levels");
    if (errs.empty()) return;
    std::string msg;
    for (const auto& e : errs) msg += (msg.empty() ? "" : "; ") + e;
    throw ConfigError(msg);
}

std::vector<LayerSpec> layer_specs(const NetConfig& cfg) {
    std::vector<LayerSpec> out;
    auto block = [&](const std::string& name, std::size_t c, std::size_t level) {
        out.push_back({name + ".conv1", c, c, 3, level});
        out.push_back({name + ".conv2", c, c, 3, level});
    };
    out.push_back({"net.stem", 3, cfg.base_channels, 3, 0});
    for (std::size_t l = 0; l < cfg.levels; ++l) {
        if (l > 0) out.push_back({"net.down" + std::to_string(l), cfg.channels_at(l - 1), cfg.channels_at(l), 1, l});
        for (std::size_t j = 0; j < cfg.blocks_per_level; ++j)
            block("net.enc" + std::to_string(l) + ".b" + std::to_string(j), cfg.channels_at(l), l);
    }
    for (std::size_t l = cfg.levels - 1; l-- > 0;) {
        out.push_back({"net.up" + std::to_string(l), cfg.channels_at(l + 1), cfg.channels_at(l), 1, l});
        for (std::size_t j = 0; j < cfg.blocks_per_level; ++j)
            block("net.dec" + std::to_string(l) + ".b" + std::to_string(j), cfg.channels_at(l), l);
    }
    out.push_back({"net.head", cfg.base_channels, 3, 3, 0});
    return out;
}

std::size_t count_params(std::span<const LayerSpec> layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += detail::conv_param_count(l.in, l.out, l.kernel);
    return n;
}

std::size_t count_params(const NetConfig& cfg) {
    const auto specs = layer_specs(cfg);
    return count_params(specs);
}

std::size_t count_params(const NetConfig& cfg, const FusionConfig& fusion) {
    return count_params(cfg) + FusionModule(fusion).param_count();
}

std::size_t conv_flops(std::size_t in, std::size_t out, std::size_t kernel, std::size_t h, std::size_t w) {
    return 2 * in * out * kernel * kernel * h * w;
}

std::size_t count_flops(std::span<const LayerSpec> layers, std::size_t h, std::size_t w) {
    std::size_t n = 0;
    for (const auto& l : layers) n += conv_flops(l.in, l.out, l.kernel, h >> l.level, w >> l.level);
    return n;
}

std::size_t count_flops(const NetConfig& cfg, std::size_t h, std::size_t w) {
    const auto specs = layer_specs(cfg);
    return count_flops(specs, h, w);
}

std::size_t fusion_flops(const FusionConfig& f, std::size_t h, std::size_t w) {
    const std::size_t c = f.channels, t = h * w;
    const std::size_t acg_hidden = std::max<std::size_t>(1, c / 4);
    const std::size_t asg_hidden = std::max<std::size_t>(1, c / 2);
    std::size_t n = 0;
    for (std::size_t i = 0; i < f.hgdf_blocks; ++i) {
        n += 3 * conv_flops(c, c, 1, h, w);  // CFE projections
        n += 2 * (2 * t * t * c);              // q k^T and attn v over all heads
        if (f.depth_channels != c) n += conv_flops(f.depth_channels, c, 1, h, w);
        n += 3 * (conv_flops(c, c, 1, h, w) + conv_flops(c, c, 3, h, w));
        n += f.dai_mode == DaiMode::Channel ? 2 * (2 * c * c * t) : 2 * (2 * t * t * c);
        n += conv_flops(c, acg_hidden, 1, 1, 1) + conv_flops(acg_hidden, c, 1, 1, 1);
        n += conv_flops(c, c * f.ffn_expansion, 1, h, w) + conv_flops(c * f.ffn_expansion, c, 1, h, w);
    }
    for (std::size_t j = 0; j < f.asg_layers; ++j) {
        const std::size_t in = j == 0 ? c : asg_hidden;
        const std::size_t out = j + 1 == f.asg_layers ? 1 : asg_hidden;
        n += conv_flops(in, out, 3, h, w);
    }
    if (f.use_pre_zc) n += conv_flops(c, c, 1, h, w);
    if (f.use_post_zc) n += conv_flops(c, c, 1, h, w);
    return n;
}

std::size_t count_flops(const NetConfig& cfg, const FusionConfig& fusion, std::size_t h, std::size_t w) {
    return count_flops(cfg, h, w) + fusion_flops(fusion, h >> cfg.fusion_attach, w >> cfg.fusion_attach);
}

DehazeNet::DehazeNet(NetConfig cfg, std::optional<FusionConfig> fusion) : cfg_(cfg) {
    cfg_.validate();
    if (fusion) {
        if (fusion->channels != cfg_.attach_channels()) {
            throw ConfigError("fusion.channels (" + std::to_string(fusion->channels) +
                              ") must equal the attach-level width (" + std::to_string(cfg_.attach_channels()) + ")");
        }
        fusion_.emplace(*fusion);
    }
}

const FusionModule& DehazeNet::fusion() const {
    if (!fusion_) throw ContractError("network was built without a fusion module");
    return *fusion_;
}

ParamSet DehazeNet::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    ParamSet p;
    for (const auto& l : layer_specs(cfg_)) {
        detail::add_conv(p, l.name, l.in, l.out, l.kernel, rng, cfg_.zero_head && l.name == "net.head");
    }
    return p;
}

ParamSet DehazeNet::init_fusion_params(std::uint64_t seed) const { return fusion().init_params(seed); }

Tensor DehazeNet::res_block(const Tensor& x, const ParamSet& p, const std::string& name) const {
    return add(x, conv(gelu(conv(x, p, name + ".conv1")), p, name + ".conv2"));
}

Tensor DehazeNet::run(const Tensor& hazy, const ParamSet& p, const Tensor& depth, bool stop_at_attach) const {
    if (hazy.rank() != 4 || hazy.dim(1) != 3) {
        throw DimensionError("network input must be B x 3 x H x W, got " + shape_str(hazy.shape()));
    }
    const std::size_t div = std::size_t{1} << (cfg_.levels - 1);
    if (hazy.dim(2) % div || hazy.dim(3) % div) {
        throw ConfigError("input " + shape_str(hazy.shape()) + " not divisible by " + std::to_string(div));
    }
    const bool use_fusion = depth.defined();
    if (use_fusion && !fusion_) throw ContractError("depth features given to a network without fusion");

    Tensor x = conv(hazy, p, "net.stem");
    std::vector<Tensor> skips;
    for (std::size_t l = 0; l < cfg_.levels; ++l) {
        if (l > 0) x = conv(avg_pool2(x), p, "net.down" + std::to_string(l));
        for (std::size_t j = 0; j < cfg_.blocks_per_level; ++j) {
            const std::string name = "net.enc" + std::to_string(l) + ".b" + std::to_string(j);
            const bool host = l == cfg_.fusion_attach && j == 0;
            if (host && use_fusion) {
                const Tensor f_aux = fusion_->forward(x, depth, p);
                x = fusion_->zc_inject(x, f_aux, [&](const Tensor& t) { return res_block(t, p, name); }, p);
            } else {
                x = res_block(x, p, name);
            }
            if (host && stop_at_attach) return x;
        }
        skips.push_back(x);
    }
    for (std::size_t l = cfg_.levels - 1; l-- > 0;) {
        x = add(conv(upsample2(x), p, "net.up" + std::to_string(l)), skips[l]);
        for (std::size_t j = 0; j < cfg_.blocks_per_level; ++j)
            x = res_block(x, p, "net.dec" + std::to_string(l) + ".b" + std::to_string(j));
    }
    Tensor out = conv(x, p, "net.head");
    return cfg_.global_residual ? add(hazy, out) : out;
}

Tensor DehazeNet::forward(const Tensor& hazy, const ParamSet& p, const Tensor& depth) const {
    return run(hazy, p, depth, false);
}

Tensor DehazeNet::attach_features(const Tensor& hazy, const ParamSet& p, const Tensor& depth) const {
    return run(hazy, p, depth, true);
}

}  // namespace hazefuse
