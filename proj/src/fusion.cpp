#include "hazefuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hazefuse/errors.hpp"
#include "hazefuse/ops.hpp"
#include "layers.hpp"

namespace hazefuse {

using detail::add_conv;
using detail::conv;
using detail::conv_param_count;

namespace {

std::size_t acg_hidden(std::size_t c) { return std::max<std::size_t>(1, c / 4); }
std::size_t asg_hidden(std::size_t c) { return std::max<std::size_t>(1, c / 2); }

// (in, out) widths of each ASG conv.
std::vector<std::pair<std::size_t, std::size_t>> asg_widths(const FusionConfig& cfg) {
    std::vector<std::pair<std::size_t, std::size_t>> w;
    const std::size_t hidden = asg_hidden(cfg.channels);
    for (std::size_t j = 0; j < cfg.asg_layers; ++j) {
        const std::size_t in = j == 0 ? cfg.channels : hidden;
        const std::size_t out = j + 1 == cfg.asg_layers ? 1 : hidden;
        w.emplace_back(in, out);
    }
    return w;
}

}  // namespace

void FusionConfig::validate() const {
    std::vector<std::string> errs;
    if (channels == 0) errs.push_back("fusion.channels must be >= 1");
    if (depth_channels == 0) errs.push_back("fusion.depth_channels must be >= 1");
    if (heads == 0 || (channels % heads) != 0) errs.push_back("fusion.channels must be divisible by fusion.heads");
    if (hgdf_blocks < 1) errs.push_back("fusion.hgdf_blocks must be >= 1");
    if (asg_layers < 1) errs.push_back("fusion.asg_layers must be >= 1");
    if (ffn_expansion < 1) errs.push_back("fusion.ffn_expansion must be >= 1");
    if (errs.empty()) return;
    std::string msg;
    for (const auto& e : errs) msg += (msg.empty() ? "" : "; ") + e;
    throw ConfigError(msg);
}

FusionModule::FusionModule(FusionConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
}

std::string FusionModule::block_prefix(std::size_t block) const {
    return prefix_ + ".hgdf" + std::to_string(block);
}

ParamSet FusionModule::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    ParamSet p;
    const std::size_t c = cfg_.channels;
    for (std::size_t i = 0; i < cfg_.hgdf_blocks; ++i) {
        const std::string b = block_prefix(i);
        for (const char* n : {"q", "k", "v"}) add_conv(p, b + ".cfe." + n, c, c, 1, rng);
        if (cfg_.depth_channels != c) add_conv(p, b + ".dai.adapter", cfg_.depth_channels, c, 1, rng);
        for (const char* n : {"q", "k", "v"}) {
            add_conv(p, b + ".dai." + n + "1", c, c, 1, rng);
            add_conv(p, b + ".dai." + n + "2", c, c, 3, rng);
        }
        add_conv(p, b + ".acg.fc1", c, acg_hidden(c), 1, rng);
        add_conv(p, b + ".acg.fc2", acg_hidden(c), c, 1, rng);
        add_conv(p, b + ".ffn.w1", c, c * cfg_.ffn_expansion, 1, rng);
        add_conv(p, b + ".ffn.w2", c * cfg_.ffn_expansion, c, 1, rng);
    }
    const auto widths = asg_widths(cfg_);
    for (std::size_t j = 0; j < widths.size(); ++j) {
        add_conv(p, prefix_ + ".asg.conv" + std::to_string(j), widths[j].first, widths[j].second, 3, rng);
    }
    if (cfg_.use_pre_zc) add_conv(p, prefix_ + ".zc.pre", c, c, 1, rng, true);
    if (cfg_.use_post_zc) add_conv(p, prefix_ + ".zc.post", c, c, 1, rng, true);
    return p;
}

std::size_t FusionModule::param_count() const {
    const std::size_t c = cfg_.channels;
    std::size_t n = 0;
    for (std::size_t i = 0; i < cfg_.hgdf_blocks; ++i) {
        n += 3 * conv_param_count(c, c, 1);
        if (cfg_.depth_channels != c) n += conv_param_count(cfg_.depth_channels, c, 1);
        n += 3 * (conv_param_count(c, c, 1) + conv_param_count(c, c, 3));
        n += conv_param_count(c, acg_hidden(c), 1) + conv_param_count(acg_hidden(c), c, 1);
        n += conv_param_count(c, c * cfg_.ffn_expansion, 1) + conv_param_count(c * cfg_.ffn_expansion, c, 1);
    }
    for (const auto& [in, out] : asg_widths(cfg_)) n += conv_param_count(in, out, 3);
    if (cfg_.use_pre_zc) n += conv_param_count(c, c, 1);
    if (cfg_.use_post_zc) n += conv_param_count(c, c, 1);
    return n;
}

Tensor FusionModule::cfe(const Tensor& f_rgb, const ParamSet& p, std::size_t block) const {
    if (f_rgb.rank() != 4 || f_rgb.dim(1) != cfg_.channels) {
        throw DimensionError("cfe expects " + std::to_string(cfg_.channels) + " channels, got " +
                             shape_str(f_rgb.shape()));
    }
    return mhsa(f_rgb, cfg_.heads, p, block_prefix(block) + ".cfe");
}

Tensor FusionModule::dai(const Tensor& f_a, const Tensor& f_d, const ParamSet& p, std::size_t block) const {
    if (f_a.rank() != 4 || f_d.rank() != 4 || f_a.dim(0) != f_d.dim(0) || f_a.dim(2) != f_d.dim(2) ||
        f_a.dim(3) != f_d.dim(3)) {
        throw DimensionError("dai spatial mismatch: rgb " + shape_str(f_a.shape()) + " vs depth " +
                             shape_str(f_d.shape()));
    }
    const std::string b = block_prefix(block) + ".dai";
    const Tensor depth = p.contains(b + ".adapter.w") ? conv(f_d, p, b + ".adapter") : f_d;
    const std::size_t batch = f_a.dim(0), c = f_a.dim(1), tokens = f_a.dim(2) * f_a.dim(3);

    auto embed = [&](const Tensor& x, const char* n) {
        Tensor y = conv(conv(x, p, b + "." + n + "1"), p, b + "." + n + "2");
        return reshape(y, {batch, c, tokens});
    };
    Tensor q = embed(f_a, "q");
    Tensor k = embed(depth, "k");
    Tensor v = embed(f_a, "v");

    Tensor out;
    if (cfg_.dai_mode == DaiMode::Channel) {
        Tensor logits = affine(bmm(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(tokens)));
        out = bmm(softmax(logits, 2), v);  // [B, C, C] x [B, C, T]
    } else {
        Tensor logits = affine(bmm(q, k, true, false), 1.0 / std::sqrt(static_cast<double>(c)));
        out = bmm(v, softmax(logits, 2), false, true);  // [B, C, T] x [B, T, T]^T
    }
    return reshape(out, f_a.shape());
}

Tensor FusionModule::acg_gate(const Tensor& f_x, const ParamSet& p, std::size_t block) const {
    const std::string b = block_prefix(block) + ".acg";
    return sigmoid(conv(gelu(conv(gap(f_x), p, b + ".fc1")), p, b + ".fc2"));
}

Tensor FusionModule::acg_ffn(const Tensor& f_a, const Tensor& f_x, const ParamSet& p, std::size_t block) const {
    if (f_a.shape() != f_x.shape()) {
        throw DimensionError("acg_ffn shape mismatch: " + shape_str(f_a.shape()) + " vs " + shape_str(f_x.shape()));
    }
    const std::string b = block_prefix(block) + ".ffn";
    Tensor x_hat = add(f_a, mul(acg_gate(f_x, p, block), f_x));
    return add(conv(gelu(conv(x_hat, p, b + ".w1")), p, b + ".w2"), x_hat);
}

Tensor FusionModule::asg_mask(const Tensor& f_hat, const ParamSet& p) const {
    Tensor h = f_hat;
    for (std::size_t j = 0; j < cfg_.asg_layers; ++j) {
        if (j > 0) h = gelu(h);
        h = conv(h, p, prefix_ + ".asg.conv" + std::to_string(j));
    }
    return sigmoid(h);
}

Tensor FusionModule::asg(const Tensor& f_hat, const Tensor& f_rgb, const ParamSet& p) const {
    if (f_hat.shape() != f_rgb.shape()) {
        throw DimensionError("asg shape mismatch: " + shape_str(f_hat.shape()) + " vs " + shape_str(f_rgb.shape()));
    }
    Tensor m = asg_mask(f_hat, p);
    return add(mul(f_hat, m), mul(f_rgb, affine(m, -1.0, 1.0)));
}

Tensor FusionModule::forward(const Tensor& f_rgb, const Tensor& f_d, const ParamSet& p) const {
    Tensor f = f_rgb;
    for (std::size_t i = 0; i < cfg_.hgdf_blocks; ++i) {
        Tensor f_a = cfe(f, p, i);
        Tensor f_x = dai(f_a, f_d, p, i);
        f = acg_ffn(f_a, f_x, p, i);
    }
    return asg(f, f_rgb, p);
}

Tensor FusionModule::zc_inject(const Tensor& f_rgb, const Tensor& f_aux, const HostBlock& phi,
                               const ParamSet& p) const {
    if (f_rgb.shape() != f_aux.shape()) {
        throw DimensionError("zc_inject shape mismatch: " + shape_str(f_rgb.shape()) + " vs " +
                             shape_str(f_aux.shape()));
    }
    Tensor pre = cfg_.use_pre_zc ? conv(f_aux, p, prefix_ + ".zc.pre") : f_aux;
    Tensor post = cfg_.use_post_zc ? conv(f_aux, p, prefix_ + ".zc.post") : f_aux;
    return add(phi(add(f_rgb, pre)), post);
}

}  // namespace hazefuse
