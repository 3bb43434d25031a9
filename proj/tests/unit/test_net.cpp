#include "doctest.h"
#include "hazefuse/depth.hpp"
#include "hazefuse/errors.hpp"
#include "hazefuse/net.hpp"
#include "hazefuse/ops.hpp"
#include "test_support.hpp"

using namespace hazefuse;
using testing::max_abs_diff;
using testing::random_tensor;

namespace {

NetConfig tiny_net() {
    NetConfig n;
    n.base_channels = 4;
    n.levels = 2;
    n.blocks_per_level = 1;
    return n;
}

FusionConfig fusion_for(const NetConfig& n) {
    FusionConfig f;
    f.channels = n.attach_channels();
    f.depth_channels = 3;
    f.heads = 2;
    return f;
}

}  // namespace

TEST_CASE("default parameter count matches a hand tally") {
    // (out * in * k * k + out) per conv; widths 16, 32, 64.
    const std::size_t stem = 16 * 3 * 9 + 16;
    const std::size_t block16 = 2 * (16 * 16 * 9 + 16);
    const std::size_t block32 = 2 * (32 * 32 * 9 + 32);
    const std::size_t block64 = 2 * (64 * 64 * 9 + 64);
    const std::size_t down = (32 * 16 + 32) + (64 * 32 + 64);
    const std::size_t up = (32 * 64 + 32) + (16 * 32 + 16);
    const std::size_t head = 3 * 16 * 9 + 3;
    const std::size_t expected = stem + 2 * block16 + 2 * block32 + 2 * block64 + down + up + 2 * block32 +
                                 2 * block16 + head;
    CHECK(expected == 246403);
    CHECK(count_params(NetConfig{}) == expected);

    const DehazeNet net(NetConfig{});
    CHECK(net.init_params(1).numel() == expected);
}

TEST_CASE("counters") {
    CHECK(conv_flops(5, 7, 1, 6, 4) == 2 * 5 * 7 * 6 * 4);
    const LayerSpec one{"x", 5, 7, 1, 0};
    CHECK(count_flops(std::span<const LayerSpec>(&one, 1), 6, 4) == 2 * 5 * 7 * 6 * 4);
    CHECK(count_params(std::span<const LayerSpec>()) == 0);
    CHECK(count_flops(std::span<const LayerSpec>(), 32, 32) == 0);

    const NetConfig n;
    FusionConfig f;
    f.channels = n.attach_channels();
    const DehazeNet fused(n, f);
    const std::size_t delta = count_params(n, f) - count_params(n);
    CHECK(delta > 0);
    CHECK(delta == fused.init_fusion_params(1).numel());
    CHECK(count_flops(n, f, 32, 32) > count_flops(n, 32, 32));
    CHECK(count_flops(n, 32, 32) == count_flops(n, 32, 32));
    // Each level quarters the per-conv spatial cost.
    CHECK(count_flops(n, 64, 64) == 4 * count_flops(n, 32, 32));
}

TEST_CASE("config validation") {
    NetConfig bad;
    bad.levels = 0;
    bad.blocks_per_level = 0;
    try {
        bad.validate();
        FAIL("expected config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("levels") != std::string::npos);
        CHECK(std::string(e.what()).find("blocks_per_level") != std::string::npos);
    }
    NetConfig attach;
    attach.fusion_attach = 3;
    CHECK_THROWS_AS(attach.validate(), ConfigError);
    FusionConfig wrong;
    wrong.channels = 8;
    CHECK_THROWS_AS(DehazeNet(NetConfig{}, wrong), ConfigError);
}

TEST_CASE("forward contracts") {
    const NetConfig n = tiny_net();
    const DehazeNet net(n);
    ParamSet p = net.init_params(2);
    const Tensor x = random_tensor({2, 3, 8, 12}, 1, 0, 1);
    CHECK(net.forward(x, p).shape() == x.shape());
    CHECK_THROWS_AS(net.forward(random_tensor({1, 3, 8, 7}, 2), p), ConfigError);
    CHECK_THROWS_AS(net.forward(random_tensor({1, 4, 8, 8}, 2), p), DimensionError);
    CHECK_THROWS_AS(net.forward(x, p, Tensor::zeros({2, 3, 8, 12})), ContractError);

    p.at("net.head.w") = Tensor::zeros(p.at("net.head.w").shape());
    CHECK(max_abs_diff(net.forward(x, p).data(), x.data()) == 0.0);

    NetConfig identity = n;
    identity.zero_head = true;
    const DehazeNet id_net(identity);
    CHECK(max_abs_diff(id_net.forward(x, id_net.init_params(9)).data(), x.data()) == 0.0);
}

TEST_CASE("fused network is bit-identical to the baseline at initialization") {
    for (std::size_t attach : {0u, 1u}) {
        NetConfig n = tiny_net();
        n.fusion_attach = attach;
        const DehazeNet base(n);
        const DehazeNet fused(n, fusion_for(n));
        ParamSet p = base.init_params(3);
        ParamSet pf = p;
        pf.merge(fused.init_fusion_params(4));
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const Scene s = generate_scene(seed, 16, 16);
            const Tensor x = random_tensor({1, 3, 16, 16}, seed + 10, 0, 1);
            const Tensor fd = oracle_features(s, fusion_for(n), n.attach_pool()).features;
            CHECK(max_abs_diff(fused.forward(x, pf, fd).data(), base.forward(x, p).data()) == 0.0);
            CHECK(max_abs_diff(fused.attach_features(x, pf, fd).data(), base.attach_features(x, p).data()) == 0.0);
        }
    }
}

TEST_CASE("attach features have the attach-level shape") {
    NetConfig n = tiny_net();
    n.fusion_attach = 1;
    const DehazeNet net(n);
    const ParamSet p = net.init_params(1);
    CHECK(net.attach_features(random_tensor({1, 3, 8, 8}, 1), p).shape() == Shape{1, 8, 4, 4});
}

TEST_CASE("gradients through the whole fused network") {
    const NetConfig n = tiny_net();
    const DehazeNet net(n, fusion_for(n));
    ParamSet p = net.init_params(5);
    p.merge(net.init_fusion_params(6));
    std::uint64_t seed = 100;
    for (auto& [name, e] : p) {
        const Tensor r = random_tensor(e.tensor.shape(), seed++, -0.4, 0.4);
        std::copy(r.data().begin(), r.data().end(), e.tensor.mutable_data().begin());
    }
    const Tensor x = random_tensor({1, 3, 8, 8}, 1, 0, 1);
    const Tensor y = random_tensor({1, 3, 8, 8}, 2, 0, 1);
    const Tensor fd = random_tensor({1, 3, 8, 8}, 3);
    auto loss = [&] { return mse_loss(net.forward(x, p, fd), y); };
    std::vector<Tensor> leaves{x, fd};
    for (auto& [name, e] : p) leaves.push_back(e.tensor);
    const auto r = testing::grad_check(loss, leaves, 1e-5, 4);
    CHECK(r.max_rel_error < 1e-4);
}
