#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hazefuse/checkpoint.hpp"
#include "hazefuse/errors.hpp"
#include "hazefuse/trainer.hpp"
#include "test_support.hpp"

using namespace hazefuse;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "hazefuse_test_trainer";
    fs::create_directories(dir);
    return dir / name;
}

NetConfig tiny_net() {
    NetConfig n;
    n.base_channels = 4;
    n.levels = 2;
    n.blocks_per_level = 1;
    return n;
}

FusionConfig tiny_fusion() {
    FusionConfig f;
    f.channels = 4;
    f.depth_channels = 3;
    f.heads = 2;
    return f;
}

DatasetConfig tiny_data() {
    DatasetConfig d;
    d.scenes = 6;
    d.size = 16;
    d.betas = {0.05, 0.15};
    return d;
}

TrainConfig quick(int stage, std::size_t steps) {
    TrainConfig t;
    t.stage = stage;
    t.total_steps = steps;
    t.cycle_steps = steps;
    t.batch_size = 3;
    t.lr_max = 2e-3;
    return t;
}

bool same_params(const ParamSet& a, const ParamSet& b, std::string_view prefix = "") {
    for (const auto& [name, e] : a) {
        if (!name.starts_with(prefix)) continue;
        if (testing::max_abs_diff(e.tensor.data(), b.at(name).data()) != 0.0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("cosine schedule with warm restarts") {
    TrainConfig c;
    c.cycle_steps = 100;
    CHECK(lr_at(0, c) == c.lr_max);
    CHECK(lr_at(100, c) == 1e-8);
    CHECK(lr_at(101, c) == c.lr_max);
    CHECK(std::abs(lr_at(50, c) - (1e-8 + 0.5 * (4e-4 - 1e-8))) < 1e-12);
    CHECK(lr_at(50, c) == doctest::Approx(2.000049e-4).epsilon(1e-6));

    c.cycle_mult = 2;
    CHECK(lr_at(101 + 200, c) == 1e-8);
    CHECK(lr_at(101 + 201, c) == c.lr_max);
    CHECK(std::abs(lr_at(101 + 100, c) - lr_at(50, c)) < 1e-12);

    double prev = lr_at(0, c);
    for (std::size_t s = 1; s <= 100; ++s) {
        const double lr = lr_at(s, c);
        CHECK(lr < prev);
        CHECK(prev - lr < 1.3e-5);  // no jumps inside a cycle
        prev = lr;
    }

    TrainConfig bad;
    bad.lr_min = 1.0;
    bad.cycle_steps = 0;
    try {
        bad.validate();
        FAIL("expected config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("lr_min") != std::string::npos);
        CHECK(std::string(e.what()).find("cycle_steps") != std::string::npos);
    }
}

TEST_CASE("checkpoint format") {
    Checkpoint empty;
    CHECK(encode_checkpoint(empty).size() == 25);

    ParamSet p = DehazeNet(tiny_net()).init_params(3);
    const Checkpoint c = make_checkpoint(p, 42, 1);
    const auto bytes = encode_checkpoint(c);
    const fs::path path = scratch("a.hzc");
    save_checkpoint(path, c);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.step == 42);
    CHECK(back.stage == 1);
    CHECK(back.tensors.size() == p.size());
    CHECK(encode_checkpoint(back) == bytes);

    SUBCASE("corruption") {
        auto flipped = bytes;
        flipped[bytes.size() - 10] ^= 0x01;
        CHECK_THROWS_AS(decode_checkpoint(flipped), CrcError);

        std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 1);
        CHECK_THROWS_AS(decode_checkpoint(cut), TruncationError);
        std::vector<std::uint8_t> header_only(bytes.begin(), bytes.begin() + 10);
        CHECK_THROWS_AS(decode_checkpoint(header_only), TruncationError);

        auto version = bytes;
        version[4] = 2;
        CHECK_THROWS_AS(decode_checkpoint(version), VersionError);

        auto magic = bytes;
        magic[0] = 'X';
        try {
            decode_checkpoint(magic);
            FAIL("expected format error");
        } catch (const FormatError& e) {
            CHECK(e.offset() == 0);
            CHECK(e.kind() == "format_error");
        }
    }

    SUBCASE("name mismatch is structured") {
        ParamSet other = DehazeNet(tiny_net(), tiny_fusion()).init_params(1);
        other.merge(DehazeNet(tiny_net(), tiny_fusion()).init_fusion_params(1));
        try {
            load_params(c, other);
            FAIL("expected mismatch");
        } catch (const CheckpointMismatchError& e) {
            CHECK(e.unexpected().empty());
            CHECK(!e.missing().empty());
            CHECK(e.missing().front().starts_with("fusion."));
        }
        ParamSet smaller;
        smaller.add("net.stem.w", Tensor::zeros({4, 3, 3, 3}));
        try {
            load_params(c, smaller);
            FAIL("expected mismatch");
        } catch (const CheckpointMismatchError& e) {
            CHECK(e.missing().empty());
            CHECK(e.unexpected().size() == p.size() - 1);
        }
    }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    const Dataset d = build_dataset(tiny_data());
    const DehazeNet net(tiny_net());
    TrainState s;
    s.params = net.init_params(1);
    ParamSet before;
    for (const auto& [n, e] : s.params) before.add(n, e.tensor.clone());

    TrainConfig t = quick(1, 3);
    t.lr_max = 1e-300;  // lr_min < lr_max must hold
    t.lr_min = 0.0;
    const TrainResult r = train(net, s, d, nullptr, t);
    CHECK(same_params(before, r.state.params));
    CHECK(r.state.adam.t == 3);

    TrainState direct = r.state;
    Adam opt(direct.adam);
    opt.step(direct.params, 0.0);
    CHECK(same_params(before, direct.params));
}

TEST_CASE("identity sample has zero loss at step zero") {
    DatasetConfig dc = tiny_data();
    dc.betas = {0.0};
    const Dataset d = build_dataset(dc);
    const DehazeNet net(tiny_net());
    TrainState s;
    s.params = net.init_params(1);
    s.params.at("net.head.w") = Tensor::zeros(s.params.at("net.head.w").shape());
    std::vector<LossRecord> log;
    train(net, s, d, nullptr, quick(1, 1), [&](const LossRecord& r) { log.push_back(r); });
    REQUIRE(log.size() == 1);
    CHECK(log[0].loss == 0.0);
    CHECK(log[0].lr == doctest::Approx(2e-3));
}

TEST_CASE("two-stage training contracts") {
    const Dataset train_set = build_dataset(tiny_data());
    DatasetConfig vc = tiny_data();
    vc.scenes = 2;
    const Dataset val = build_dataset(vc, Split::Val);
    const NetConfig nc = tiny_net();
    const FusionConfig fc = tiny_fusion();

    const StageResult s1 = train_stage1(train_set, nc, quick(1, 4));
    CHECK(s1.run.log.size() == 4);
    CHECK(s1.checkpoint.step == 4);

    SUBCASE("deterministic") {
        const StageResult again = train_stage1(train_set, nc, quick(1, 4));
        CHECK(encode_checkpoint(again.checkpoint) == encode_checkpoint(s1.checkpoint));
    }

    const auto depth_train = scene_features(train_set, {}, fc, nc.attach_pool());
    const auto depth_val = scene_features(val, {}, fc, nc.attach_pool());
    const DehazeNet base(nc), fused(nc, fc);

    SUBCASE("stage-2 step 0 reproduces stage-1 metrics") {
        const ParamSet& p1 = s1.run.state.params;
        const MetricReport m1 = evaluate(base, p1, val, nullptr);
        const TrainState init = stage2_init(s1.checkpoint, fused, 7, false);
        const MetricReport m2 = evaluate(fused, init.params, val, &depth_val);
        CHECK(m1.psnr == m2.psnr);
        CHECK(m1.psnr_y == m2.psnr_y);
        CHECK(m1.ssim == m2.ssim);
        for (std::size_t i = 0; i < m1.images.size(); ++i) CHECK(m1.images[i].psnr == m2.images[i].psnr);
    }

    SUBCASE("frozen backbone never moves") {
        TrainConfig t = quick(2, 3);
        t.freeze_backbone_in_stage2 = true;
        const StageResult s2 = train_stage2(s1.checkpoint, train_set, &depth_train, nc, fc, t);
        CHECK(same_params(s1.run.state.params, s2.run.state.params, "net."));
        CHECK_FALSE(s2.run.state.params.at("fusion.zc.post.w").data()[0] == 0.0);
        CHECK(s2.checkpoint.stage == 2);
    }

    SUBCASE("resume is exact") {
        TrainConfig t = quick(2, 4);
        const StageResult straight = train_stage2(s1.checkpoint, train_set, &depth_train, nc, fc, t);

        TrainConfig half = t;
        half.total_steps = 2;
        StageResult first = train_stage2(s1.checkpoint, train_set, &depth_train, nc, fc, half);
        save_checkpoint(scratch("s2.hzc"), first.checkpoint);
        save_checkpoint(scratch("s2.opt"), make_optimizer_checkpoint(first.run.state));

        TrainState resumed = stage2_init(s1.checkpoint, fused, t.seed, false);
        const Checkpoint c = load_checkpoint(scratch("s2.hzc"));
        load_params(c, resumed.params);
        resumed.step = c.step;
        restore_optimizer(load_checkpoint(scratch("s2.opt")), resumed);
        const TrainResult rest = train(fused, resumed, train_set, &depth_train, t);
        CHECK(rest.log.size() == 2);
        CHECK(rest.log.front().step == 2);
        CHECK(encode_checkpoint(make_checkpoint(rest.state.params, 4, 2)) == encode_checkpoint(straight.checkpoint));
    }

    SUBCASE("baseline continuation") {
        const StageResult cont = train_stage2(s1.checkpoint, train_set, nullptr, nc, std::nullopt, quick(2, 2));
        CHECK(cont.checkpoint.tensors.size() == s1.checkpoint.tensors.size());
    }

    SUBCASE("depth must match the network") {
        CHECK_THROWS_AS(train_stage2(s1.checkpoint, train_set, nullptr, nc, fc, quick(2, 1)), ContractError);
        CHECK_THROWS_AS(evaluate(base, s1.run.state.params, val, &depth_val), ContractError);
    }
}

TEST_CASE("non-finite loss aborts with the batch ids") {
    const Dataset d = build_dataset(tiny_data());
    const DehazeNet net(tiny_net());
    TrainState s;
    s.params = net.init_params(1);
    for (double& v : s.params.at("net.head.b").mutable_data()) v = 1e308;
    for (double& v : s.params.at("net.head.w").mutable_data()) v = 1e308;
    try {
        train(net, s, d, nullptr, quick(1, 1));
        FAIL("expected training error");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
        CHECK(std::string(e.what()).find("scene-") != std::string::npos);
    }
}

TEST_CASE("gradient accumulation and loss log") {
    const Dataset d = build_dataset(tiny_data());
    TrainConfig t = quick(1, 2);
    t.accum_steps = 2;
    t.loss = LossKind::L2;
    const StageResult r = train_stage1(d, tiny_net(), t);
    CHECK(r.run.log.size() == 2);
    CHECK(sample_batch(t, d.size(), 0, 0) != sample_batch(t, d.size(), 0, 1));

    const fs::path csv = scratch("loss.csv");
    write_loss_csv(csv, r.run.log);
    write_loss_csv(csv, r.run.log, true);
    const auto bytes = read_file(csv);
    const std::string text(bytes.begin(), bytes.end());
    CHECK(text.starts_with("step,stage,lr,loss\n0,1,"));
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}
