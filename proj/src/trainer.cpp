#include "hazefuse/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "hazefuse/errors.hpp"
#include "hazefuse/ops.hpp"
#include "hazefuse/rng.hpp"

namespace hazefuse {

namespace {

void round_params(ParamSet& params) {
    for (auto& [name, e] : params) {
        if (!e.trainable) continue;
        for (double& v : e.tensor.mutable_data()) v = static_cast<float>(v);
    }
}

std::string ids_of(const Dataset& d, const std::vector<std::size_t>& samples) {
    std::string s;
    for (std::size_t i : samples) s += (s.empty() ? "" : " ") + d.sample_id(i);
    return s;
}

}  // namespace

void TrainConfig::validate() const {
    std::vector<std::string> errs;
    if (stage != 1 && stage != 2) errs.push_back("train.stage must be 1 or 2");
    if (!(lr_min >= 0.0)) errs.push_back("train.lr_min must be >= 0");
    if (!(lr_min < lr_max)) errs.push_back("train.lr_min must be < train.lr_max");
    if (cycle_steps < 1) errs.push_back("train.cycle_steps must be >= 1");
    if (cycle_mult < 1) errs.push_back("train.cycle_mult must be >= 1");
    if (batch_size < 1) errs.push_back("train.batch_size must be >= 1");
    if (accum_steps < 1) errs.push_back("train.accum_steps must be >= 1");
    if (errs.empty()) return;
    std::string msg;
    for (const auto& e : errs) msg += (msg.empty() ? "" : "; ") + e;
    throw ConfigError(msg);
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
    // A cycle of length L covers in-cycle positions 0..L, so its last step
    // sits exactly at lr_min and the restart follows on the next step.
    std::size_t s = step, len = cfg.cycle_steps;
    while (s > len) {
        s -= len + 1;
        len *= cfg.cycle_mult;
    }
    if (s == 0) return cfg.lr_max;
    if (s == len) return cfg.lr_min;
    const double phase = std::numbers::pi * static_cast<double>(s) / static_cast<double>(len);
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
}

void Adam::step(ParamSet& params, double lr) {
    ++state_.t;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state_.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state_.t));
    for (auto& [name, e] : params) {
        if (!e.trainable) continue;
        auto values = e.tensor.mutable_data();
        auto& m = state_.m[name];
        auto& v = state_.v[name];
        m.resize(values.size(), 0.0);
        v.resize(values.size(), 0.0);
        if (!e.tensor.has_grad()) continue;
        const auto& g = e.tensor.impl().grad;
        for (std::size_t i = 0; i < values.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
        }
    }
}

std::vector<std::size_t> sample_batch(const TrainConfig& cfg, std::size_t dataset_size, std::size_t step,
                                      std::size_t micro) {
    if (dataset_size == 0) throw ConfigError("cannot sample from an empty dataset");
    Rng rng(derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(cfg.stage)),
                        static_cast<std::uint64_t>(step * cfg.accum_steps + micro)));
    std::vector<std::size_t> idx(cfg.batch_size);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(dataset_size));
    return idx;
}

TrainResult train(const DehazeNet& net, TrainState state, const Dataset& data, const std::vector<Tensor>* depth,
                  const TrainConfig& cfg, const StepCallback& on_step) {
    cfg.validate();
    if (net.fused() != (depth != nullptr)) {
        throw ContractError(net.fused() ? "fused training needs depth features" : "baseline training takes no depth");
    }
    TrainResult result;
    Adam opt(std::move(state.adam));
    for (std::size_t step = state.step; step < cfg.total_steps; ++step) {
        const double lr = lr_at(step, cfg);
        state.params.zero_grad();
        double loss_sum = 0.0;
        for (std::size_t micro = 0; micro < cfg.accum_steps; ++micro) {
            const auto samples = sample_batch(cfg, data.size(), step, micro);
            const Tensor x = batch_hazy(data, samples);
            const Tensor y = batch_clear(data, samples);
            const Tensor fd = depth ? batch_features(data, *depth, samples) : Tensor();
            try {
                Tape tape;
                TapeScope scope(tape);
                const Tensor out = net.forward(x, state.params, fd);
                Tensor loss = cfg.loss == LossKind::L1 ? l1_loss(out, y) : mse_loss(out, y);
                if (cfg.accum_steps > 1) loss = affine(loss, 1.0 / static_cast<double>(cfg.accum_steps));
                if (!std::isfinite(loss.item())) throw NumericError("loss is not finite");
                tape.backward(loss);
                loss_sum += loss.item();
            } catch (const NumericError& e) {
                throw TrainingError("non-finite value at stage " + std::to_string(cfg.stage) + " step " +
                                    std::to_string(step) + " micro-batch " + std::to_string(micro) + " [" +
                                    ids_of(data, samples) + "]: " + e.what());
            }
        }
        opt.step(state.params, lr);
        round_params(state.params);
        const LossRecord rec{step, cfg.stage, lr, loss_sum};
        result.log.push_back(rec);
        if (on_step) on_step(rec);
    }
    state.step = std::max(state.step, cfg.total_steps);
    state.stage = cfg.stage;
    state.adam = opt.state();
    result.state = std::move(state);
    return result;
}

MetricReport evaluate(const DehazeNet& net, const ParamSet& params, const Dataset& data,
                      const std::vector<Tensor>* depth, std::size_t batch) {
    if (net.fused() != (depth != nullptr)) {
        throw ContractError(net.fused() ? "fused evaluation needs depth features" : "baseline evaluation takes no depth");
    }
    std::vector<ImageMetrics> rows;
    rows.reserve(data.size());
    for (std::size_t start = 0; start < data.size(); start += batch) {
        std::vector<std::size_t> samples;
        for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) samples.push_back(i);
        const Tensor fd = depth ? batch_features(data, *depth, samples) : Tensor();
        const Tensor out = net.forward(batch_hazy(data, samples), params, fd);
        const std::size_t per = out.numel() / samples.size();
        const Shape img = data.hazy.front().shape();
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const Tensor pred(img, std::vector<double>(out.data().begin() + k * per, out.data().begin() + (k + 1) * per));
            rows.push_back(image_metrics(data.sample_id(samples[k]), pred, data.scenes[data.scene_of(samples[k])].clear));
        }
    }
    return summarize(std::move(rows));
}

StageResult train_stage1(const Dataset& data, const NetConfig& net_cfg, const TrainConfig& cfg,
                         const StepCallback& on_step) {
    if (cfg.stage != 1) throw ConfigError("train_stage1 needs train.stage = 1");
    const DehazeNet net(net_cfg);
    TrainState state;
    state.params = net.init_params(derive_seed(cfg.seed, 1));
    state.stage = 1;
    StageResult r;
    r.run = train(net, std::move(state), data, nullptr, cfg, on_step);
    r.checkpoint = make_checkpoint(r.run.state.params, r.run.state.step, 1);
    return r;
}

TrainState stage2_init(const Checkpoint& stage1, const DehazeNet& net, std::uint64_t seed, bool freeze_backbone) {
    TrainState state;
    state.stage = 2;
    state.params = net.init_params(0);
    load_params(stage1, state.params);
    if (net.fused()) state.params.merge(net.init_fusion_params(derive_seed(seed, 2)));
    if (freeze_backbone) state.params.set_trainable("net.", false);
    return state;
}

StageResult train_stage2(const Checkpoint& stage1, const Dataset& data, const std::vector<Tensor>* depth,
                         const NetConfig& net_cfg, const std::optional<FusionConfig>& fusion, const TrainConfig& cfg,
                         const StepCallback& on_step) {
    if (cfg.stage != 2) throw ConfigError("train_stage2 needs train.stage = 2");
    const DehazeNet net(net_cfg, fusion);
    StageResult r;
    r.run = train(net, stage2_init(stage1, net, cfg.seed, cfg.freeze_backbone_in_stage2), data, depth, cfg, on_step);
    r.checkpoint = make_checkpoint(r.run.state.params, r.run.state.step, 2);
    return r;
}

Checkpoint make_optimizer_checkpoint(const TrainState& state) {
    Checkpoint c;
    c.dtype = Dtype::F64;
    c.step = state.step;
    c.stage = static_cast<std::uint8_t>(state.stage);
    for (const auto& [name, m] : state.adam.m) c.tensors.emplace("m/" + name, Tensor({m.size()}, m));
    for (const auto& [name, v] : state.adam.v) c.tensors.emplace("v/" + name, Tensor({v.size()}, v));
    c.tensors.emplace("t", Tensor::scalar(static_cast<double>(state.adam.t)));
    return c;
}

void restore_optimizer(const Checkpoint& opt, TrainState& state) {
    if (opt.step != state.step || opt.stage != state.stage) {
        throw ConfigError("optimizer state (stage " + std::to_string(opt.stage) + ", step " + std::to_string(opt.step) +
                          ") does not match checkpoint (stage " + std::to_string(state.stage) + ", step " +
                          std::to_string(state.step) + ")");
    }
    AdamState a;
    for (const auto& [name, t] : opt.tensors) {
        if (name == "t") {
            a.t = static_cast<std::uint64_t>(t.item());
            continue;
        }
        const std::string key = name.substr(2);
        if (!state.params.contains(key)) throw CheckpointMismatchError({}, {name});
        auto& dst = name.starts_with("m/") ? a.m[key] : a.v[key];
        dst.assign(t.data().begin(), t.data().end());
    }
    state.adam = std::move(a);
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log, bool append) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const bool header = !append || !std::filesystem::exists(path);
    std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    if (header) f << "step,stage,lr,loss\n";
    char line[128];
    for (const auto& r : log) {
        std::snprintf(line, sizeof line, "%zu,%d,%.17g,%.17g\n", r.step, r.stage, r.lr, r.loss);
        f << line;
    }
}

}  // namespace hazefuse
