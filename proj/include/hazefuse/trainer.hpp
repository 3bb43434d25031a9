#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hazefuse/checkpoint.hpp"
#include "hazefuse/dataset.hpp"
#include "hazefuse/metrics.hpp"
#include "hazefuse/net.hpp"

namespace hazefuse {

enum class LossKind { L1, L2 };

struct TrainConfig {
    int stage = 1;
    double lr_max = 4e-4;
    double lr_min = 1e-8;
    std::size_t cycle_steps = 100;
    std::size_t cycle_mult = 1;
    std::size_t total_steps = 200;
    std::size_t batch_size = 8;
    std::size_t accum_steps = 1;  // micro-batches summed per optimizer step
    std::uint64_t seed = 1;
    bool freeze_backbone_in_stage2 = false;
    LossKind loss = LossKind::L1;

    void validate() const;
};

// Cosine annealing with warm restarts.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct AdamState {
    std::map<std::string, std::vector<double>, std::less<>> m, v;
    std::uint64_t t = 0;
};

// Adam with bias correction. Entries that are not trainable are skipped.
class Adam {
public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    explicit Adam(AdamState state = {}) : state_(std::move(state)) {}
    void step(ParamSet& params, double lr);
    const AdamState& state() const { return state_; }

private:
    AdamState state_;
};

struct TrainState {
    ParamSet params;
    AdamState adam;
    std::size_t step = 0;  // optimizer steps taken in the current stage
    int stage = 1;
};

struct LossRecord {
    std::size_t step = 0;
    int stage = 1;
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    TrainState state;
    std::vector<LossRecord> log;
};

// Samples drawn for micro-batch `micro` of optimizer step `step`.
std::vector<std::size_t> sample_batch(const TrainConfig& cfg, std::size_t dataset_size, std::size_t step,
                                      std::size_t micro);

using StepCallback = std::function<void(const LossRecord&)>;

// Runs optimizer steps from state.step up to cfg.total_steps. Parameters are
// rounded to float32 after each step so that checkpoints hold the exact
// model. `depth` is required iff the network is fused.
TrainResult train(const DehazeNet& net, TrainState state, const Dataset& data, const std::vector<Tensor>* depth,
                  const TrainConfig& cfg, const StepCallback& on_step = {});

// Forward without a tape over every sample, outputs scored against the clear scenes.
MetricReport evaluate(const DehazeNet& net, const ParamSet& params, const Dataset& data,
                      const std::vector<Tensor>* depth, std::size_t batch = 16);

struct StageResult {
    Checkpoint checkpoint;
    TrainResult run;
};

StageResult train_stage1(const Dataset& data, const NetConfig& net, const TrainConfig& cfg,
                         const StepCallback& on_step = {});

// Backbone from a stage-1 checkpoint plus fresh fusion parameters whose ZC
// layers are zero. Without a fusion config this continues the baseline.
TrainState stage2_init(const Checkpoint& stage1, const DehazeNet& net, std::uint64_t seed,
                       bool freeze_backbone);

StageResult train_stage2(const Checkpoint& stage1, const Dataset& data, const std::vector<Tensor>* depth,
                         const NetConfig& net, const std::optional<FusionConfig>& fusion, const TrainConfig& cfg,
                         const StepCallback& on_step = {});

// Optimizer moments beside a checkpoint, stored at float64 so resume is exact.
Checkpoint make_optimizer_checkpoint(const TrainState& state);
void restore_optimizer(const Checkpoint& opt, TrainState& state);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log, bool append = false);

}  // namespace hazefuse
