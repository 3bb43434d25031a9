#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hazefuse/dataset.hpp"
#include "hazefuse/fusion.hpp"
#include "hazefuse/net.hpp"
#include "hazefuse/trainer.hpp"

// Declarative run configuration: one `key = value` pair per line, `#`
// starts a comment. The first key must be `schema = hazefuse.run/1`. Keys
// and defaults are documented in docs/config.md and printed by
// `hazefuse config`.

namespace hazefuse {

inline constexpr const char* kRunSchema = "hazefuse.run/1";

struct RunConfig {
    DatasetConfig data;
    std::size_t val_scenes = 32;

    NetConfig net;
    bool fusion_enabled = true;  // stage 2 trains the fused net, else continues the baseline
    FusionConfig fusion;         // channels always follow the attach level

    TrainConfig train;
    std::size_t stage1_steps = 800;
    std::size_t stage2_steps = 300;

    DepthProviderConfig depth;

    std::vector<double> kl_thresholds;
    std::size_t heatmap_bins = 20;

    std::size_t threads = 0;  // 0 = runtime default
    std::string out = "out";

    // Every violated constraint, empty when valid.
    std::vector<std::string> problems() const;
    // Throws ConfigError listing every violated constraint.
    void validate() const;

    // Per-stage trainer settings; cycle_steps = 0 means one cycle that
    // reaches lr_min on the final step.
    TrainConfig stage_config(int stage) const;
    std::optional<FusionConfig> stage2_fusion() const;
};

RunConfig default_run_config();

// Applies `key = value` text on top of `base`. Unknown keys, bad values and
// a missing or wrong schema are all collected into one ConfigError.
RunConfig parse_run_config(const std::string& text, RunConfig base = default_run_config());
RunConfig load_run_config(const std::filesystem::path& path);

// key=value overrides, applied in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

// Defaults, then the file (if any), then the overrides, then validation.
// Syntax and constraint problems from all three are reported together.
RunConfig resolve_run_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& assignments);

// Canonical text of every key except `out`, in a fixed order with
// round-trip exact numbers. parse_run_config(echo(c)) reproduces c up to
// the output location.
std::string echo(const RunConfig& cfg);

// crc32 of the echo as 8 lowercase hex digits.
std::string run_id(const RunConfig& cfg);

}  // namespace hazefuse
