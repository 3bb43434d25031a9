#include "hazefuse/run_config.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "hazefuse/analysis.hpp"
#include "hazefuse/errors.hpp"
#include "hazefuse/tensor_io.hpp"

namespace hazefuse {

namespace {

struct BadValue {
    std::string why;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_unsigned(const std::string& v) {
    T out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) throw BadValue{"expected a non-negative integer"};
    return out;
}

int parse_int(const std::string& v) {
    int out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) throw BadValue{"expected an integer"};
    return out;
}

double parse_double(const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
        throw BadValue{"expected a finite number"};
    }
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw BadValue{"expected true or false"};
}

std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const auto end = comma == std::string::npos ? v.size() : comma;
        out.push_back(parse_double(trim(std::string_view(v).substr(start, end - start))));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fmt(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
    return out;
}

std::string fmt(bool b) { return b ? "true" : "false"; }

template <class T>
    requires std::is_integral_v<T>
std::string fmt_int(T v) {
    return std::to_string(v);
}

const char* provider_name(DepthProvenance::Kind k) {
    switch (k) {
        case DepthProvenance::Kind::Oracle: return "oracle";
        case DepthProvenance::Kind::Degraded: return "degraded";
        case DepthProvenance::Kind::File: return "file";
    }
    return "oracle";
}

struct Key {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define SIZE_KEY(key, field)                                                                    \
    Key { key, [](RunConfig& c, const std::string& v) { c.field = parse_unsigned<std::size_t>(v); }, \
          [](const RunConfig& c) { return fmt_int(c.field); } }
#define U64_KEY(key, field)                                                                       \
    Key { key, [](RunConfig& c, const std::string& v) { c.field = parse_unsigned<std::uint64_t>(v); }, \
          [](const RunConfig& c) { return fmt_int(c.field); } }
#define DOUBLE_KEY(key, field) \
    Key { key, [](RunConfig& c, const std::string& v) { c.field = parse_double(v); }, [](const RunConfig& c) { return fmt(c.field); } }
#define BOOL_KEY(key, field) \
    Key { key, [](RunConfig& c, const std::string& v) { c.field = parse_bool(v); }, [](const RunConfig& c) { return fmt(c.field); } }
#define LIST_KEY(key, field) \
    Key { key, [](RunConfig& c, const std::string& v) { c.field = parse_list(v); }, [](const RunConfig& c) { return fmt(c.field); } }

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        SIZE_KEY("data.scenes", data.scenes),
        SIZE_KEY("data.val_scenes", val_scenes),
        SIZE_KEY("data.size", data.size),
        Key{"data.difficulty", [](RunConfig& c, const std::string& v) { c.data.difficulty = parse_int(v); },
            [](const RunConfig& c) { return fmt_int(c.data.difficulty); }},
        U64_KEY("data.seed", data.seed),
        LIST_KEY("data.betas", data.betas),
        DOUBLE_KEY("data.airlight", data.airlight),

        SIZE_KEY("net.base_channels", net.base_channels),
        SIZE_KEY("net.levels", net.levels),
        SIZE_KEY("net.blocks_per_level", net.blocks_per_level),
        BOOL_KEY("net.global_residual", net.global_residual),
        BOOL_KEY("net.zero_head", net.zero_head),
        SIZE_KEY("net.fusion_attach", net.fusion_attach),

        BOOL_KEY("fusion.enabled", fusion_enabled),
        SIZE_KEY("fusion.depth_channels", fusion.depth_channels),
        SIZE_KEY("fusion.heads", fusion.heads),
        BOOL_KEY("fusion.use_pre_zc", fusion.use_pre_zc),
        BOOL_KEY("fusion.use_post_zc", fusion.use_post_zc),
        SIZE_KEY("fusion.asg_layers", fusion.asg_layers),
        SIZE_KEY("fusion.hgdf_blocks", fusion.hgdf_blocks),
        SIZE_KEY("fusion.ffn_expansion", fusion.ffn_expansion),
        Key{"fusion.dai_mode",
            [](RunConfig& c, const std::string& v) {
                if (v == "channel") c.fusion.dai_mode = DaiMode::Channel;
                else if (v == "spatial") c.fusion.dai_mode = DaiMode::Spatial;
                else throw BadValue{"expected channel or spatial"};
            },
            [](const RunConfig& c) { return std::string(c.fusion.dai_mode == DaiMode::Channel ? "channel" : "spatial"); }},

        DOUBLE_KEY("train.lr_max", train.lr_max),
        DOUBLE_KEY("train.lr_min", train.lr_min),
        SIZE_KEY("train.cycle_steps", train.cycle_steps),
        SIZE_KEY("train.cycle_mult", train.cycle_mult),
        SIZE_KEY("train.stage1_steps", stage1_steps),
        SIZE_KEY("train.stage2_steps", stage2_steps),
        SIZE_KEY("train.batch_size", train.batch_size),
        SIZE_KEY("train.accum_steps", train.accum_steps),
        U64_KEY("train.seed", train.seed),
        BOOL_KEY("train.freeze_backbone", train.freeze_backbone_in_stage2),
        Key{"train.loss",
            [](RunConfig& c, const std::string& v) {
                if (v == "l1") c.train.loss = LossKind::L1;
                else if (v == "l2") c.train.loss = LossKind::L2;
                else throw BadValue{"expected l1 or l2"};
            },
            [](const RunConfig& c) { return std::string(c.train.loss == LossKind::L1 ? "l1" : "l2"); }},

        Key{"depth.provider",
            [](RunConfig& c, const std::string& v) {
                using K = DepthProvenance::Kind;
                if (v == "oracle") c.depth.kind = K::Oracle;
                else if (v == "degraded") c.depth.kind = K::Degraded;
                else if (v == "file") c.depth.kind = K::File;
                else throw BadValue{"expected oracle, degraded or file"};
            },
            [](const RunConfig& c) { return std::string(provider_name(c.depth.kind)); }},
        DOUBLE_KEY("depth.sigma", depth.sigma),
        SIZE_KEY("depth.blur_k", depth.blur_k),
        U64_KEY("depth.seed", depth.seed),
        Key{"depth.dir", [](RunConfig& c, const std::string& v) { c.depth.dir = v; },
            [](const RunConfig& c) { return c.depth.dir; }},

        LIST_KEY("analysis.kl_thresholds", kl_thresholds),
        SIZE_KEY("analysis.bins", heatmap_bins),

        SIZE_KEY("threads", threads),
        Key{"out", [](RunConfig& c, const std::string& v) { c.out = v; }, [](const RunConfig& c) { return c.out; }},
    };
    return table;
}

#undef SIZE_KEY
#undef U64_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY
#undef LIST_KEY

const Key* find_key(const std::string& name) {
    for (const auto& k : keys())
        if (name == k.name) return &k;
    return nullptr;
}

void assign(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& where,
            std::vector<std::string>& errors) {
    const Key* k = find_key(key);
    if (!k) {
        errors.push_back(where + "unknown key '" + key + "'");
        return;
    }
    try {
        k->set(cfg, value);
    } catch (const BadValue& e) {
        errors.push_back(where + key + " = '" + value + "': " + e.why);
    }
}

ConfigError config_error(const std::vector<std::string>& errors) {
    std::string msg = "invalid run config: ";
    for (std::size_t i = 0; i < errors.size(); ++i) msg += (i ? "; " : "") + errors[i];
    return ConfigError(msg);
}

template <class F>
void collect(std::vector<std::string>& errors, F&& check) {
    try {
        check();
    } catch (const ConfigError& e) {
        errors.emplace_back(e.what());
    }
}

}  // namespace

RunConfig default_run_config() {
    RunConfig c;
    c.net.base_channels = 8;
    c.net.levels = 2;
    c.net.blocks_per_level = 1;
    c.net.fusion_attach = 1;
    c.fusion.channels = c.net.attach_channels();
    c.train.lr_max = 2e-3;
    c.train.cycle_steps = 0;
    c.kl_thresholds = default_kl_thresholds();
    return c;
}

TrainConfig RunConfig::stage_config(int stage) const {
    TrainConfig t = train;
    t.stage = stage;
    t.total_steps = stage == 1 ? stage1_steps : stage2_steps;
    if (t.cycle_steps == 0) t.cycle_steps = std::max<std::size_t>(1, t.total_steps > 0 ? t.total_steps - 1 : 1);
    return t;
}

std::optional<FusionConfig> RunConfig::stage2_fusion() const {
    if (!fusion_enabled) return std::nullopt;
    FusionConfig f = fusion;
    f.channels = net.attach_channels();
    return f;
}

std::vector<std::string> RunConfig::problems() const {
    std::vector<std::string> errors;
    if (data.scenes == 0) errors.emplace_back("data.scenes must be >= 1");
    if (val_scenes == 0) errors.emplace_back("data.val_scenes must be >= 1");
    if (data.size < 16 || data.size % 2) errors.emplace_back("data.size must be even and >= 16");
    if (data.difficulty < 0) errors.emplace_back("data.difficulty must be >= 0");
    if (data.betas.empty()) errors.emplace_back("data.betas must list at least one level");
    if (!std::is_sorted(data.betas.begin(), data.betas.end())) errors.emplace_back("data.betas must be ascending");
    if (std::any_of(data.betas.begin(), data.betas.end(), [](double b) { return b < 0.0; })) {
        errors.emplace_back("data.betas must be >= 0");
    }
    if (!(data.airlight > 0.0 && data.airlight <= 1.0)) errors.emplace_back("data.airlight must lie in (0, 1]");

    collect(errors, [&] { net.validate(); });
    if (net.levels > 0 && net.levels < 16 && data.size % (std::size_t{1} << (net.levels - 1)) != 0) {
        errors.push_back("data.size " + std::to_string(data.size) + " is not divisible by 2^(net.levels - 1)");
    }
    if (fusion_enabled) collect(errors, [&] { stage2_fusion()->validate(); });
    collect(errors, [&] { stage_config(1).validate(); });
    collect(errors, [&] { stage_config(2).validate(); });

    if (!(depth.sigma >= 0.0)) errors.emplace_back("depth.sigma must be >= 0");
    if (depth.blur_k == 0 || depth.blur_k % 2 == 0) errors.emplace_back("depth.blur_k must be odd and >= 1");
    if (depth.kind == DepthProvenance::Kind::File && depth.dir.empty()) {
        errors.emplace_back("depth.dir is required when depth.provider = file");
    }
    if (kl_thresholds.empty()) errors.emplace_back("analysis.kl_thresholds must list at least one threshold");
    if (!std::is_sorted(kl_thresholds.begin(), kl_thresholds.end())) {
        errors.emplace_back("analysis.kl_thresholds must be ascending");
    }
    if (heatmap_bins == 0) errors.emplace_back("analysis.bins must be >= 1");
    if (out.empty()) errors.emplace_back("out must not be empty");
    return errors;
}

void RunConfig::validate() const {
    if (const auto errors = problems(); !errors.empty()) throw config_error(errors);
}

namespace {

void parse_into(RunConfig& base, const std::string& text, std::vector<std::string>& errors) {
    std::set<std::string> seen;
    bool schema_seen = false;
    std::istringstream in(text);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            errors.push_back(where + "expected key = value");
            continue;
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (!seen.insert(key).second) {
            errors.push_back(where + "duplicate key '" + key + "'");
            continue;
        }
        if (key == "schema") {
            if (schema_seen || seen.size() != 1) errors.push_back(where + "schema must be the first key");
            if (value != kRunSchema) {
                errors.push_back(where + "unsupported schema '" + value + "', expected " + kRunSchema);
            }
            schema_seen = true;
            continue;
        }
        if (!schema_seen) {
            errors.push_back(where + "schema must be the first key");
            schema_seen = true;  // report once
        }
        assign(base, key, value, where, errors);
    }
    if (!seen.contains("schema")) errors.push_back(std::string("missing schema = ") + kRunSchema);
}

void overrides_into(RunConfig& cfg, const std::vector<std::string>& assignments, std::vector<std::string>& errors) {
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) {
            errors.push_back("override '" + a + "': expected key=value");
            continue;
        }
        const std::string key = trim(a.substr(0, eq));
        if (key == "schema") {
            errors.push_back("override '" + a + "': schema cannot be overridden");
            continue;
        }
        assign(cfg, key, trim(a.substr(eq + 1)), "override: ", errors);
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, RunConfig base) {
    std::vector<std::string> errors;
    parse_into(base, text, errors);
    if (!errors.empty()) throw config_error(errors);
    return base;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_run_config(std::string(bytes.begin(), bytes.end()));
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
    std::vector<std::string> errors;
    overrides_into(cfg, assignments, errors);
    if (!errors.empty()) throw config_error(errors);
}

RunConfig resolve_run_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& assignments) {
    RunConfig cfg = default_run_config();
    std::vector<std::string> errors;
    if (path) {
        const auto bytes = read_file(*path);
        parse_into(cfg, std::string(bytes.begin(), bytes.end()), errors);
    }
    overrides_into(cfg, assignments, errors);
    for (auto& e : cfg.problems()) errors.push_back(std::move(e));
    if (!errors.empty()) throw config_error(errors);
    return cfg;
}

std::string echo(const RunConfig& cfg) {
    std::string out = std::string("schema = ") + kRunSchema + "\n";
    for (const auto& k : keys()) {
        // The output location is not part of what a run computes.
        if (std::string_view(k.name) == "out") continue;
        out += std::string(k.name) + " = " + k.get(cfg) + "\n";
    }
    return out;
}

std::string run_id(const RunConfig& cfg) {
    const std::string text = echo(cfg);
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

}  // namespace hazefuse
