#include "hazefuse/cli.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hazefuse/analysis.hpp"
#include "hazefuse/checkpoint.hpp"
#include "hazefuse/errors.hpp"
#include "hazefuse/kernels.hpp"
#include "hazefuse/rng.hpp"
#include "hazefuse/run_config.hpp"
#include "hazefuse/tensor_io.hpp"
#include "hazefuse/trainer.hpp"

namespace hazefuse {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string crc_hex(std::span<const std::uint8_t> bytes) {
    const auto crc = crc32(0L, bytes.data(), static_cast<uInt>(bytes.size()));
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, sep);) out.push_back(item);
    return out;
}

// Caps the kernel worker count at the configured count and at HAZEFUSE_THREADS.
void apply_threads(const RunConfig& cfg) {
    int n = cfg.threads ? static_cast<int>(cfg.threads) : kernels::max_threads();
    if (const char* env = std::getenv("HAZEFUSE_THREADS"); env && *env) {
        int cap = 0;
        const std::string_view s(env);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
        if (ec != std::errc{} || p != s.data() + s.size() || cap < 1) {
            throw ConfigError("HAZEFUSE_THREADS must be a positive integer, got '" + std::string(s) + "'");
        }
        n = std::min(n, cap);
    }
    kernels::set_max_threads(std::max(1, n));
}

FusionConfig fusion_config(const RunConfig& cfg) {
    FusionConfig f = cfg.fusion;
    f.channels = cfg.net.attach_channels();
    return f;
}

DatasetConfig split_config(const RunConfig& cfg, Split split) {
    DatasetConfig d = cfg.data;
    if (split == Split::Val) d.scenes = cfg.val_scenes;
    return d;
}

const char* split_name(Split s) { return s == Split::Train ? "train" : "val"; }

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    throw ConfigError("split must be train or val, got '" + s + "'");
}

// ---- synthesized dataset on disk ------------------------------------------

constexpr const char* kManifestHeader = "kind,split,id,seed,beta,airlight,file,crc32";

void write_split(const fs::path& root, const Dataset& d, Split split, std::string& manifest) {
    const std::string sub = split_name(split);
    fs::create_directories(root / sub);
    auto emit = [&](const char* kind, const std::string& id, std::uint64_t seed, const std::string& beta,
                    const std::string& rel, const Tensor& t) {
        const auto bytes = encode_hzt(t, Dtype::F64);
        write_file(root / rel, bytes);
        manifest += std::string(kind) + "," + sub + "," + id + "," + std::to_string(seed) + "," + beta + "," +
                    num(d.airlight) + "," + rel + "," + crc_hex(bytes) + "\n";
    };
    for (std::size_t i = 0; i < d.scenes.size(); ++i) {
        const Scene& s = d.scenes[i];
        emit("clear", s.id, s.seed, "", sub + "/" + s.id + ".clear.hzt", s.clear);
        emit("depth", s.id, s.seed, "", sub + "/" + s.id + ".depth.hzt", s.depth);
        write_ppm(root / sub / (s.id + ".clear.ppm"), s.clear);
        for (std::size_t b = 0; b < d.betas.size(); ++b) {
            const std::size_t sample = i * d.betas.size() + b;
            const std::string sid = d.sample_id(sample);
            emit("hazy", s.id, s.seed, num(d.betas[b]), sub + "/" + sid + ".hazy.hzt", d.hazy[sample]);
            write_ppm(root / sub / (sid + ".hazy.ppm"), d.hazy[sample]);
        }
    }
}

Tensor load_checked(const fs::path& root, const std::string& rel, const std::string& crc) {
    const auto bytes = read_file(root / rel);
    if (crc_hex(bytes) != crc) throw CrcError(rel + " does not match its manifest checksum", 0);
    return decode_hzt(bytes);
}

// Reads one split back. Hazy renders are recomputed from the stored scenes
// and compared bit for bit with the stored payloads.
Dataset load_split(const fs::path& root, Split which) {
    const auto bytes = read_file(root / "manifest.csv");
    const auto lines = split(std::string(bytes.begin(), bytes.end()), '\n');
    if (lines.empty() || lines[0] != kManifestHeader) {
        throw FormatError((root / "manifest.csv").string() + " has an unexpected header", 0);
    }
    struct Row {
        std::string kind, id, beta, file, crc;
        std::uint64_t seed;
    };
    std::vector<Row> rows;
    double airlight = kDefaultAtmosphericLight;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split(lines[i] + ",", ',');
        if (f.size() != 8) throw FormatError("manifest line " + std::to_string(i + 1) + " needs 8 fields", i);
        if (f[1] != split_name(which)) continue;
        rows.push_back({f[0], f[2], f[4], f[6], f[7], std::stoull(f[3])});
        airlight = std::stod(f[5]);
    }
    std::vector<Scene> scenes;
    std::vector<double> betas;
    std::map<std::string, std::size_t> index;
    std::vector<std::pair<std::string, const Row*>> hazy;
    for (const auto& r : rows) {
        if (r.kind == "clear") {
            index[r.id] = scenes.size();
            scenes.push_back({load_checked(root, r.file, r.crc), Tensor(), r.seed, r.id});
        } else if (r.kind == "depth") {
            const auto it = index.find(r.id);
            if (it == index.end()) throw FormatError("manifest lists depth before clear for " + r.id, 0);
            scenes[it->second].depth = load_checked(root, r.file, r.crc);
        } else if (r.kind == "hazy") {
            const double b = std::stod(r.beta);
            if (scenes.size() == 1) betas.push_back(b);
            hazy.emplace_back(r.id, &r);
        } else {
            throw FormatError("manifest has unknown row kind '" + r.kind + "'", 0);
        }
    }
    if (scenes.empty()) throw ConfigError(root.string() + " holds no " + split_name(which) + " scenes");
    for (const auto& s : scenes) validate(s);
    Dataset d = dataset_from_scenes(std::move(scenes), betas, airlight);
    if (hazy.size() != d.size()) throw FormatError("manifest hazy rows do not cover every scene and beta", 0);
    for (std::size_t i = 0; i < hazy.size(); ++i) {
        const Tensor stored = load_checked(root, hazy[i].second->file, hazy[i].second->crc);
        if (stored.shape() != d.hazy[i].shape() ||
            !std::equal(stored.data().begin(), stored.data().end(), d.hazy[i].data().begin())) {
            throw ContractError(hazy[i].second->file + " differs from the recomputed haze render");
        }
    }
    return d;
}

Dataset get_dataset(const RunConfig& cfg, const std::string& data_dir, Split split) {
    if (!data_dir.empty()) return load_split(data_dir, split);
    return build_dataset(split_config(cfg, split), split);
}

// ---- model loading ---------------------------------------------------------

bool has_fusion(const Checkpoint& c) {
    return std::any_of(c.tensors.begin(), c.tensors.end(),
                       [](const auto& kv) { return kv.first.starts_with("fusion."); });
}

struct LoadedModel {
    DehazeNet net;
    ParamSet params;
    Checkpoint ckpt;
};

LoadedModel load_model(const RunConfig& cfg, const fs::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    const bool fused = has_fusion(ckpt);
    DehazeNet net(cfg.net, fused ? std::optional(fusion_config(cfg)) : std::nullopt);
    ParamSet params = net.init_params(0);
    if (fused) params.merge(net.init_fusion_params(0));
    load_params(ckpt, params);
    return {std::move(net), std::move(params), std::move(ckpt)};
}

std::vector<Tensor> features_for(const Dataset& d, const RunConfig& cfg, const DepthProviderConfig& provider) {
    return scene_features(d, provider, fusion_config(cfg), cfg.net.attach_pool());
}

// ---- commands --------------------------------------------------------------

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
};

struct Context {
    RunConfig cfg;
    fs::path out;
    std::ostream& log;
};

Context resolve(const Common& c, std::ostream& log) {
    std::vector<std::string> sets = c.sets;
    if (!c.out.empty()) sets.push_back("out=" + c.out);
    RunConfig cfg = resolve_run_config(c.config.empty() ? std::nullopt : std::optional<fs::path>(c.config), sets);
    apply_threads(cfg);
    return {cfg, fs::path(cfg.out), log};
}

void begin(Context& ctx, const char* command) {
    fs::create_directories(ctx.out);
    write_text(ctx.out / "config.resolved", echo(ctx.cfg));
    ctx.log << command << ": run " << run_id(ctx.cfg) << " -> " << ctx.out.string() << "\n";
}

void cmd_synth(Context& ctx) {
    begin(ctx, "synth");
    std::string manifest = std::string(kManifestHeader) + "\n";
    std::size_t samples = 0;
    for (Split s : {Split::Train, Split::Val}) {
        const Dataset d = build_dataset(split_config(ctx.cfg, s), s);
        write_split(ctx.out, d, s, manifest);
        samples += d.size();
    }
    write_text(ctx.out / "manifest.csv", manifest);
    ctx.log << "synth: " << ctx.cfg.data.scenes + ctx.cfg.val_scenes << " scenes, " << samples << " hazy renders\n";
}

std::string stage_file(int stage, const char* ext) { return "stage" + std::to_string(stage) + ext; }

struct TrainArgs {
    int stage = 1;
    std::string resume, init, data;
    std::size_t checkpoint_every = 0;
    std::size_t stop_at = 0;
};

void cmd_train(Context& ctx, const TrainArgs& a) {
    begin(ctx, "train");
    const RunConfig& cfg = ctx.cfg;
    const TrainConfig tcfg = cfg.stage_config(a.stage);
    const Dataset data = get_dataset(cfg, a.data, Split::Train);
    const std::optional<FusionConfig> fusion = a.stage == 2 ? cfg.stage2_fusion() : std::nullopt;
    const DehazeNet net(cfg.net, fusion);
    std::vector<Tensor> depth;
    if (net.fused()) depth = features_for(data, cfg, cfg.depth);

    TrainState state;
    if (!a.resume.empty()) {
        const Checkpoint ckpt = load_checkpoint(a.resume);
        if (ckpt.stage != a.stage) {
            throw ContractError("cannot resume stage " + std::to_string(a.stage) + " from a stage " +
                                std::to_string(ckpt.stage) + " checkpoint");
        }
        state.stage = a.stage;
        state.params = net.init_params(0);
        if (net.fused()) state.params.merge(net.init_fusion_params(0));
        load_params(ckpt, state.params);
        if (a.stage == 2 && tcfg.freeze_backbone_in_stage2) state.params.set_trainable("net.", false);
        state.step = ckpt.step;
        fs::path opt = a.resume;
        restore_optimizer(load_checkpoint(opt.replace_extension(".opt")), state);
    } else if (a.stage == 1) {
        state.stage = 1;
        state.params = net.init_params(derive_seed(tcfg.seed, 1));
    } else {
        const fs::path init = a.init.empty() ? ctx.out / stage_file(1, ".hzc") : fs::path(a.init);
        state = stage2_init(load_checkpoint(init), net, tcfg.seed, tcfg.freeze_backbone_in_stage2);
    }

    const fs::path ckpt_path = ctx.out / stage_file(a.stage, ".hzc");
    const fs::path opt_path = ctx.out / stage_file(a.stage, ".opt");
    const fs::path loss_path = ctx.out / ("loss_stage" + std::to_string(a.stage) + ".csv");
    const std::size_t target = a.stop_at ? std::min(a.stop_at, tcfg.total_steps) : tcfg.total_steps;
    bool append = !a.resume.empty();
    auto save = [&](const TrainResult& r) {
        save_checkpoint(ckpt_path, make_checkpoint(r.state.params, r.state.step, static_cast<std::uint8_t>(a.stage)));
        save_checkpoint(opt_path, make_optimizer_checkpoint(r.state));
        write_loss_csv(loss_path, r.log, append);
        append = true;
    };
    const auto progress = [&](const LossRecord& r) {
        if ((r.step + 1) % 100 == 0 || r.step + 1 == tcfg.total_steps) {
            ctx.log << "stage " << r.stage << " step " << r.step + 1 << "/" << tcfg.total_steps << " lr " << r.lr
                    << " loss " << r.loss << "\n";
        }
    };
    bool saved = false;
    while (state.step < target || !saved) {
        TrainConfig chunk = tcfg;
        chunk.total_steps = a.checkpoint_every ? std::min(target, state.step + a.checkpoint_every) : target;
        TrainResult r = train(net, std::move(state), data, net.fused() ? &depth : nullptr, chunk, progress);
        save(r);
        saved = true;
        state = std::move(r.state);
    }
    ctx.log << "train: stage " << a.stage << " at step " << state.step << " -> " << ckpt_path.string() << "\n";
}

nlohmann::ordered_json config_json(const RunConfig& cfg) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& line : split(echo(cfg), '\n')) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

void cmd_eval(Context& ctx, const std::string& ckpt_path, const std::string& data_dir, const std::string& split_s) {
    const Split split = parse_split(split_s);
    const LoadedModel m = load_model(ctx.cfg, ckpt_path);
    begin(ctx, "eval");
    const Dataset data = get_dataset(ctx.cfg, data_dir, split);
    std::vector<Tensor> depth;
    if (m.net.fused()) depth = features_for(data, ctx.cfg, ctx.cfg.depth);
    const MetricReport rep = evaluate(m.net, m.params, data, m.net.fused() ? &depth : nullptr);

    const std::string stem = fs::path(ckpt_path).stem().string();
    std::string csv = "image_id,psnr,psnr_y,ssim\n";
    for (const auto& im : rep.images) csv += im.id + "," + num(im.psnr) + "," + num(im.psnr_y) + "," + num(im.ssim) + "\n";
    write_text(ctx.out / ("eval_" + stem + ".csv"), csv);

    nlohmann::ordered_json j;
    j["run_id"] = run_id(ctx.cfg);
    j["checkpoint"] = {{"file", fs::path(ckpt_path).filename().string()}, {"stage", m.ckpt.stage}, {"step", m.ckpt.step},
                       {"fused", m.net.fused()}};
    j["split"] = split_name(split);
    j["images"] = rep.images.size();
    j["psnr"] = rep.psnr;
    j["psnr_y"] = rep.psnr_y;
    j["ssim"] = rep.ssim;
    j["config"] = config_json(ctx.cfg);
    write_text(ctx.out / ("eval_" + stem + ".json"), j.dump(2) + "\n");
    ctx.log << "eval: " << rep.images.size() << " images psnr " << rep.psnr << " psnr_y " << rep.psnr_y << " ssim "
            << rep.ssim << "\n";
}

struct AnalyzeArgs {
    std::string ckpt, data, betas, depth, split = "val";
};

void cmd_analyze(Context& ctx, const AnalyzeArgs& a) {
    if (!a.betas.empty()) apply_overrides(ctx.cfg, {"data.betas=" + a.betas});
    if (!a.depth.empty()) apply_overrides(ctx.cfg, {"depth.provider=" + a.depth});
    ctx.cfg.validate();
    const RunConfig& cfg = ctx.cfg;
    const LoadedModel m = load_model(cfg, a.ckpt);
    begin(ctx, "analyze");
    Dataset data = get_dataset(cfg, a.data, parse_split(a.split));
    const std::vector<double> betas = a.betas.empty() ? data.betas : cfg.data.betas;
    std::vector<Tensor> depth;
    if (m.net.fused()) depth = features_for(data, cfg, cfg.depth);
    const DistanceProfile prof = feature_distance_profile(m.net, m.params, data.scenes, betas, data.airlight,
                                                          m.net.fused() ? &depth : nullptr, cfg.heatmap_bins);

    const std::string stem = fs::path(a.ckpt).stem().string();
    std::string dist = "beta,image_id,distance\n";
    for (std::size_t b = 0; b < betas.size(); ++b)
        for (std::size_t i = 0; i < data.scenes.size(); ++i)
            dist += num(betas[b]) + "," + data.scenes[i].id + "," + num(prof.distances[b][i]) + "\n";
    write_text(ctx.out / ("distances_" + stem + ".csv"), dist);

    std::string heat = "beta,mean";
    for (std::size_t k = 0; k + 1 < prof.bin_edges.size(); ++k) heat += ",bin_" + num(prof.bin_edges[k]);
    heat += "\n";
    const auto means = prof.means();
    for (std::size_t b = 0; b < betas.size(); ++b) {
        heat += num(betas[b]) + "," + num(means[b]);
        for (double v : prof.histogram[b]) heat += "," + num(v);
        heat += "\n";
    }
    write_text(ctx.out / ("heatmap_" + stem + ".csv"), heat);
    ctx.log << "analyze: mean feature distance per beta:";
    for (double v : means) ctx.log << " " << v;
    ctx.log << "\n";

    if (cfg.depth.kind == DepthProvenance::Kind::File) {
        ctx.log << "analyze: file depth features carry no depth map, KL curve skipped\n";
        return;
    }
    const KLCurve curve = provider_kl_curve(data.scenes, cfg.depth, cfg.kl_thresholds);
    std::string kl = "threshold,fraction\n";
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i) kl += num(curve.thresholds[i]) + "," + num(curve.exceedance[i]) + "\n";
    const char* provider = cfg.depth.kind == DepthProvenance::Kind::Oracle ? "oracle" : "degraded";
    write_text(ctx.out / (std::string("kl_curve_") + provider + ".csv"), kl);
}

void cmd_ablate(Context& ctx, const std::string& init, const std::string& data_dir) {
    begin(ctx, "ablate-zc");
    const RunConfig& cfg = ctx.cfg;
    const Dataset train_set = get_dataset(cfg, data_dir, Split::Train);
    const Dataset val = get_dataset(cfg, data_dir, Split::Val);
    Checkpoint stage1;
    if (init.empty()) {
        stage1 = train_stage1(train_set, cfg.net, cfg.stage_config(1)).checkpoint;
        save_checkpoint(ctx.out / "stage1.hzc", stage1);
    } else {
        stage1 = load_checkpoint(init);
    }
    const auto train_depth = features_for(train_set, cfg, cfg.depth);
    const auto val_depth = features_for(val, cfg, cfg.depth);

    struct Variant {
        const char* name;
        bool pre, post;
    };
    std::string table = "config,use_pre_zc,use_post_zc,psnr,psnr_y,ssim\n";
    for (const Variant v : {Variant{"none", false, false}, Variant{"pre", true, false}, Variant{"post", false, true},
                            Variant{"both", true, true}}) {
        FusionConfig f = fusion_config(cfg);
        f.use_pre_zc = v.pre;
        f.use_post_zc = v.post;
        const StageResult r = train_stage2(stage1, train_set, &train_depth, cfg.net, f, cfg.stage_config(2));
        save_checkpoint(ctx.out / (std::string("stage2_zc_") + v.name + ".hzc"), r.checkpoint);
        write_loss_csv(ctx.out / (std::string("loss_stage2_zc_") + v.name + ".csv"), r.run.log);
        const MetricReport rep = evaluate(DehazeNet(cfg.net, f), r.run.state.params, val, &val_depth);
        table += std::string(v.name) + "," + (v.pre ? "true" : "false") + "," + (v.post ? "true" : "false") + "," +
                 num(rep.psnr) + "," + num(rep.psnr_y) + "," + num(rep.ssim) + "\n";
        ctx.log << "ablate-zc: " << v.name << " psnr " << rep.psnr << " ssim " << rep.ssim << "\n";
    }
    write_text(ctx.out / "zc_ablation.csv", table);
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Depth-guided dehazing: synthesis, two-stage training, evaluation and analysis", "hazefuse"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "run config file (key = value)");
        sub->add_option("--set", common.sets, "override, key=value (repeatable)")->take_all();
        sub->add_option("--out", common.out, "output directory (default: config key `out`)");
    };

    auto* config = app.add_subcommand("config", "print the resolved config");
    add_common(config);

    auto* synth = app.add_subcommand("synth", "write the train and val scenes, renders and manifest");
    add_common(synth);

    TrainArgs targs;
    auto* train = app.add_subcommand("train", "train one stage");
    add_common(train);
    train->add_option("--stage", targs.stage, "1 = RGB baseline, 2 = fusion fine-tuning")
        ->required()
        ->check(CLI::IsMember({1, 2}));
    train->add_option("--resume", targs.resume, "continue from a checkpoint (its .opt sibling is read too)");
    train->add_option("--init", targs.init, "stage-1 checkpoint for stage 2 (default: <out>/stage1.hzc)");
    train->add_option("--data", targs.data, "directory written by synth (default: regenerate)");
    train->add_option("--checkpoint-every", targs.checkpoint_every, "also checkpoint every N steps");
    train->add_option("--stop-at", targs.stop_at, "stop after this step (resumable)");

    std::string ckpt, data, split = "val";
    auto* eval = app.add_subcommand("eval", "score a checkpoint");
    add_common(eval);
    eval->add_option("--ckpt", ckpt, "checkpoint")->required();
    eval->add_option("--data", data, "directory written by synth (default: regenerate)");
    eval->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));

    AnalyzeArgs aargs;
    auto* analyze = app.add_subcommand("analyze", "feature-distance heatmap and depth KL curve");
    add_common(analyze);
    analyze->add_option("--ckpt", aargs.ckpt, "checkpoint")->required();
    analyze->add_option("--data", aargs.data, "directory written by synth (default: regenerate)");
    analyze->add_option("--betas", aargs.betas, "comma separated haze levels");
    analyze->add_option("--depth", aargs.depth, "oracle, degraded or file")
        ->check(CLI::IsMember({"oracle", "degraded", "file"}));
    analyze->add_option("--split", aargs.split, "train or val")->check(CLI::IsMember({"train", "val"}));

    std::string ablate_init, ablate_data;
    auto* ablate = app.add_subcommand("ablate-zc", "stage 2 with each zero-conv placement");
    add_common(ablate);
    ablate->add_option("--init", ablate_init, "stage-1 checkpoint (default: train one)");
    ablate->add_option("--data", ablate_data, "directory written by synth (default: regenerate)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "usage_error: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        Context ctx = resolve(common, out);
        if (config->parsed()) {
            out << echo(ctx.cfg);
        } else if (synth->parsed()) {
            cmd_synth(ctx);
        } else if (train->parsed()) {
            cmd_train(ctx, targs);
        } else if (eval->parsed()) {
            cmd_eval(ctx, ckpt, data, split);
        } else if (analyze->parsed()) {
            cmd_analyze(ctx, aargs);
        } else if (ablate->parsed()) {
            cmd_ablate(ctx, ablate_init, ablate_data);
        }
    } catch (const Error& e) {
        err << e.kind() << ": " << one_line(e.what()) << "\n";
        return 1;
    } catch (const fs::filesystem_error& e) {
        err << "io_error: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "internal_error: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}

}  // namespace hazefuse
