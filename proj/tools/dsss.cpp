#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsss/config.hpp"
#include "dsss/error.hpp"
#include "dsss/model.hpp"
#include "dsss/synth.hpp"

namespace fs = std::filesystem;
using namespace dsss;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + path);
}

void write_manifest(const std::string& dir, const std::string& command,
                    const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                    const std::vector<std::string>& outputs, const std::string& started) {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = config_hash(cfg);
    j["seeds"] = seeds;
    j["version"] = kVersion;
    j["started"] = started;
    j["finished"] = iso_now();
    j["outputs"] = outputs;
    write_text(dir + "/run_manifest.json", j.dump(2) + "\n");
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string out;
    bool quiet = false;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_out = true) {
    cmd->add_option("--config", o.config_path, "experiment config file (key=value lines)");
    cmd->add_option("--set", o.overrides, "override one key=value (repeatable)");
    o.seed_opt = cmd->add_option("--seed", o.seed, "root seed override");
    if (with_out) cmd->add_option("--out", o.out, "output directory");
    cmd->add_flag("--quiet", o.quiet, "suppress progress output");
}

ExperimentConfig load_cfg(const CommonOpts& o) {
    ExperimentConfig cfg =
        o.config_path.empty() ? ExperimentConfig{} : parse_config_file(o.config_path);
    for (const auto& kv : o.overrides) apply_override(cfg, kv);
    if (o.seed_opt && o.seed_opt->count() > 0) cfg.seed = o.seed;
    validate_config(cfg);
    return cfg;
}

int max_workers(std::size_t cells) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 4;
    long cap = static_cast<long>(hw);
    if (const char* env = std::getenv("DSSS_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v >= 1) cap = v;
    }
    return static_cast<int>(std::min<long>(cap, static_cast<long>(cells)));
}

std::string domain_label(const std::string& dir) {
    const std::string name = fs::path(dir).filename().string();
    return name.empty() ? fs::path(dir).parent_path().filename().string() : name;
}

int cmd_gen(const std::string& domain, int count, std::int64_t size, int k, std::uint64_t seed,
            const std::string& out, bool quiet) {
    const DomainSpec spec = domain_preset(domain, k);
    make_dataset(out, spec, k, size, size, count, seed);
    const Dataset ds = load_dataset(out);

    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    std::int64_t total = 0;
    for (const auto& s : ds.samples)
        for (std::uint8_t v : s.labels.v) {
            ++counts[v];
            ++total;
        }
    if (!quiet) {
        std::cout << "wrote " << ds.samples.size() << " samples to " << out << " (domain "
                  << domain << ", size " << size << ", k " << k << ", seed " << seed << ")\n";
        std::cout << "class pixel frequencies:\n";
        for (int c = 0; c < k; ++c) {
            char pct[16];
            std::snprintf(pct, sizeof pct, "%.2f",
                          100.0 * static_cast<double>(counts[static_cast<std::size_t>(c)]) /
                              static_cast<double>(total));
            std::cout << "  class " << c << ": " << counts[static_cast<std::size_t>(c)] << " ("
                      << pct << "%)\n";
        }
    }
    return 0;
}

int cmd_train(const CommonOpts& o) {
    const std::string started = iso_now();
    const ExperimentConfig cfg = load_cfg(o);
    if (cfg.train_dir.empty()) throw ConfigError("train_dir is not set", 0, 0);
    const Dataset data = load_dataset(cfg.train_dir);

    TrainResult tr = train(cfg, data, cfg.seed, o.quiet ? nullptr : &std::cout);

    if (!o.out.empty()) {
        ensure_dir(o.out);
        write_text(o.out + "/config.txt", serialize_config(cfg));
        save_checkpoint(o.out + "/model.ckpt", tr.params, cfg);
        std::string trail;
        for (const auto& p : tr.trail)
            trail += nlohmann::json{{"step", p.step},
                                    {"ce", p.ce},
                                    {"sa", p.sa},
                                    {"total", p.total},
                                    {"lr", p.lr}}
                         .dump() +
                     "\n";
        write_text(o.out + "/trail.jsonl", trail);
        write_manifest(o.out, "train", cfg, {cfg.seed},
                       {"config.txt", "model.ckpt", "trail.jsonl"}, started);
    }
    if (!o.quiet)
        std::cout << "trained group " << cfg.group << " for " << cfg.iterations
                  << " iterations (final loss " << tr.trail.back().total << ")\n";
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt) {
    const std::string started = iso_now();
    const ExperimentConfig cfg = load_cfg(o);
    if (cfg.eval_dirs.empty()) throw ConfigError("eval_dirs is not set", 0, 0);
    const ModelParams params = load_checkpoint(ckpt, cfg);

    std::string csv = "domain,miou\n";
    for (const auto& dir : cfg.eval_dirs) {
        const Dataset ds = load_dataset(dir);
        const EvalResult ev = evaluate(params, cfg, ds);
        char miou_s[32];
        std::snprintf(miou_s, sizeof miou_s, "%.6f", ev.report.mean);
        csv += domain_label(dir) + "," + miou_s + "\n";
        if (!o.quiet) {
            std::cout << domain_label(dir) << " miou " << miou_s << "\n";
            for (int c = 0; c < cfg.k; ++c)
                if (ev.report.included[static_cast<std::size_t>(c)])
                    std::cout << "  class " << c << " iou "
                              << ev.report.per_class[static_cast<std::size_t>(c)] << "\n";
        }
    }
    if (!o.out.empty()) {
        ensure_dir(o.out);
        write_text(o.out + "/eval.csv", csv);
        write_manifest(o.out, "eval", cfg, {}, {"eval.csv"}, started);
    }
    return 0;
}

int cmd_ablate(const CommonOpts& o) {
    const std::string started = iso_now();
    const ExperimentConfig cfg = load_cfg(o);
    if (o.out.empty()) throw ConfigError("ablate requires --out", 0, 0);
    if (cfg.train_dir.empty()) throw ConfigError("train_dir is not set", 0, 0);
    if (cfg.eval_dirs.empty()) throw ConfigError("eval_dirs is not set", 0, 0);

    const Dataset train_data = load_dataset(cfg.train_dir);
    std::vector<std::pair<std::string, Dataset>> eval_sets;
    for (const auto& dir : cfg.eval_dirs) eval_sets.emplace_back(domain_label(dir), load_dataset(dir));

    ensure_dir(o.out);
    const int workers = max_workers(cfg.groups.size() * cfg.seeds.size());
    AblationTable table =
        ablate(cfg, train_data, eval_sets, workers, o.out, o.quiet ? nullptr : &std::cout);

    write_text(o.out + "/ablation.csv", table.to_csv());
    write_text(o.out + "/ablation_runs.csv", table.runs_to_csv());
    std::vector<std::string> outputs = {"ablation.csv", "ablation_runs.csv"};
    for (const auto& g : cfg.groups)
        for (std::uint64_t s : cfg.seeds) outputs.push_back(g + "_" + std::to_string(s) + ".ckpt");
    write_manifest(o.out, "ablate", cfg, cfg.seeds, outputs, started);

    if (!o.quiet) std::cout << table.to_csv();
    return 0;
}

int cmd_gradcheck(const CommonOpts& o) {
    // Desk-size preset; --set can still override any knob.
    ExperimentConfig cfg;
    cfg.group = "G";
    cfg.k = 3;
    cfg.image = 16;
    cfg.batch = 1;
    cfg.rgb_c1 = 3;
    cfg.rgb_c2 = 4;
    cfg.depth_c1 = 2;
    cfg.depth_c2 = 3;
    for (const auto& kv : o.overrides) apply_override(cfg, kv);
    validate_config(cfg);
    const std::uint64_t seed = (o.seed_opt && o.seed_opt->count() > 0) ? o.seed : 1;

    const DomainSpec spec = domain_preset("source", cfg.k);
    StreamRng geom = StreamRng::stream(seed, "geometry", 0);
    StreamRng app = StreamRng::stream(seed, "appearance", 0);
    const Sample sample = generate_scene(spec, cfg.k, cfg.image, cfg.image, geom, app);
    const BatchView batch{sample.rgb, sample.depth, sample.labels};

    StreamRng init_rng = StreamRng::stream(seed, "init", 0);
    ModelParams params = ModelParams::init(cfg, init_rng);
    // Zero-initialised biases park many relu preactivations (and |z_d - styled|
    // arguments) exactly on kinks, where central differences measure the two-sided
    // average instead of the subgradient. Differentiate at a generic point instead.
    StreamRng jitter = StreamRng::stream(seed, "jitter", 0);
    for (auto& [name, slot] : params.named_params()) {
        if (!name.ends_with(".bias") || name == "csss.bias") continue;
        std::vector<double> vals(slot->values().begin(), slot->values().end());
        for (double& v : vals) {
            const double mag = jitter.uniform(0.05, 0.3);
            v += jitter.uniform(-1.0, 1.0) < 0 ? -mag : mag;
        }
        *slot = Tensor(slot->shape(), vals);
    }

    Tape tape;
    ModelParams tracked = track(tape, params);
    const ForwardResult fr = forward(tracked, batch, cfg, true, seed, 0);
    if (!std::isfinite(fr.report.total)) throw ValidationError("gradcheck forward is not finite");
    const Gradients grads = tape.backward(fr.loss);

    auto loss_at = [&](const ModelParams& p) {
        return forward(p, batch, cfg, true, seed, 0).report.total;
    };

    const std::vector<std::pair<std::string, std::vector<std::string>>> groups = {
        {"rgb_encoder", {"rgb1.weight", "rgb1.bias", "rgb2.weight", "rgb2.bias"}},
        {"depth_encoder",
         {"d1.weight", "d1.bias", "d2.weight", "d2.bias", "dproj.weight", "dproj.bias"}},
        {"decoder", {"dec1.weight", "dec1.bias", "dec2.weight", "dec2.bias"}},
        {"csss_conv", {"csss.weight", "csss.bias"}},
    };

    auto tracked_named = tracked.named_params();
    auto find_tracked = [&](const std::string& name) -> const Tensor& {
        for (auto& [n, t] : tracked_named)
            if (n == name) return *t;
        throw ValidationError("unknown parameter " + name);
    };

    const double eps = 1e-6;
    const double tol = 1e-5;
    bool ok = true;
    std::string worst_msg;
    for (const auto& [group_name, tensors] : groups) {
        double group_max = 0;
        std::string group_where;
        for (const auto& tname : tensors) {
            const Tensor analytic = grads.at(find_tracked(tname));
            std::vector<double> av(analytic.values().begin(), analytic.values().end());
            if (cfg.gradcheck_corrupt == group_name && tname == tensors.front()) av[0] += 1.0;

            auto raw = params.named_params();
            Tensor* slot = nullptr;
            for (auto& [n, t] : raw)
                if (n == tname) slot = t;
            const Tensor saved = *slot;
            auto sv = saved.values();
            for (std::size_t j = 0; j < sv.size(); ++j) {
                std::vector<double> bumped(sv.begin(), sv.end());
                bumped[j] = sv[j] + eps;
                *slot = Tensor(saved.shape(), bumped);
                const double up = loss_at(params);
                bumped[j] = sv[j] - eps;
                *slot = Tensor(saved.shape(), bumped);
                const double down = loss_at(params);
                *slot = saved;
                const double numeric = (up - down) / (2 * eps);
                // The 1e-3 floor keeps central-difference cancellation noise
                // (~1e-10 on an O(1) loss) from drowning near-zero gradients.
                const double denom = std::max({1e-3, std::fabs(av[j]), std::fabs(numeric)});
                const double rel = std::fabs(av[j] - numeric) / denom;
                if (rel > group_max) {
                    group_max = rel;
                    group_where = tname + "[" + std::to_string(j) + "]";
                }
            }
        }
        char line[128];
        std::snprintf(line, sizeof line, "%-14s max rel err %.3e", group_name.c_str(), group_max);
        std::cout << line << (group_where.empty() ? "" : "  (" + group_where + ")") << "\n";
        if (group_max >= tol) {
            ok = false;
            if (worst_msg.empty())
                worst_msg = group_name + " at " + group_where + " rel err " +
                            std::to_string(group_max);
        }
    }
    if (!ok) {
        std::cout << "gradcheck: FAIL (" << worst_msg << ")\n";
        return 4;
    }
    std::cout << "gradcheck: PASS\n";
    return 0;
}

int cmd_export_maps(const CommonOpts& o, const std::string& ckpt, const std::string& data_dir,
                    std::string id) {
    const std::string started = iso_now();
    const ExperimentConfig cfg = load_cfg(o);
    if (o.out.empty()) throw ConfigError("export-maps requires --out", 0, 0);
    const ModelParams params = load_checkpoint(ckpt, cfg);
    const Dataset ds = load_dataset(data_dir);

    std::size_t which = 0;
    if (id.empty()) {
        id = ds.entries.front().id;
    } else {
        bool found = false;
        for (std::size_t i = 0; i < ds.entries.size(); ++i)
            if (ds.entries[i].id == id) {
                which = i;
                found = true;
            }
        if (!found) throw ValidationError("sample " + id + " is not in " + data_dir);
    }

    ensure_dir(o.out);
    export_sensitivity(params, ds.samples[which], cfg, o.out, id);
    write_manifest(o.out, "export-maps", cfg, {},
                   {id + ".sg.pgm", id + ".ng.pgm", id + ".pred.ppm"}, started);
    if (!o.quiet)
        std::cout << "wrote " << id << ".sg.pgm, " << id << ".ng.pgm, " << id << ".pred.ppm to "
                  << o.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth-sensitive soft suppression experiments"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "generate a synthetic RGB-D dataset");
    std::string gen_domain = "source", gen_out;
    int gen_count = 10, gen_k = 6;
    std::int64_t gen_size = 64;
    std::uint64_t gen_seed = 1;
    bool gen_quiet = false;
    gen->add_option("--domain", gen_domain, "domain preset: source, shifted or dark");
    gen->add_option("--count", gen_count, "number of scenes")->check(CLI::PositiveNumber);
    gen->add_option("--size", gen_size, "square image side");
    gen->add_option("--k", gen_k, "class count");
    gen->add_option("--seed", gen_seed, "root seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_flag("--quiet", gen_quiet, "suppress the summary");

    CommonOpts train_opts;
    auto* train_cmd = app.add_subcommand("train", "train one group on the source split");
    add_common(train_cmd, train_opts);

    CommonOpts eval_opts;
    std::string eval_ckpt;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the eval splits");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();

    CommonOpts ablate_opts;
    auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate the group grid");
    add_common(ablate_cmd, ablate_opts);

    CommonOpts grad_opts;
    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference audit of the full model");
    add_common(grad_cmd, grad_opts, /*with_out=*/false);

    CommonOpts export_opts;
    std::string export_ckpt, export_data, export_id;
    auto* export_cmd = app.add_subcommand("export-maps", "write sensitivity and prediction maps");
    add_common(export_cmd, export_opts);
    export_cmd->add_option("--ckpt", export_ckpt, "checkpoint file")->required();
    export_cmd->add_option("--data", export_data, "dataset directory")->required();
    export_cmd->add_option("--id", export_id, "sample id (defaults to the first)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed())
            return cmd_gen(gen_domain, gen_count, gen_size, gen_k, gen_seed, gen_out, gen_quiet);
        if (train_cmd->parsed()) return cmd_train(train_opts);
        if (eval_cmd->parsed()) return cmd_eval(eval_opts, eval_ckpt);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_opts);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_opts);
        if (export_cmd->parsed())
            return cmd_export_maps(export_opts, export_ckpt, export_data, export_id);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
