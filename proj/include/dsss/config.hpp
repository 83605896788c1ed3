#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsss {

// Flat key=value experiment description. Defaults reproduce the reference
// training recipe at desk scale; every field can be set from a config file
// or a --set override.
struct ExperimentConfig {
    std::string group = "G";  // A..G ablation variant
    int k = 6;
    std::int64_t image = 64;
    double beta = 0.1;
    double alpha_q = 0.9;  // hard-mask quantile (CHSS)
    std::int64_t crop_size = 64;
    double lr = 0.01;
    double momentum = 0.9;
    double poly_power = 0.9;
    int iterations = 2000;
    int batch = 4;
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<std::string> groups = {"A", "B", "D", "E", "F", "G"};
    double eps = 1e-5;
    std::string lambda_mode = "per_item";  // or per_batch
    bool detach_flow = false;
    bool detach_sensitivity = false;
    bool detach_alignment = false;
    bool rescale = true;
    int rgb_c1 = 16;
    int rgb_c2 = 32;
    int depth_c1 = 8;
    int depth_c2 = 16;
    std::string train_dir;
    std::vector<std::string> eval_dirs;
    int loss_every = 50;
    std::string gradcheck_corrupt;  // fault-injection hook: poisons that group's gradient
};

// Parse from defaults; unknown keys and malformed values raise ConfigError
// with the line/column they came from.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// One "key=value" override (line number reported as 0).
void apply_override(ExperimentConfig& cfg, const std::string& kv);

// Semantic checks (group names, ranges); throws ConfigError.
void validate_config(const ExperimentConfig& cfg);

// Canonical render: every key, alphabetical, one per line. Hashing this
// string identifies the experiment.
std::string serialize_config(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);  // 16 hex digits (FNV-1a)

}  // namespace dsss
