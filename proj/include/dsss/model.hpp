#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dsss/config.hpp"
#include "dsss/losses.hpp"
#include "dsss/metrics.hpp"
#include "dsss/suppress.hpp"
#include "dsss/synth.hpp"

namespace dsss {

struct ConvLayer {
    Tensor weight;  // [Cout,Cin,kh,kw]
    Tensor bias;    // [1,Cout,1,1]
};

// Dual-encoder segmentation net: two stride-2 conv encoders (RGB and depth),
// a 1x1 projection aligning the depth channels, a two-conv decoder with 4x
// bilinear upsampling, and the scalar conv pair of the sensitivity gate.
struct ModelParams {
    ConvLayer rgb1, rgb2;
    ConvLayer d1, d2, dproj;
    ConvLayer dec1, dec2;
    Tensor csss_w, csss_b;

    static ModelParams init(const ExperimentConfig& cfg, StreamRng& rng);

    // Stable order; names key checkpoints and the gradcheck report.
    std::vector<std::pair<std::string, Tensor*>> named_params();
    std::vector<std::pair<std::string, const Tensor*>> named_params() const;
    std::int64_t param_count() const;
};

// Copies of the parameters registered on a tape.
ModelParams track(Tape& tape, const ModelParams& params);

struct BatchView {
    Tensor rgb;       // [B,3,H,W]
    Tensor depth;     // [B,1,H,W]
    LabelMap labels;  // [B,H,W]
};

BatchView batch_from_samples(const Dataset& data, const std::vector<std::size_t>& idx);

struct ForwardResult {
    Tensor logits;  // [B,K,H,W]
    Tensor loss;    // scalar (training only; defaulted otherwise)
    LossReport report;
    bool has_bundle = false;
    SensitivityBundle bundle;  // CSSS groups (D, F, G) only
};

// Group routing per the ablation table. Training applies the group's
// stylization source and losses; evaluation runs the same graph under the
// lambda=0 self-difference convention with no loss terms.
ForwardResult forward(const ModelParams& m, const BatchView& batch, const ExperimentConfig& cfg,
                      bool training, std::uint64_t seed, std::int64_t step);

double poly_lr(double lr0, std::int64_t step, std::int64_t total, double power);

struct TrailPoint {
    int step = 0;
    double ce = 0;
    double sa = 0;
    double total = 0;
    double lr = 0;
};

struct TrainResult {
    ModelParams params;
    std::vector<TrailPoint> trail;
};

// SGD with momentum and the poly schedule; deterministic given (cfg, seed).
// Non-finite loss raises DivergenceError after dumping the offending batch.
TrainResult train(const ExperimentConfig& cfg, const Dataset& data, std::uint64_t seed,
                  std::ostream* log);

struct EvalResult {
    MiouReport report;
    ConfusionMatrix cm{2};
};

EvalResult evaluate(const ModelParams& params, const ExperimentConfig& cfg, const Dataset& data);

// One ablation measurement: a trained (group, seed) cell evaluated on one
// domain.
struct AblationRun {
    std::string group;
    std::uint64_t seed = 0;
    std::string domain;
    double miou = 0;
};

struct AblationTable {
    std::vector<std::string> groups;
    std::vector<std::string> domains;
    std::vector<AblationRun> runs;  // sorted by (group, seed, domain)

    double mean(const std::string& group, const std::string& domain) const;
    double sd(const std::string& group, const std::string& domain) const;
    double group_mean(const std::string& group) const;  // across domains

    std::string to_csv() const;       // summary: groups x domains + Mean
    std::string runs_to_csv() const;  // raw per-seed rows
};

// Trains each group on the training set and evaluates each cell on every
// eval set. Cells run in parallel (up to max_workers). If out_dir is
// non-empty, per-cell checkpoints land there.
AblationTable ablate(const ExperimentConfig& cfg, const Dataset& train_data,
                     const std::vector<std::pair<std::string, Dataset>>& eval_sets,
                     int max_workers, const std::string& out_dir, std::ostream* log);

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ExperimentConfig& cfg);
ModelParams load_checkpoint(const std::string& path, const ExperimentConfig& cfg);

// S_g / N_g graymaps plus the palette-mapped prediction for one sample.
void export_sensitivity(const ModelParams& params, const Sample& sample,
                        const ExperimentConfig& cfg, const std::string& dir,
                        const std::string& id);

// Palette-mapped prediction image only (works for every group).
void export_prediction(const Tensor& logits, int num_classes, const std::string& path);

}  // namespace dsss
