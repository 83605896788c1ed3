#pragma once

#include <vector>

#include "dsss/labels.hpp"
#include "dsss/tensor.hpp"

namespace dsss {

// |z_d - z_styled| elementwise.
Tensor feature_difference(const Tensor& z_d, const Tensor& z_styled);

// Nearest-neighbor reduction to (th, tw); each target pixel takes the
// top-left source of its cell. IGNORE survives untouched.
LabelMap downsample_labels(const LabelMap& labels, std::int64_t th, std::int64_t tw);

// One mask per class: positions whose label equals k. IGNORE belongs to no
// class.
std::vector<SpatialMask> class_partition_masks(const LabelMap& labels, int num_classes);

// Per-class views of diff: diff where label = k, zero elsewhere.
std::vector<Tensor> class_partition(const Tensor& diff, const LabelMap& labels, int num_classes);

// Masked spatial softmax per channel, then mean over channels -> [B,1,H,W].
// A class whose masked values are all exactly zero (no stylization response)
// contributes a zero map, as does an absent class.
Tensor class_spatial_sensitivity(const Tensor& z_k, const SpatialMask& mask);

// sigmoid(weight * sum(per_class) + bias). With rescale on, the sum is
// scaled by (H*W)/K first to undo the 1/(class area) magnitude of masked
// softmax outputs.
Tensor global_sensitivity(const std::vector<Tensor>& per_class, const Tensor& weight,
                          const Tensor& bias, bool rescale);

Tensor non_sensitivity(const Tensor& s_g);  // 1 - s_g

struct SensitivityBundle {
    std::vector<Tensor> per_class;  // K maps [B,1,H,W]
    Tensor global;                  // S_g in (0,1)
    Tensor non_sensitive;           // 1 - S_g
};

SensitivityBundle build_sensitivity(const Tensor& diff, const LabelMap& labels, int num_classes,
                                    const Tensor& weight, const Tensor& bias, bool rescale);

// z_d * map + z_d; map broadcasts over channels.
Tensor refine_depth(const Tensor& z_d, const Tensor& non_sensitive);

// z_fine * z_rgb + z_rgb.
Tensor fuse_rgbd(const Tensor& z_fine, const Tensor& z_rgb);

// Binary sensitivity: 1 iff the difference strictly exceeds alpha.
struct HardMask {
    Tensor map;  // [B,1,H,W], values in {0,1}
    double alpha = 0;
};

HardMask hard_mask(const Tensor& diff_map, double alpha);

// Per-item thresholds (quantile mode at desk scale).
Tensor hard_mask_items(const Tensor& diff_map, const std::vector<double>& alphas);

// Nearest-rank q-quantile, q in [0,1].
double quantile(std::vector<double> values, double q);

// Per-channel non-sensitivity weights [B,C,1,1]: softmax of spatial-mean
// differences across channels, complemented and rescaled to mean 1. A single
// channel degenerates to the constant 1.
Tensor channel_sensitivity_gcss(const Tensor& diff);

}  // namespace dsss
