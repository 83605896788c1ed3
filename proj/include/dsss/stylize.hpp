#pragma once

#include "dsss/stats.hpp"

namespace dsss {

// Statistics displacement from the depth feature toward a cropped RGB view,
// per (item, channel).
struct Flow {
    Tensor d_mu;     // [B,C,1,1]
    Tensor d_sigma;  // [B,C,1,1]
    CropRegion region;
};

struct StylizationOutput {
    Tensor styled;  // same shape as the depth feature
    Tensor lambda;  // [B,1,1,1], values in [0,1]
    Flow flow;
};

enum class LambdaMode { PerItem, PerBatch };

struct StylizeOptions {
    std::int64_t crop_size = 64;
    double eps = kStatsEps;
    LambdaMode lambda_mode = LambdaMode::PerItem;
    bool detach_flow = false;  // stop gradients at the flow statistics
};

// d_mu = mu(crop(z_rgb)) - mu(z_d), d_sigma likewise; the crop is drawn from
// the RGB feature. Spatial extents of the two features may differ.
Flow compute_flow(const Tensor& z_rgb, const Tensor& z_d, std::int64_t crop_size, StreamRng& rng,
                  double eps = kStatsEps);

// Shift the depth statistics lambda of the way along the flow and re-dress
// the normalized depth feature. The shifted sigma is floored at eps.
Tensor apply_flow(const Tensor& z_d, const Flow& flow, const Tensor& lambda, double eps);
Tensor apply_flow(const Tensor& z_d, const Flow& flow, double lambda, double eps);

// Sample lambda (uniform in [0,1] per the options) and compose
// compute_flow + apply_flow. The crop is drawn first, then the lambdas.
StylizationOutput stylize(const Tensor& z_rgb, const Tensor& z_d, const StylizeOptions& opts,
                          StreamRng& rng);

// Random-perturbation baseline: seeded 3x3 Gaussian blur (sigma in
// [0.5,1.5]) then per-item affine jitter, gain in [0.8,1.2] and offset in
// [-0.1,0.1] of the feature's per-item std.
Tensor perturb_rsm(const Tensor& z_d, StreamRng& rng);

}  // namespace dsss
