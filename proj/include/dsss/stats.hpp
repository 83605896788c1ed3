#pragma once

#include "dsss/rng.hpp"
#include "dsss/tensor.hpp"

namespace dsss {

inline constexpr double kStatsEps = 1e-5;

// Per-(item, channel) spatial statistics, each [B,C,1,1]. std uses population
// normalization and carries eps inside the square root: sqrt(var + eps).
struct ChannelStats {
    Tensor mu;
    Tensor sigma;
};

ChannelStats channel_stats(const Tensor& t, double eps);

// (t - mu) / sigma per (item, channel); eps keeps constant regions finite.
Tensor instance_normalize(const Tensor& t, double eps);

// Per-item std over all channels and positions -> [B,1,1,1].
Tensor spatial_std(const Tensor& t, double eps);

// Square window, top/left in feature pixels.
struct CropRegion {
    std::int64_t top = 0;
    std::int64_t left = 0;
    std::int64_t size = 0;
};

// Uniformly placed square crop of side min(size, H, W); deterministic under a
// fixed rng state. Top is drawn before left.
std::pair<Tensor, CropRegion> random_crop(const Tensor& t, std::int64_t size, StreamRng& rng);

// Re-extract a previously drawn region.
Tensor crop_region(const Tensor& t, const CropRegion& region);

}  // namespace dsss
