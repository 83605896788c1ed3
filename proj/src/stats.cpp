#include "dsss/stats.hpp"

#include <algorithm>

namespace dsss {

ChannelStats channel_stats(const Tensor& t, double eps) {
    if (eps < 0) throw ValidationError("channel_stats: eps must be non-negative");
    Tensor mu = spatial_mean(t);
    Tensor centered = sub(t, mu);
    Tensor var = spatial_mean(square(centered));
    Tensor sigma = sqrt(add_scalar(var, eps));
    return {mu, sigma};
}

Tensor instance_normalize(const Tensor& t, double eps) {
    if (!(eps > 0)) throw ValidationError("instance_normalize: eps must be positive");
    ChannelStats st = channel_stats(t, eps);
    return mul(sub(t, st.mu), reciprocal(st.sigma));
}

Tensor spatial_std(const Tensor& t, double eps) {
    if (eps < 0) throw ValidationError("spatial_std: eps must be non-negative");
    Tensor mu = spatial_mean(channel_mean(t));  // [B,1,1,1]
    Tensor var = spatial_mean(channel_mean(square(sub(t, mu))));
    return sqrt(add_scalar(var, eps));
}

std::pair<Tensor, CropRegion> random_crop(const Tensor& t, std::int64_t size, StreamRng& rng) {
    if (size < 1) throw ValidationError("random_crop: size must be >= 1");
    const Shape s = t.shape();
    const std::int64_t side = std::min({size, s.h, s.w});
    CropRegion region;
    region.size = side;
    region.top = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(s.h - side + 1)));
    region.left = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(s.w - side + 1)));
    return {crop_region(t, region), region};
}

Tensor crop_region(const Tensor& t, const CropRegion& region) {
    return crop_spatial(t, region.top, region.left, region.size, region.size);
}

}  // namespace dsss
