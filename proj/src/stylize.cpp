#include "dsss/stylize.hpp"

#include "dsss/nn.hpp"

namespace dsss {

Flow compute_flow(const Tensor& z_rgb, const Tensor& z_d, std::int64_t crop_size, StreamRng& rng,
                  double eps) {
    const Shape rs = z_rgb.shape();
    const Shape ds = z_d.shape();
    if (rs.b != ds.b || rs.c != ds.c)
        throw ShapeError("compute_flow: features disagree on (B,C): " + to_string(rs) + " vs " +
                         to_string(ds));
    auto [cropped, region] = random_crop(z_rgb, crop_size, rng);
    ChannelStats rgb = channel_stats(cropped, eps);
    ChannelStats d = channel_stats(z_d, eps);
    return {sub(rgb.mu, d.mu), sub(rgb.sigma, d.sigma), region};
}

Tensor apply_flow(const Tensor& z_d, const Flow& flow, const Tensor& lambda, double eps) {
    if (lambda.shape() != Shape{z_d.shape().b, 1, 1, 1})
        throw ShapeError("apply_flow: lambda must be [B,1,1,1], got " +
                         to_string(lambda.shape()));
    for (double v : lambda.values())
        if (v < 0.0 || v > 1.0)
            throw ValidationError("apply_flow: lambda " + std::to_string(v) +
                                  " outside [0,1]");
    ChannelStats st = channel_stats(z_d, eps);
    Tensor mu_p = add(st.mu, mul(flow.d_mu, lambda));
    Tensor sigma_p = clamp_min(add(st.sigma, mul(flow.d_sigma, lambda)), eps);
    Tensor z_nor = mul(sub(z_d, st.mu), reciprocal(st.sigma));
    return add(mul(z_nor, sigma_p), mu_p);
}

Tensor apply_flow(const Tensor& z_d, const Flow& flow, double lambda, double eps) {
    return apply_flow(z_d, flow, Tensor::full({z_d.shape().b, 1, 1, 1}, lambda), eps);
}

StylizationOutput stylize(const Tensor& z_rgb, const Tensor& z_d, const StylizeOptions& opts,
                          StreamRng& rng) {
    Flow flow = compute_flow(z_rgb, z_d, opts.crop_size, rng, opts.eps);
    if (opts.detach_flow) flow = {flow.d_mu.detached(), flow.d_sigma.detached(), flow.region};
    const std::int64_t b = z_d.shape().b;
    std::vector<double> lv(static_cast<std::size_t>(b));
    if (opts.lambda_mode == LambdaMode::PerBatch) {
        const double l = rng.uniform();
        for (auto& v : lv) v = l;
    } else {
        for (auto& v : lv) v = rng.uniform();
    }
    Tensor lambda({b, 1, 1, 1}, std::move(lv));
    Tensor styled = apply_flow(z_d, flow, lambda, opts.eps);
    return {styled, lambda, flow};
}

Tensor perturb_rsm(const Tensor& z_d, StreamRng& rng) {
    const std::int64_t b = z_d.shape().b;
    const double sigma = 0.5 + rng.uniform();
    std::vector<double> gain(static_cast<std::size_t>(b));
    std::vector<double> offs(static_cast<std::size_t>(b));
    for (auto& v : gain) v = 0.8 + 0.4 * rng.uniform();
    for (auto& v : offs) v = -0.1 + 0.2 * rng.uniform();
    Tensor blurred = gaussian_blur3(z_d, sigma);
    Tensor jittered = mul(blurred, Tensor({b, 1, 1, 1}, std::move(gain)));
    Tensor shift = mul(spatial_std(z_d, kStatsEps), Tensor({b, 1, 1, 1}, std::move(offs)));
    return add(jittered, shift);
}

}  // namespace dsss
