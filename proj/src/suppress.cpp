#include "dsss/suppress.hpp"

#include <algorithm>
#include <cmath>

namespace dsss {

Tensor feature_difference(const Tensor& z_d, const Tensor& z_styled) {
    if (z_d.shape() != z_styled.shape())
        throw ShapeError("feature_difference: " + to_string(z_d.shape()) + " vs " +
                         to_string(z_styled.shape()));
    return abs(sub(z_d, z_styled));
}

LabelMap downsample_labels(const LabelMap& labels, std::int64_t th, std::int64_t tw) {
    if (th < 1 || tw < 1 || th > labels.h || tw > labels.w)
        throw ValidationError("downsample_labels: target " + std::to_string(th) + "x" +
                              std::to_string(tw) + " exceeds source");
    LabelMap out{labels.b, th, tw, {}};
    out.v.resize(static_cast<std::size_t>(labels.b * th * tw));
    for (std::int64_t bi = 0; bi < labels.b; ++bi)
        for (std::int64_t hi = 0; hi < th; ++hi)
            for (std::int64_t wi = 0; wi < tw; ++wi) {
                const std::int64_t sh = hi * labels.h / th;
                const std::int64_t sw = wi * labels.w / tw;
                out.v[static_cast<std::size_t>(out.index(bi, hi, wi))] = labels.at(bi, sh, sw);
            }
    return out;
}

std::vector<SpatialMask> class_partition_masks(const LabelMap& labels, int num_classes) {
    if (num_classes < 1) throw ValidationError("class_partition_masks: need at least one class");
    std::vector<SpatialMask> masks(static_cast<std::size_t>(num_classes));
    for (auto& m : masks) {
        m.b = labels.b;
        m.h = labels.h;
        m.w = labels.w;
        m.on.assign(labels.v.size(), 0);
    }
    for (std::size_t i = 0; i < labels.v.size(); ++i) {
        const std::uint8_t c = labels.v[i];
        if (c == LabelMap::IGNORE) continue;
        if (c >= num_classes)
            throw ValidationError("class_partition_masks: label " + std::to_string(c) +
                                  " >= K=" + std::to_string(num_classes));
        masks[c].on[i] = 1;
    }
    return masks;
}

std::vector<Tensor> class_partition(const Tensor& diff, const LabelMap& labels, int num_classes) {
    const Shape s = diff.shape();
    if (labels.b != s.b || labels.h != s.h || labels.w != s.w)
        throw ShapeError("class_partition: labels " + std::to_string(labels.h) + "x" +
                         std::to_string(labels.w) + " do not match " + to_string(s));
    std::vector<SpatialMask> masks = class_partition_masks(labels, num_classes);
    std::vector<Tensor> parts;
    parts.reserve(masks.size());
    for (const auto& m : masks) {
        std::vector<double> mv(m.on.begin(), m.on.end());
        parts.push_back(mul(diff, Tensor({s.b, 1, s.h, s.w}, std::move(mv))));
    }
    return parts;
}

Tensor class_spatial_sensitivity(const Tensor& z_k, const SpatialMask& mask) {
    const Shape s = z_k.shape();
    Tensor soft = softmax_spatial(z_k, &mask);
    // Channels with no response over the class support carry no sensitivity;
    // gate them off so a zero difference yields a zero map, not uniform mass.
    std::vector<double> alive(static_cast<std::size_t>(s.b * s.c), 0.0);
    const double* zv = z_k.data();
    const std::int64_t hw = s.h * s.w;
    for (std::int64_t bi = 0; bi < s.b; ++bi)
        for (std::int64_t ci = 0; ci < s.c; ++ci) {
            const double* plane = zv + (bi * s.c + ci) * hw;
            const std::uint8_t* on = mask.on.data() + bi * hw;
            for (std::int64_t p = 0; p < hw; ++p)
                if (on[p] && plane[p] != 0.0) {
                    alive[static_cast<std::size_t>(bi * s.c + ci)] = 1.0;
                    break;
                }
        }
    Tensor gated = mul(soft, Tensor({s.b, s.c, 1, 1}, std::move(alive)));
    return channel_mean(gated);
}

Tensor global_sensitivity(const std::vector<Tensor>& per_class, const Tensor& weight,
                          const Tensor& bias, bool rescale) {
    if (per_class.empty()) throw ValidationError("global_sensitivity: no class maps");
    Tensor total = per_class[0];
    for (std::size_t k = 1; k < per_class.size(); ++k) {
        if (per_class[k].shape() != total.shape())
            throw ShapeError("global_sensitivity: class maps disagree on shape");
        total = add(total, per_class[k]);
    }
    if (rescale) {
        const Shape s = total.shape();
        total = scale(total, static_cast<double>(s.h * s.w) /
                                 static_cast<double>(per_class.size()));
    }
    return sigmoid(conv1x1(total, weight, bias));
}

Tensor non_sensitivity(const Tensor& s_g) {
    return add_scalar(scale(s_g, -1.0), 1.0);
}

SensitivityBundle build_sensitivity(const Tensor& diff, const LabelMap& labels, int num_classes,
                                    const Tensor& weight, const Tensor& bias, bool rescale) {
    std::vector<SpatialMask> masks = class_partition_masks(labels, num_classes);
    std::vector<Tensor> parts = class_partition(diff, labels, num_classes);
    SensitivityBundle bundle;
    bundle.per_class.reserve(parts.size());
    for (std::size_t k = 0; k < parts.size(); ++k)
        bundle.per_class.push_back(class_spatial_sensitivity(parts[k], masks[k]));
    bundle.global = global_sensitivity(bundle.per_class, weight, bias, rescale);
    bundle.non_sensitive = non_sensitivity(bundle.global);
    return bundle;
}

Tensor refine_depth(const Tensor& z_d, const Tensor& non_sensitive) {
    return add(mul(z_d, non_sensitive), z_d);
}

Tensor fuse_rgbd(const Tensor& z_fine, const Tensor& z_rgb) {
    if (z_fine.shape() != z_rgb.shape())
        throw ShapeError("fuse_rgbd: " + to_string(z_fine.shape()) + " vs " +
                         to_string(z_rgb.shape()));
    return add(mul(z_fine, z_rgb), z_rgb);
}

HardMask hard_mask(const Tensor& diff_map, double alpha) {
    if (!std::isfinite(alpha)) throw ValidationError("hard_mask: alpha must be finite");
    return {hard_mask_items(diff_map,
                            std::vector<double>(static_cast<std::size_t>(diff_map.shape().b),
                                                alpha)),
            alpha};
}

Tensor hard_mask_items(const Tensor& diff_map, const std::vector<double>& alphas) {
    const Shape s = diff_map.shape();
    if (s.c != 1) throw ShapeError("hard_mask: expected [B,1,H,W], got " + to_string(s));
    if (alphas.size() != static_cast<std::size_t>(s.b))
        throw ValidationError("hard_mask: one alpha per batch item required");
    const double* dv = diff_map.data();
    std::vector<double> out(static_cast<std::size_t>(s.numel()));
    const std::int64_t hw = s.h * s.w;
    for (std::int64_t bi = 0; bi < s.b; ++bi) {
        const double a = alphas[static_cast<std::size_t>(bi)];
        for (std::int64_t p = 0; p < hw; ++p)
            out[static_cast<std::size_t>(bi * hw + p)] = dv[bi * hw + p] > a ? 1.0 : 0.0;
    }
    return Tensor(s, std::move(out));
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("quantile: empty sample");
    if (q < 0 || q > 1) throw ValidationError("quantile: q outside [0,1]");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<std::int64_t>(values.size());
    std::int64_t idx = static_cast<std::int64_t>(q * static_cast<double>(n));
    if (idx > n - 1) idx = n - 1;
    return values[static_cast<std::size_t>(idx)];
}

Tensor channel_sensitivity_gcss(const Tensor& diff) {
    const Shape s = diff.shape();
    if (s.c == 1) return Tensor::full({s.b, 1, 1, 1}, 1.0);
    Tensor p = softmax_channel(spatial_mean(diff));
    const double c = static_cast<double>(s.c);
    return scale(add_scalar(scale(p, -1.0), 1.0), c / (c - 1.0));
}

}  // namespace dsss
