#include "dsss/losses.hpp"

#include <cmath>
#include <limits>

namespace dsss {

Tensor cross_entropy(const Tensor& logits, const LabelMap& labels) {
    const Shape s = logits.shape();
    if (s.c < 2) throw ValidationError("cross_entropy: need at least two classes");
    if (labels.b != s.b || labels.h != s.h || labels.w != s.w)
        throw ShapeError("cross_entropy: labels " + std::to_string(labels.h) + "x" +
                         std::to_string(labels.w) + " do not match " + to_string(s));
    const std::int64_t hw = s.h * s.w;
    const double* lv = logits.data();
    double total = 0;
    std::int64_t scored = 0;
    for (std::int64_t bi = 0; bi < s.b; ++bi)
        for (std::int64_t p = 0; p < hw; ++p) {
            const std::uint8_t y = labels.v[static_cast<std::size_t>(bi * hw + p)];
            if (y == LabelMap::IGNORE) continue;
            if (y >= s.c)
                throw ValidationError("cross_entropy: label " + std::to_string(y) +
                                      " >= K=" + std::to_string(s.c));
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t k = 0; k < s.c; ++k)
                mx = std::max(mx, lv[(bi * s.c + k) * hw + p]);
            double z = 0;
            for (std::int64_t k = 0; k < s.c; ++k)
                z += std::exp(lv[(bi * s.c + k) * hw + p] - mx);
            total += mx + std::log(z) - lv[(bi * s.c + y) * hw + p];
            ++scored;
        }
    if (scored == 0) throw ValidationError("cross_entropy: every pixel is IGNORE");

    LabelMap saved = labels;
    auto backward = [logits, saved, s, hw, scored](std::span<const double>,
                                                   std::span<const double> g,
                                                   const std::vector<double*>& pg) {
        if (!pg[0]) return;
        const double* lv2 = logits.data();
        const double g0 = g[0] / static_cast<double>(scored);
        for (std::int64_t bi = 0; bi < s.b; ++bi)
            for (std::int64_t p = 0; p < hw; ++p) {
                const std::uint8_t y = saved.v[static_cast<std::size_t>(bi * hw + p)];
                if (y == LabelMap::IGNORE) continue;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::int64_t k = 0; k < s.c; ++k)
                    mx = std::max(mx, lv2[(bi * s.c + k) * hw + p]);
                double z = 0;
                for (std::int64_t k = 0; k < s.c; ++k)
                    z += std::exp(lv2[(bi * s.c + k) * hw + p] - mx);
                for (std::int64_t k = 0; k < s.c; ++k) {
                    const double soft = std::exp(lv2[(bi * s.c + k) * hw + p] - mx) / z;
                    pg[0][(bi * s.c + k) * hw + p] += g0 * (soft - (k == y ? 1.0 : 0.0));
                }
            }
    };

    if (!logits.requires_grad())
        return Tensor({1, 1, 1, 1}, {total / static_cast<double>(scored)});
    return logits.tape()->emit({1, 1, 1, 1}, {total / static_cast<double>(scored)}, {logits},
                               std::move(backward));
}

Tensor soft_alignment_loss(const Tensor& z_rgb, const Tensor& z_styled, double beta) {
    if (z_rgb.shape() != z_styled.shape())
        throw ShapeError("soft_alignment_loss: " + to_string(z_rgb.shape()) + " vs " +
                         to_string(z_styled.shape()));
    if (beta < 0) throw ValidationError("soft_alignment_loss: beta must be >= 0");
    return scale(mean_all(square(sub(z_rgb, z_styled))), beta);
}

Tensor total_loss(const Tensor& ce, const Tensor& sa) {
    if (ce.numel() != 1 || sa.numel() != 1)
        throw ShapeError("total_loss: both terms must be scalars");
    return add(ce, sa);
}

}  // namespace dsss
