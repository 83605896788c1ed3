#pragma once

#include "dsss/labels.hpp"
#include "dsss/tensor.hpp"

namespace dsss {

struct LossReport {
    double ce = 0;
    double sa = 0;
    double total = 0;
    double beta = 0;
};

// Mean over non-IGNORE pixels of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, const LabelMap& labels);

// beta times the mean squared difference over all B*C*H*W elements.
Tensor soft_alignment_loss(const Tensor& z_rgb, const Tensor& z_styled, double beta);

Tensor total_loss(const Tensor& ce, const Tensor& sa);

}  // namespace dsss
