#pragma once

#include <cstdint>
#include <vector>

#include "dsss/labels.hpp"
#include "dsss/tensor.hpp"

namespace dsss {

// Rows index ground truth, columns index prediction.
class ConfusionMatrix {
 public:
    explicit ConfusionMatrix(int num_classes);

    int num_classes() const { return k_; }
    std::int64_t at(int truth, int pred) const;
    std::int64_t total() const;

    // Tallies counts[truth, pred] over non-IGNORE truth pixels. Predictions
    // must not contain IGNORE.
    void update(const LabelMap& pred, const LabelMap& truth);
    void merge(const ConfusionMatrix& other);

 private:
    int k_;
    std::vector<std::int64_t> counts_;
};

struct MiouReport {
    double mean = 0;
    std::vector<double> per_class;  // NaN-free; only meaningful where included
    std::vector<bool> included;
};

// IoU_k = TP/(TP+FP+FN); classes with empty union are excluded from the mean.
MiouReport miou(const ConfusionMatrix& cm);

// Channel argmax per pixel; ties resolve to the lowest class id.
LabelMap argmax_labels(const Tensor& logits);

}  // namespace dsss
