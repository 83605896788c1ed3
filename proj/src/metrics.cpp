#include "dsss/metrics.hpp"

#include "dsss/error.hpp"

namespace dsss {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
    if (num_classes < 1) throw ValidationError("confusion matrix: need at least one class");
    counts_.assign(static_cast<std::size_t>(k_) * static_cast<std::size_t>(k_), 0);
}

std::int64_t ConfusionMatrix::at(int truth, int pred) const {
    if (truth < 0 || truth >= k_ || pred < 0 || pred >= k_)
        throw ValidationError("confusion matrix: index out of range");
    return counts_[static_cast<std::size_t>(truth) * static_cast<std::size_t>(k_) +
                   static_cast<std::size_t>(pred)];
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

void ConfusionMatrix::update(const LabelMap& pred, const LabelMap& truth) {
    if (pred.b != truth.b || pred.h != truth.h || pred.w != truth.w)
        throw ShapeError("confusion matrix: pred and truth extents differ");
    for (std::size_t i = 0; i < truth.v.size(); ++i) {
        const std::uint8_t t = truth.v[i];
        if (t == LabelMap::IGNORE) continue;
        const std::uint8_t p = pred.v[i];
        if (t >= k_ || p >= k_ || p == LabelMap::IGNORE)
            throw ValidationError("confusion matrix: class id out of range (truth " +
                                  std::to_string(t) + ", pred " + std::to_string(p) + ")");
        ++counts_[static_cast<std::size_t>(t) * static_cast<std::size_t>(k_) + p];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw ValidationError("confusion matrix: class count mismatch in merge");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

MiouReport miou(const ConfusionMatrix& cm) {
    const int k = cm.num_classes();
    MiouReport report;
    report.per_class.assign(static_cast<std::size_t>(k), 0.0);
    report.included.assign(static_cast<std::size_t>(k), false);
    double acc = 0;
    int used = 0;
    for (int c = 0; c < k; ++c) {
        const std::int64_t tp = cm.at(c, c);
        std::int64_t fn = 0, fp = 0;
        for (int j = 0; j < k; ++j) {
            if (j == c) continue;
            fn += cm.at(c, j);
            fp += cm.at(j, c);
        }
        const std::int64_t denom = tp + fp + fn;
        if (denom == 0) continue;
        const double iou = static_cast<double>(tp) / static_cast<double>(denom);
        report.per_class[static_cast<std::size_t>(c)] = iou;
        report.included[static_cast<std::size_t>(c)] = true;
        acc += iou;
        ++used;
    }
    if (used == 0) throw ValidationError("miou: no class present in truth or prediction");
    report.mean = acc / used;
    return report;
}

LabelMap argmax_labels(const Tensor& logits) {
    const Shape s = logits.shape();
    const std::int64_t hw = s.h * s.w;
    const double* lv = logits.data();
    LabelMap out{s.b, s.h, s.w, {}};
    out.v.resize(static_cast<std::size_t>(s.b * hw));
    for (std::int64_t bi = 0; bi < s.b; ++bi)
        for (std::int64_t p = 0; p < hw; ++p) {
            std::int64_t best = 0;
            double bv = lv[(bi * s.c) * hw + p];
            for (std::int64_t k = 1; k < s.c; ++k) {
                const double v = lv[(bi * s.c + k) * hw + p];
                if (v > bv) {
                    bv = v;
                    best = k;
                }
            }
            out.v[static_cast<std::size_t>(bi * hw + p)] = static_cast<std::uint8_t>(best);
        }
    return out;
}

}  // namespace dsss
