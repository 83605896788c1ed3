#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dsss/error.hpp"

namespace dsss {

// Fixed-rank [batch, channel, height, width] extents, row-major layout.
struct Shape {
    std::int64_t b = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    std::int64_t numel() const { return b * c * h * w; }

    std::int64_t index(std::int64_t bi, std::int64_t ci, std::int64_t hi, std::int64_t wi) const {
        return ((bi * c + ci) * h + hi) * w + wi;
    }

    bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

class Tape;

// Dense 4-D double tensor. Value-like: copies share an immutable buffer; every
// operation returns a fresh tensor. A tensor may carry a (tape, node) handle,
// in which case gradients can be pulled back through it.
class Tensor {
 public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);  // validates length and finiteness

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }
    // Lvalue-only: a span into a temporary would dangle once it dies.
    std::span<const double> values() const& { return *data_; }
    std::span<const double> values() const&& = delete;
    const double* data() const& { return data_->data(); }
    const double* data() const&& = delete;

    double at(std::int64_t bi, std::int64_t ci, std::int64_t hi, std::int64_t wi) const {
        return (*data_)[static_cast<std::size_t>(shape_.index(bi, ci, hi, wi))];
    }

    double item() const;  // requires numel() == 1

    bool requires_grad() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

    // Same values, no tape participation.
    Tensor detached() const;

 private:
    friend class Tape;
    friend class Gradients;
    Shape shape_{};
    std::shared_ptr<const std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Boolean spatial map [B,1,H,W]; marks which positions participate in a
// masked operation.
struct SpatialMask {
    std::int64_t b = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::vector<std::uint8_t> on;  // length b*h*w

    std::int64_t index(std::int64_t bi, std::int64_t hi, std::int64_t wi) const {
        return (bi * h + hi) * w + wi;
    }
};

// Result of a backward pass: one accumulator per tape node.
class Gradients {
 public:
    // Gradient of the loss w.r.t. a tensor on the tape; all-zeros if the
    // tensor did not influence the loss.
    Tensor at(const Tensor& t) const;

 private:
    friend class Tape;
    const Tape* tape_ = nullptr;
    std::vector<std::vector<double>> acc_;
};

// Backward closure: receives the node's own output values, the upstream
// gradient of that output, and pointers to the parents' accumulators
// (nullptr for off-tape parents).
using BackwardFn = std::function<void(std::span<const double> out_values,
                                      std::span<const double> out_grad,
                                      const std::vector<double*>& parent_grads)>;

// Append-only record of operations; node ids are topologically ordered by
// construction (parents always precede children). One tape serves one
// training step on one thread.
class Tape {
 public:
    // Register a leaf (parameter or input that should receive a gradient).
    Tensor watch(const Tensor& t);

    // Record an operation result. Parents may be on this tape or plain
    // tensors (constants). The backward closure owns any saved values.
    Tensor emit(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                BackwardFn backward);

    // Reverse sweep from a scalar loss; each node is visited exactly once.
    Gradients backward(const Tensor& loss) const;

    std::size_t size() const { return nodes_.size(); }

 private:
    struct Node {
        Shape shape;
        std::vector<int> parents;  // -1 marks an off-tape parent
        BackwardFn backward;       // empty for leaves
        std::shared_ptr<const std::vector<double>> values;
    };
    std::vector<Node> nodes_;
};

// --- operator set -----------------------------------------------------------
// Binary ops accept equal shapes or a right operand whose extents are each
// either equal to the left's or 1 (the singleton dims broadcast).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);

Tensor spatial_mean(const Tensor& a);  // [B,C,H,W] -> [B,C,1,1]
Tensor channel_mean(const Tensor& a);  // [B,C,H,W] -> [B,1,H,W]
Tensor sum_all(const Tensor& a);       // -> [1,1,1,1]
Tensor mean_all(const Tensor& a);

// Exp-normalize over spatial positions per (b,c), restricted to the mask when
// given. Batch items with an empty mask yield zeros. Max-subtraction keeps
// large inputs stable.
Tensor softmax_spatial(const Tensor& a, const SpatialMask* mask = nullptr);

// Exp-normalize across channels per (b,h,w).
Tensor softmax_channel(const Tensor& a);

// weight * t + bias at every position; t must have exactly one channel.
// weight and bias are scalar [1,1,1,1] tensors (trainable when watched).
Tensor conv1x1(const Tensor& t, const Tensor& weight, const Tensor& bias);

// View [h0, h0+hh) x [w0, w0+ww) of every channel.
Tensor crop_spatial(const Tensor& a, std::int64_t h0, std::int64_t w0, std::int64_t hh,
                    std::int64_t ww);

// Central differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps) per element.
// f must be deterministic: pre-sample and freeze any randomness.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace dsss
