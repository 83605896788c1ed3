#include "dsss/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsss {

std::string to_string(const Shape& s) {
    return "[" + std::to_string(s.b) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
           "," + std::to_string(s.w) + "]";
}

namespace {

void check_shape_valid(const Shape& s) {
    if (s.b <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
        throw ShapeError("tensor extents must be positive, got " + to_string(s));
}

// Strides for indexing a broadcast right operand; zero where the extent is 1.
struct BStride {
    std::int64_t b, c, h, w;
    explicit BStride(const Shape& t)
        : b(t.b == 1 ? 0 : t.c * t.h * t.w),
          c(t.c == 1 ? 0 : t.h * t.w),
          h(t.h == 1 ? 0 : t.w),
          w(t.w == 1 ? 0 : 1) {}
};

void check_broadcast(const Shape& a, const Shape& b, const char* op) {
    auto fits = [](std::int64_t full, std::int64_t part) { return part == full || part == 1; };
    if (!fits(a.b, b.b) || !fits(a.c, b.c) || !fits(a.h, b.h) || !fits(a.w, b.w))
        throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(b) + " onto " +
                         to_string(a));
}

Tape* pick_tape(const std::vector<Tensor>& parents) {
    Tape* tape = nullptr;
    for (const auto& p : parents) {
        if (!p.requires_grad()) continue;
        if (tape && tape != p.tape()) throw ValidationError("operands come from different tapes");
        tape = p.tape();
    }
    return tape;
}

// Route through the tape when any parent is tracked, else build a constant.
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                   BackwardFn backward) {
    Tape* tape = pick_tape(parents);
    if (!tape) return Tensor(shape, std::move(values));
    return tape->emit(shape, std::move(values), parents, std::move(backward));
}

template <class Fwd, class Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
    check_broadcast(a.shape(), b.shape(), name);
    const Shape s = a.shape();
    const BStride bs(b.shape());
    const double* av = a.data();
    const double* bv = b.data();
    std::vector<double> out(static_cast<std::size_t>(s.numel()));
    std::int64_t i = 0;
    for (std::int64_t bi = 0; bi < s.b; ++bi)
        for (std::int64_t ci = 0; ci < s.c; ++ci)
            for (std::int64_t hi = 0; hi < s.h; ++hi)
                for (std::int64_t wi = 0; wi < s.w; ++wi) {
                    const std::int64_t j = bi * bs.b + ci * bs.c + hi * bs.h + wi * bs.w;
                    out[static_cast<std::size_t>(i)] = fwd(av[i], bv[j]);
                    ++i;
                }
    auto backward = [a, b, s, bs, bwd](std::span<const double>, std::span<const double> g,
                                       const std::vector<double*>& pg) {
        const double* av2 = a.data();
        const double* bv2 = b.data();
        std::int64_t i2 = 0;
        for (std::int64_t bi = 0; bi < s.b; ++bi)
            for (std::int64_t ci = 0; ci < s.c; ++ci)
                for (std::int64_t hi = 0; hi < s.h; ++hi)
                    for (std::int64_t wi = 0; wi < s.w; ++wi) {
                        const std::int64_t j = bi * bs.b + ci * bs.c + hi * bs.h + wi * bs.w;
                        bwd(g[static_cast<std::size_t>(i2)], av2[i2], bv2[j],
                            pg[0] ? pg[0] + i2 : nullptr, pg[1] ? pg[1] + j : nullptr);
                        ++i2;
                    }
    };
    return make_result(s, std::move(out), {a, b}, std::move(backward));
}

// dfn(out_value, in_value) -> local derivative.
template <class Fwd, class Dfn>
Tensor unary_op(const Tensor& a, Fwd fwd, Dfn dfn) {
    const std::int64_t n = a.numel();
    const double* av = a.data();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = fwd(av[i]);
    auto backward = [a, n, dfn](std::span<const double> y, std::span<const double> g,
                                const std::vector<double*>& pg) {
        if (!pg[0]) return;
        const double* av2 = a.data();
        for (std::int64_t i = 0; i < n; ++i) {
            const auto u = static_cast<std::size_t>(i);
            pg[0][i] += g[u] * dfn(y[u], av2[i]);
        }
    };
    return make_result(a.shape(), std::move(out), {a}, std::move(backward));
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values) {
    check_shape_valid(shape);
    if (static_cast<std::int64_t>(values.size()) != shape.numel())
        throw ShapeError("tensor " + to_string(shape) + " needs " + std::to_string(shape.numel()) +
                         " values, got " + std::to_string(values.size()));
    for (double v : values)
        if (!std::isfinite(v)) throw ValidationError("tensor holds a non-finite value");
    shape_ = shape;
    data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return full(shape, 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    check_shape_valid(shape);
    return Tensor(shape, std::vector<double>(static_cast<std::size_t>(shape.numel()), value));
}

Tensor Tensor::scalar(double value) { return full({1, 1, 1, 1}, value); }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor " + to_string(shape_) + " is not a scalar");
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
}

Tensor Tape::watch(const Tensor& t) {
    return emit(t.shape(), std::vector<double>(t.values().begin(), t.values().end()), {},
                BackwardFn{});
}

Tensor Tape::emit(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                  BackwardFn backward) {
    check_shape_valid(shape);
    if (static_cast<std::int64_t>(values.size()) != shape.numel())
        throw ShapeError("emit: " + to_string(shape) + " needs " + std::to_string(shape.numel()) +
                         " values, got " + std::to_string(values.size()));
    Node node;
    node.shape = shape;
    node.parents.reserve(parents.size());
    for (const auto& p : parents) {
        if (p.requires_grad() && p.tape() != this)
            throw ValidationError("emit: parent belongs to a different tape");
        node.parents.push_back(p.requires_grad() ? p.node() : -1);
    }
    node.backward = std::move(backward);
    node.values = std::make_shared<const std::vector<double>>(std::move(values));
    Tensor out;
    out.shape_ = shape;
    out.data_ = node.values;
    out.tape_ = this;
    out.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(node));
    return out;
}

Gradients Tape::backward(const Tensor& loss) const {
    if (loss.tape() != this) throw ValidationError("backward: loss is not on this tape");
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));
    Gradients grads;
    grads.tape_ = this;
    grads.acc_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        grads.acc_[i].assign(static_cast<std::size_t>(nodes_[i].shape.numel()), 0.0);
    std::vector<char> touched(nodes_.size(), 0);
    const int root = loss.node();
    grads.acc_[static_cast<std::size_t>(root)][0] = 1.0;
    touched[static_cast<std::size_t>(root)] = 1;
    std::vector<double*> parent_grads;
    for (int i = root; i >= 0; --i) {
        const auto u = static_cast<std::size_t>(i);
        if (!touched[u] || !nodes_[u].backward) continue;
        const Node& node = nodes_[u];
        parent_grads.clear();
        for (int p : node.parents) {
            if (p < 0) {
                parent_grads.push_back(nullptr);
            } else {
                touched[static_cast<std::size_t>(p)] = 1;
                parent_grads.push_back(grads.acc_[static_cast<std::size_t>(p)].data());
            }
        }
        node.backward(std::span<const double>(*node.values),
                      std::span<const double>(grads.acc_[u]), parent_grads);
    }
    return grads;
}

Tensor Gradients::at(const Tensor& t) const {
    if (t.tape() != tape_ || t.node() < 0)
        throw ValidationError("gradient requested for a tensor that is not on the tape");
    Tensor out;
    out.shape_ = t.shape();
    out.data_ = std::make_shared<const std::vector<double>>(
        acc_[static_cast<std::size_t>(t.node())]);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double g, double, double, double* da, double* db) {
            if (da) *da += g;
            if (db) *db += g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double g, double, double, double* da, double* db) {
            if (da) *da += g;
            if (db) *db -= g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double g, double x, double y, double* da, double* db) {
            if (da) *da += g * y;
            if (db) *db += g * x;
        });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(
        a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
    return unary_op(
        a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::abs(x); },
        [](double, double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& a) {
    for (double v : a.values())
        if (v < 0) throw ValidationError("sqrt: negative input");
    return unary_op(
        a, [](double x) { return std::sqrt(x); }, [](double y, double) { return 0.5 / y; });
}

Tensor reciprocal(const Tensor& a) {
    return unary_op(
        a, [](double x) { return 1.0 / x; }, [](double y, double) { return -y * y; });
}

Tensor square(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x * x; }, [](double, double x) { return 2.0 * x; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double y, double) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x > 0 ? x : 0.0; },
        [](double, double x) { return x > 0 ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary_op(
        a, [floor](double x) { return x > floor ? x : floor; },
        [floor](double, double x) { return x > floor ? 1.0 : 0.0; });
}

Tensor spatial_mean(const Tensor& a) {
    const Shape s = a.shape();
    const std::int64_t hw = s.h * s.w;
    const double* av = a.data();
    std::vector<double> out(static_cast<std::size_t>(s.b * s.c));
    for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
        double acc = 0;
        for (std::int64_t p = 0; p < hw; ++p) acc += av[bc * hw + p];
        out[static_cast<std::size_t>(bc)] = acc / static_cast<double>(hw);
    }
    auto backward = [s, hw](std::span<const double>, std::span<const double> g,
                            const std::vector<double*>& pg) {
        if (!pg[0]) return;
        const double inv = 1.0 / static_cast<double>(hw);
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
            const double gv = g[static_cast<std::size_t>(bc)] * inv;
            for (std::int64_t p = 0; p < hw; ++p) pg[0][bc * hw + p] += gv;
        }
    };
    return make_result({s.b, s.c, 1, 1}, std::move(out), {a}, std::move(backward));
}

Tensor channel_mean(const Tensor& a) {
    const Shape s = a.shape();
    const std::int64_t hw = s.h * s.w;
    const double* av = a.data();
    std::vector<double> out(static_cast<std::size_t>(s.b * hw), 0.0);
    for (std::int64_t bi = 0; bi < s.b; ++bi)
        for (std::int64_t ci = 0; ci < s.c; ++ci)
            for (std::int64_t p = 0; p < hw; ++p)
                out[static_cast<std::size_t>(bi * hw + p)] += av[(bi * s.c + ci) * hw + p];
    const double inv = 1.0 / static_cast<double>(s.c);
    for (auto& v : out) v *= inv;
    auto backward = [s, hw, inv](std::span<const double>, std::span<const double> g,
                                 const std::vector<double*>& pg) {
        if (!pg[0]) return;
        for (std::int64_t bi = 0; bi < s.b; ++bi)
            for (std::int64_t ci = 0; ci < s.c; ++ci)
                for (std::int64_t p = 0; p < hw; ++p)
                    pg[0][(bi * s.c + ci) * hw + p] +=
                        g[static_cast<std::size_t>(bi * hw + p)] * inv;
    };
    return make_result({s.b, 1, s.h, s.w}, std::move(out), {a}, std::move(backward));
}

Tensor sum_all(const Tensor& a) {
    const std::int64_t n = a.numel();
    const double* av = a.data();
    double acc = 0;
    for (std::int64_t i = 0; i < n; ++i) acc += av[i];
    auto backward = [n](std::span<const double>, std::span<const double> g,
                        const std::vector<double*>& pg) {
        if (!pg[0]) return;
        for (std::int64_t i = 0; i < n; ++i) pg[0][i] += g[0];
    };
    return make_result({1, 1, 1, 1}, {acc}, {a}, std::move(backward));
}

Tensor mean_all(const Tensor& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor softmax_spatial(const Tensor& a, const SpatialMask* mask) {
    const Shape s = a.shape();
    if (mask && (mask->b != s.b || mask->h != s.h || mask->w != s.w))
        throw ShapeError("softmax_spatial: mask extents do not match " + to_string(s));
    if (mask && static_cast<std::int64_t>(mask->on.size()) != mask->b * mask->h * mask->w)
        throw ShapeError("softmax_spatial: mask buffer has wrong length");
    const std::int64_t hw = s.h * s.w;
    const double* av = a.data();
    std::vector<double> out(static_cast<std::size_t>(s.numel()), 0.0);
    for (std::int64_t bi = 0; bi < s.b; ++bi) {
        const std::uint8_t* on = mask ? mask->on.data() + bi * hw : nullptr;
        for (std::int64_t ci = 0; ci < s.c; ++ci) {
            const std::int64_t base = (bi * s.c + ci) * hw;
            double mx = -std::numeric_limits<double>::infinity();
            bool any = false;
            for (std::int64_t p = 0; p < hw; ++p) {
                if (on && !on[p]) continue;
                any = true;
                mx = std::max(mx, av[base + p]);
            }
            if (!any) continue;
            double total = 0;
            for (std::int64_t p = 0; p < hw; ++p) {
                if (on && !on[p]) continue;
                const double e = std::exp(av[base + p] - mx);
                out[static_cast<std::size_t>(base + p)] = e;
                total += e;
            }
            const double inv = 1.0 / total;
            for (std::int64_t p = 0; p < hw; ++p) {
                if (on && !on[p]) continue;
                out[static_cast<std::size_t>(base + p)] *= inv;
            }
        }
    }
    // Off-mask outputs are zero, so the Jacobian product below covers both
    // the masked and unmasked cases in one pass.
    auto backward = [s, hw](std::span<const double> y, std::span<const double> g,
                            const std::vector<double*>& pg) {
        if (!pg[0]) return;
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
            const std::int64_t base = bc * hw;
            double dot = 0;
            for (std::int64_t p = 0; p < hw; ++p) {
                const auto u = static_cast<std::size_t>(base + p);
                dot += g[u] * y[u];
            }
            for (std::int64_t p = 0; p < hw; ++p) {
                const auto u = static_cast<std::size_t>(base + p);
                pg[0][base + p] += y[u] * (g[u] - dot);
            }
        }
    };
    return make_result(s, std::move(out), {a}, std::move(backward));
}

Tensor softmax_channel(const Tensor& a) {
    const Shape s = a.shape();
    const std::int64_t hw = s.h * s.w;
    const double* av = a.data();
    std::vector<double> out(static_cast<std::size_t>(s.numel()));
    for (std::int64_t bi = 0; bi < s.b; ++bi)
        for (std::int64_t p = 0; p < hw; ++p) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t ci = 0; ci < s.c; ++ci)
                mx = std::max(mx, av[(bi * s.c + ci) * hw + p]);
            double total = 0;
            for (std::int64_t ci = 0; ci < s.c; ++ci) {
                const double e = std::exp(av[(bi * s.c + ci) * hw + p] - mx);
                out[static_cast<std::size_t>((bi * s.c + ci) * hw + p)] = e;
                total += e;
            }
            const double inv = 1.0 / total;
            for (std::int64_t ci = 0; ci < s.c; ++ci)
                out[static_cast<std::size_t>((bi * s.c + ci) * hw + p)] *= inv;
        }
    auto backward = [s, hw](std::span<const double> y, std::span<const double> g,
                            const std::vector<double*>& pg) {
        if (!pg[0]) return;
        for (std::int64_t bi = 0; bi < s.b; ++bi)
            for (std::int64_t p = 0; p < hw; ++p) {
                double dot = 0;
                for (std::int64_t ci = 0; ci < s.c; ++ci) {
                    const auto u = static_cast<std::size_t>((bi * s.c + ci) * hw + p);
                    dot += g[u] * y[u];
                }
                for (std::int64_t ci = 0; ci < s.c; ++ci) {
                    const auto u = static_cast<std::size_t>((bi * s.c + ci) * hw + p);
                    pg[0][(bi * s.c + ci) * hw + p] += y[u] * (g[u] - dot);
                }
            }
    };
    return make_result(s, std::move(out), {a}, std::move(backward));
}

Tensor conv1x1(const Tensor& t, const Tensor& weight, const Tensor& bias) {
    const Shape s = t.shape();
    if (s.c != 1) throw ShapeError("conv1x1: expected one channel, got " + to_string(s));
    if (weight.numel() != 1 || bias.numel() != 1)
        throw ShapeError("conv1x1: weight and bias must be scalars");
    const double wv = weight.data()[0];
    const double bv = bias.data()[0];
    const std::int64_t n = t.numel();
    const double* tv = t.data();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = wv * tv[i] + bv;
    auto backward = [t, wv, n](std::span<const double>, std::span<const double> g,
                               const std::vector<double*>& pg) {
        const double* tv2 = t.data();
        double dw = 0, db = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double gv = g[static_cast<std::size_t>(i)];
            if (pg[0]) pg[0][i] += gv * wv;
            dw += gv * tv2[i];
            db += gv;
        }
        if (pg[1]) pg[1][0] += dw;
        if (pg[2]) pg[2][0] += db;
    };
    return make_result(s, std::move(out), {t, weight, bias}, std::move(backward));
}

Tensor crop_spatial(const Tensor& a, std::int64_t h0, std::int64_t w0, std::int64_t hh,
                    std::int64_t ww) {
    const Shape s = a.shape();
    if (hh <= 0 || ww <= 0 || h0 < 0 || w0 < 0 || h0 + hh > s.h || w0 + ww > s.w)
        throw ShapeError("crop_spatial: window " + std::to_string(h0) + "+" + std::to_string(hh) +
                         " x " + std::to_string(w0) + "+" + std::to_string(ww) +
                         " leaves tensor " + to_string(s));
    const double* av = a.data();
    std::vector<double> out(static_cast<std::size_t>(s.b * s.c * hh * ww));
    std::int64_t i = 0;
    for (std::int64_t bc = 0; bc < s.b * s.c; ++bc)
        for (std::int64_t hi = 0; hi < hh; ++hi)
            for (std::int64_t wi = 0; wi < ww; ++wi)
                out[static_cast<std::size_t>(i++)] = av[(bc * s.h + h0 + hi) * s.w + w0 + wi];
    auto backward = [s, h0, w0, hh, ww](std::span<const double>, std::span<const double> g,
                                        const std::vector<double*>& pg) {
        if (!pg[0]) return;
        std::int64_t i2 = 0;
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc)
            for (std::int64_t hi = 0; hi < hh; ++hi)
                for (std::int64_t wi = 0; wi < ww; ++wi)
                    pg[0][(bc * s.h + h0 + hi) * s.w + w0 + wi] +=
                        g[static_cast<std::size_t>(i2++)];
    };
    return make_result({s.b, s.c, hh, ww}, std::move(out), {a}, std::move(backward));
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
    if (!(eps > 0)) throw ValidationError("finite_diff_grad: eps must be positive");
    const std::vector<double> base(x.values().begin(), x.values().end());
    std::vector<double> g(base.size());
    std::vector<double> probe = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
        probe[i] = base[i] + eps;
        const double up = f(Tensor(x.shape(), probe));
        probe[i] = base[i] - eps;
        const double down = f(Tensor(x.shape(), probe));
        probe[i] = base[i];
        g[i] = (up - down) / (2.0 * eps);
    }
    return Tensor(x.shape(), std::move(g));
}

}  // namespace dsss
