#include "dsss/nn.hpp"

#include <cmath>

namespace dsss {

namespace {

// x laid out [B,Cin,H,W] -> [B,Cin,H+2p,W+2p] with zero borders.
std::vector<double> pad_input(const Tensor& x, int pad) {
    const Shape s = x.shape();
    const std::int64_t hp = s.h + 2 * pad;
    const std::int64_t wp = s.w + 2 * pad;
    std::vector<double> out(static_cast<std::size_t>(s.b * s.c * hp * wp), 0.0);
    const double* xv = x.data();
    for (std::int64_t bc = 0; bc < s.b * s.c; ++bc)
        for (std::int64_t hi = 0; hi < s.h; ++hi) {
            const double* src = xv + (bc * s.h + hi) * s.w;
            double* dst = out.data() + (bc * hp + hi + pad) * wp + pad;
            for (std::int64_t wi = 0; wi < s.w; ++wi) dst[wi] = src[wi];
        }
    return out;
}

std::int64_t reflect(std::int64_t i, std::int64_t n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - 1 - i;
    return i;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();  // [Cout,Cin,kh,kw]
    if (xs.c != ws.c)
        throw ShapeError("conv2d: input channels " + std::to_string(xs.c) +
                         " != weight channels " + std::to_string(ws.c));
    if (bias.shape() != Shape{1, ws.b, 1, 1})
        throw ShapeError("conv2d: bias must be [1," + std::to_string(ws.b) + ",1,1], got " +
                         to_string(bias.shape()));
    if (stride < 1 || pad < 0) throw ValidationError("conv2d: bad stride or padding");
    const std::int64_t co = ws.b, ci = ws.c, kh = ws.h, kw = ws.w;
    const std::int64_t hp = xs.h + 2 * pad, wp = xs.w + 2 * pad;
    const std::int64_t oh = (hp - kh) / stride + 1;
    const std::int64_t ow = (wp - kw) / stride + 1;
    if (hp < kh || wp < kw)
        throw ShapeError("conv2d: kernel larger than padded input " + to_string(xs));

    const std::vector<double> xpad = pad_input(x, pad);
    const double* wv = weight.data();
    const double* bv = bias.data();
    std::vector<double> out(static_cast<std::size_t>(xs.b * co * oh * ow));
    for (std::int64_t b = 0; b < xs.b; ++b)
        for (std::int64_t o = 0; o < co; ++o) {
            double* oplane = out.data() + (b * co + o) * oh * ow;
            const double b0 = bv[o];
            for (std::int64_t p = 0; p < oh * ow; ++p) oplane[p] = b0;
            for (std::int64_t c = 0; c < ci; ++c)
                for (std::int64_t i = 0; i < kh; ++i)
                    for (std::int64_t j = 0; j < kw; ++j) {
                        const double wk = wv[((o * ci + c) * kh + i) * kw + j];
                        for (std::int64_t y = 0; y < oh; ++y) {
                            const double* row =
                                xpad.data() + ((b * ci + c) * hp + y * stride + i) * wp + j;
                            double* orow = oplane + y * ow;
                            if (stride == 1) {
                                for (std::int64_t xw = 0; xw < ow; ++xw) orow[xw] += wk * row[xw];
                            } else {
                                for (std::int64_t xw = 0; xw < ow; ++xw)
                                    orow[xw] += wk * row[xw * stride];
                            }
                        }
                    }
        }

    auto backward = [x, weight, xs, co, ci, kh, kw, hp, wp, oh, ow, stride,
                     pad](std::span<const double>, std::span<const double> g,
                          const std::vector<double*>& pg) {
        const std::vector<double> xpad2 = pad_input(x, pad);
        const double* wv2 = weight.data();
        std::vector<double> dxpad;
        if (pg[0]) dxpad.assign(static_cast<std::size_t>(xs.b * ci * hp * wp), 0.0);
        for (std::int64_t b = 0; b < xs.b; ++b)
            for (std::int64_t o = 0; o < co; ++o) {
                const double* gplane = g.data() + (b * co + o) * oh * ow;
                if (pg[2]) {
                    double db = 0;
                    for (std::int64_t p = 0; p < oh * ow; ++p) db += gplane[p];
                    pg[2][o] += db;
                }
                for (std::int64_t c = 0; c < ci; ++c)
                    for (std::int64_t i = 0; i < kh; ++i)
                        for (std::int64_t j = 0; j < kw; ++j) {
                            const std::int64_t widx = ((o * ci + c) * kh + i) * kw + j;
                            const double wk = wv2[widx];
                            double dw = 0;
                            for (std::int64_t y = 0; y < oh; ++y) {
                                const std::int64_t roff =
                                    ((b * ci + c) * hp + y * stride + i) * wp + j;
                                const double* xrow = xpad2.data() + roff;
                                const double* grow = gplane + y * ow;
                                if (pg[0]) {
                                    double* dxrow = dxpad.data() + roff;
                                    for (std::int64_t xw = 0; xw < ow; ++xw) {
                                        const double gv = grow[xw];
                                        dxrow[xw * stride] += wk * gv;
                                        dw += gv * xrow[xw * stride];
                                    }
                                } else {
                                    for (std::int64_t xw = 0; xw < ow; ++xw)
                                        dw += grow[xw] * xrow[xw * stride];
                                }
                            }
                            if (pg[1]) pg[1][widx] += dw;
                        }
            }
        if (pg[0]) {
            for (std::int64_t bc = 0; bc < xs.b * ci; ++bc)
                for (std::int64_t hi = 0; hi < xs.h; ++hi) {
                    const double* src = dxpad.data() + (bc * hp + hi + pad) * wp + pad;
                    double* dst = pg[0] + (bc * xs.h + hi) * xs.w;
                    for (std::int64_t wi = 0; wi < xs.w; ++wi) dst[wi] += src[wi];
                }
        }
    };

    Tape* tape = nullptr;
    for (const Tensor* t : {&x, &weight, &bias})
        if (t->requires_grad()) tape = t->tape();
    if (!tape) return Tensor({xs.b, co, oh, ow}, std::move(out));
    return tape->emit({xs.b, co, oh, ow}, std::move(out), {x, weight, bias}, std::move(backward));
}

Tensor upsample_bilinear(const Tensor& x, int factor) {
    if (factor < 1) throw ValidationError("upsample_bilinear: factor must be >= 1");
    const Shape s = x.shape();
    const std::int64_t oh = s.h * factor, ow = s.w * factor;

    struct Axis {
        std::vector<std::int64_t> i0, i1;
        std::vector<double> t;  // weight of i1
    };
    auto build = [factor](std::int64_t n, std::int64_t on) {
        Axis a;
        a.i0.resize(static_cast<std::size_t>(on));
        a.i1.resize(static_cast<std::size_t>(on));
        a.t.resize(static_cast<std::size_t>(on));
        for (std::int64_t d = 0; d < on; ++d) {
            const double src = (d + 0.5) / factor - 0.5;
            double lo = std::floor(src);
            double t = src - lo;
            std::int64_t i0 = static_cast<std::int64_t>(lo);
            if (i0 < 0) {
                i0 = 0;
                t = 0;
            }
            std::int64_t i1 = i0 + 1;
            if (i1 > n - 1) {
                i1 = n - 1;
                if (i0 > n - 1) i0 = n - 1;
                if (i0 == i1) t = 0;
            }
            a.i0[static_cast<std::size_t>(d)] = i0;
            a.i1[static_cast<std::size_t>(d)] = i1;
            a.t[static_cast<std::size_t>(d)] = t;
        }
        return a;
    };
    const Axis ay = build(s.h, oh);
    const Axis ax = build(s.w, ow);

    const double* xv = x.data();
    std::vector<double> out(static_cast<std::size_t>(s.b * s.c * oh * ow));
    for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const double* plane = xv + bc * s.h * s.w;
        double* oplane = out.data() + bc * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
            const auto uy = static_cast<std::size_t>(y);
            const double ty = ay.t[uy];
            const double* r0 = plane + ay.i0[uy] * s.w;
            const double* r1 = plane + ay.i1[uy] * s.w;
            for (std::int64_t xw = 0; xw < ow; ++xw) {
                const auto ux = static_cast<std::size_t>(xw);
                const double tx = ax.t[ux];
                const double v0 = r0[ax.i0[ux]] * (1 - tx) + r0[ax.i1[ux]] * tx;
                const double v1 = r1[ax.i0[ux]] * (1 - tx) + r1[ax.i1[ux]] * tx;
                oplane[y * ow + xw] = v0 * (1 - ty) + v1 * ty;
            }
        }
    }

    auto backward = [s, oh, ow, ay, ax](std::span<const double>, std::span<const double> g,
                                        const std::vector<double*>& pg) {
        if (!pg[0]) return;
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
            double* dplane = pg[0] + bc * s.h * s.w;
            const double* gplane = g.data() + bc * oh * ow;
            for (std::int64_t y = 0; y < oh; ++y) {
                const auto uy = static_cast<std::size_t>(y);
                const double ty = ay.t[uy];
                double* d0 = dplane + ay.i0[uy] * s.w;
                double* d1 = dplane + ay.i1[uy] * s.w;
                for (std::int64_t xw = 0; xw < ow; ++xw) {
                    const auto ux = static_cast<std::size_t>(xw);
                    const double tx = ax.t[ux];
                    const double gv = gplane[y * ow + xw];
                    d0[ax.i0[ux]] += gv * (1 - ty) * (1 - tx);
                    d0[ax.i1[ux]] += gv * (1 - ty) * tx;
                    d1[ax.i0[ux]] += gv * ty * (1 - tx);
                    d1[ax.i1[ux]] += gv * ty * tx;
                }
            }
        }
    };

    if (!x.requires_grad()) return Tensor({s.b, s.c, oh, ow}, std::move(out));
    return x.tape()->emit({s.b, s.c, oh, ow}, std::move(out), {x}, std::move(backward));
}

Tensor gaussian_blur3(const Tensor& x, double sigma) {
    if (!(sigma > 0)) throw ValidationError("gaussian_blur3: sigma must be positive");
    const Shape s = x.shape();
    double k[3][3];
    double total = 0;
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
            const double v = std::exp(-(i * i + j * j) / (2 * sigma * sigma));
            k[i + 1][j + 1] = v;
            total += v;
        }
    for (auto& row : k)
        for (auto& v : row) v /= total;

    const double* xv = x.data();
    std::vector<double> out(static_cast<std::size_t>(s.numel()), 0.0);
    for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
        const double* plane = xv + bc * s.h * s.w;
        double* oplane = out.data() + bc * s.h * s.w;
        for (std::int64_t y = 0; y < s.h; ++y)
            for (std::int64_t xw = 0; xw < s.w; ++xw) {
                double acc = 0;
                for (int i = -1; i <= 1; ++i)
                    for (int j = -1; j <= 1; ++j)
                        acc += k[i + 1][j + 1] *
                               plane[reflect(y + i, s.h) * s.w + reflect(xw + j, s.w)];
                oplane[y * s.w + xw] = acc;
            }
    }

    std::vector<double> kernel(&k[0][0], &k[0][0] + 9);
    auto backward = [s, kernel](std::span<const double>, std::span<const double> g,
                                const std::vector<double*>& pg) {
        if (!pg[0]) return;
        for (std::int64_t bc = 0; bc < s.b * s.c; ++bc) {
            double* dplane = pg[0] + bc * s.h * s.w;
            const double* gplane = g.data() + bc * s.h * s.w;
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t xw = 0; xw < s.w; ++xw) {
                    const double gv = gplane[y * s.w + xw];
                    for (int i = -1; i <= 1; ++i)
                        for (int j = -1; j <= 1; ++j)
                            dplane[reflect(y + i, s.h) * s.w + reflect(xw + j, s.w)] +=
                                kernel[static_cast<std::size_t>((i + 1) * 3 + j + 1)] * gv;
                }
        }
    };

    if (!x.requires_grad()) return Tensor(s, std::move(out));
    return x.tape()->emit(s, std::move(out), {x}, std::move(backward));
}

}  // namespace dsss
