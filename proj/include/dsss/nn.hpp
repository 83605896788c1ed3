#pragma once

#include "dsss/tensor.hpp"

namespace dsss {

// Zero-padded cross-correlation. weight is [Cout,Cin,kh,kw] (Shape reused
// with b=Cout, c=Cin), bias is [1,Cout,1,1].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad);

// Integer-factor bilinear upsampling, half-pixel-centered sampling with edge
// clamping.
Tensor upsample_bilinear(const Tensor& x, int factor);

// 3x3 Gaussian smoothing with symmetric reflection at the borders; the kernel
// is normalized to unit mass, so symmetric kernels conserve total intensity.
Tensor gaussian_blur3(const Tensor& x, double sigma);

}  // namespace dsss
