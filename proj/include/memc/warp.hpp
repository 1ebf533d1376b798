// Adaptive warping layer: samples an image through per-pixel optical flow
// combined with per-pixel learned interpolation kernels, with analytic
// gradients to the image, the flow, and the kernels.
//
// Conventions: flow is n x 2 x H x W with channel 0 = u (+right) and
// channel 1 = v (+down), in pixels. A kernel field is n x K^2 x H x W,
// K even; channel c covers tap r = (r_u, r_v) with r_u = c % K - (K/2 - 1)
// and r_v = c / K - (K/2 - 1), row-major over the K x K window so taps span
// {-K/2+1, ..., K/2} per axis. Out-of-bounds samples clamp to the border.

#pragma once

#include "memc/tensor.hpp"

namespace memc {

using FlowField = Tensor;   // n x 2 x H x W
using KernelField = Tensor; // n x K^2 x H x W

struct WarpGrads {
    Tensor image;
    FlowField flow;
    KernelField kernels;
};

struct ImageFlowGrads {
    Tensor image;
    FlowField flow;
};

struct ImageKernelGrads {
    Tensor image;
    KernelField kernels;
};

// Horizontal/vertical tap offset for kernel-field channel c.
inline int tap_u(int c, int k) { return c % k - (k / 2 - 1); }
inline int tap_v(int c, int k) { return c / k - (k / 2 - 1); }

// Quadrant-replicated bilinear coefficients k^d derived from the fractional
// part of the flow. frac uses floor-toward--inf semantics, so negative flow
// is handled continuously (frac(-0.25) = 0.75).
Tensor make_bilinear_coefficients(const FlowField& flow, int k);

// out(x) = sum_r k^l_r(x) * k^d_r(x) * I(clamp(x + floor(f(x)) + r)),
// applied independently per image channel.
Tensor adaptive_warp_forward(const Tensor& image, const FlowField& flow,
                             const KernelField& kernels);

// Analytic gradients of the warp. The floor(f) term is treated as locally
// constant; grad_image is a scatter-accumulate into the sampled (clamped)
// source locations.
WarpGrads adaptive_warp_backward(const Tensor& image, const FlowField& flow,
                                 const KernelField& kernels, const Tensor& grad_out);

// Pure bilinear warp: the K=2 special case with unit learned kernels.
Tensor bilinear_warp(const Tensor& image, const FlowField& flow);
ImageFlowGrads bilinear_warp_backward(const Tensor& image, const FlowField& flow,
                                      const Tensor& grad_out);

// Per-pixel kernel convolution over the K x K tap window with no flow and no
// bilinear masking: out(x) = sum_r k_r(x) * I(clamp(x + r)). Used by the
// sequential interpolation mode to apply kernels to pre-warped frames.
Tensor local_conv_forward(const Tensor& image, const KernelField& kernels);
ImageKernelGrads local_conv_backward(const Tensor& image, const KernelField& kernels,
                                     const Tensor& grad_out);

} // namespace memc

#include "memc/autodiff.hpp"

namespace memc::ad {

// Tape-level wrappers around the warp layer.
Value adaptive_warp(const Value& image, const Value& flow, const Value& kernels);
Value bilinear_warp(const Value& image, const Value& flow);
Value local_conv(const Value& image, const Value& kernels);

} // namespace memc::ad
