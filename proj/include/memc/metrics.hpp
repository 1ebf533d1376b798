// Image quality metrics: PSNR, single-scale SSIM, and Middlebury-style
// interpolation error (RMSE on the 0-255 scale).

#pragma once

#include "memc/tensor.hpp"

namespace memc {

struct MetricReport {
    double psnr; // dB; +inf iff the tensors are equal
    double ssim; // unitless, <= 1
    double ie;   // RMSE on the 0-255 scale
};

// 10*log10(peak^2 / MSE); +infinity when MSE is zero.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Single-scale SSIM on [0,1] images: 11x11 Gaussian window (sigma 1.5),
// C1=0.01^2, C2=0.03^2, mean over valid (unpadded) windows, channel-averaged.
double ssim(const Tensor& a, const Tensor& b);

// sqrt(mean((255a - 255b)^2)) over all elements.
double interpolation_error(const Tensor& a, const Tensor& b);

MetricReport compare_images(const Tensor& a, const Tensor& b);

} // namespace memc
