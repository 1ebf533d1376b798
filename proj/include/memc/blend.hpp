// Occlusion-mask blending of the two warped frames and the composite
// training loss built from Charbonnier penalties.

#pragma once

#include "memc/autodiff.hpp"
#include "memc/tensor.hpp"

namespace memc {

struct BlendGrads {
    Tensor warped_prev;
    Tensor warped_next;
    Tensor mask_prev;
    Tensor mask_next;
};

// out = M_prev * warped_prev + M_next * warped_next, with the single-channel
// masks broadcast over the image channels.
Tensor blend_forward(const Tensor& warped_prev, const Tensor& warped_next,
                     const Tensor& mask_prev, const Tensor& mask_next);
BlendGrads blend_backward(const Tensor& warped_prev, const Tensor& warped_next,
                          const Tensor& mask_prev, const Tensor& mask_next,
                          const Tensor& grad_out);

} // namespace memc

namespace memc::ad {

Value blend(const Value& warped_prev, const Value& warped_next, const Value& mask_prev,
            const Value& mask_next);

// Composite loss:
//   sum Phi(final - gt) + alpha * sum Phi(blended - gt)
//     + beta * sum Phi(mask_prev + mask_next - 1)
// with Phi the Charbonnier penalty sqrt(x^2 + eps^2).
Value memc_loss(const Value& final, const Value& blended, const Value& gt,
                const Value& mask_prev, const Value& mask_next, double alpha, double beta,
                double eps);

} // namespace memc::ad
