// Flow projection layer: approximates the flow from the (nonexistent)
// intermediate frame to a reference frame by halving and inverting the flow
// between the two reference frames. Colliding vectors are averaged; pixels
// that receive no vector are holes, filled outside-in from the 4-directional
// nearest non-hole neighbors.

#pragma once

#include "memc/warp.hpp"

namespace memc {

struct ProjectionResult {
    FlowField flow;   // projected (and hole-filled) flow, n x 2 x H x W
    Tensor count;     // |S(x)| per pixel before filling, n x 1 x H x W
    Tensor hole_mask; // 1.0 where count == 0 before filling, else 0.0
};

// Forward pass: each source pixel y scatters -flow_in(y)/2 to the target
// round(y + flow_in(y)/2); out-of-frame targets are discarded; collisions
// average. round is half-away-from-zero, componentwise. Source traversal is
// row-major; batches are independent.
ProjectionResult project_flow(const FlowField& flow_in);

// Fills each hole with the mean of the first pre-fill non-hole pixel found
// scanning left/right/up/down (1-4 vectors; zero vector if the whole image
// is holes). Only pre-fill values are read, so filling is order-independent.
FlowField fill_holes_outside_in(const FlowField& flow, const Tensor& hole_mask);

// Backward pass: grad_flow_in(y) = -grad_out(x_y) / (2 |S(x_y)|) where x_y is
// y's in-frame target; zero for discarded contributions. Hole-filled pixels
// propagate no gradient, and the rounding is treated as locally constant.
FlowField project_flow_backward(const FlowField& flow_in, const ProjectionResult& result,
                                const FlowField& grad_out);

} // namespace memc

#include "memc/autodiff.hpp"

namespace memc::ad {

// Tape-level projection; optionally exposes the pre-fill count and hole mask.
Value project_flow(const Value& flow_in, memc::ProjectionResult* side = nullptr);

} // namespace memc::ad
