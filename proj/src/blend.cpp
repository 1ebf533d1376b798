#include "memc/blend.hpp"

#include "memc/error.hpp"

namespace memc {

namespace {

void check_blend_operands(const Tensor& wp, const Tensor& wn, const Tensor& mp,
                          const Tensor& mn) {
    if (!wp.same_shape(wn)) {
        throw ShapeError("blend: warped frames " + wp.shape_str() + " and " + wn.shape_str() +
                         " differ");
    }
    if (!mp.same_shape(mn)) {
        throw ShapeError("blend: masks " + mp.shape_str() + " and " + mn.shape_str() +
                         " differ");
    }
    if (mp.c() != 1 || mp.n() != wp.n() || mp.h() != wp.h() || mp.w() != wp.w()) {
        throw ShapeError("blend: mask " + mp.shape_str() + " does not broadcast over " +
                         wp.shape_str());
    }
}

} // namespace

Tensor blend_forward(const Tensor& warped_prev, const Tensor& warped_next,
                     const Tensor& mask_prev, const Tensor& mask_next) {
    check_blend_operands(warped_prev, warped_next, mask_prev, mask_next);
    Tensor out(warped_prev.n(), warped_prev.c(), warped_prev.h(), warped_prev.w());
    for (int n = 0; n < out.n(); ++n) {
        for (int c = 0; c < out.c(); ++c) {
            for (int y = 0; y < out.h(); ++y) {
                for (int x = 0; x < out.w(); ++x) {
                    out.at(n, c, y, x) = mask_prev.at(n, 0, y, x) * warped_prev.at(n, c, y, x) +
                                         mask_next.at(n, 0, y, x) * warped_next.at(n, c, y, x);
                }
            }
        }
    }
    return out;
}

BlendGrads blend_backward(const Tensor& warped_prev, const Tensor& warped_next,
                          const Tensor& mask_prev, const Tensor& mask_next,
                          const Tensor& grad_out) {
    check_blend_operands(warped_prev, warped_next, mask_prev, mask_next);
    if (!grad_out.same_shape(warped_prev)) {
        throw ShapeError("blend_backward: grad_out " + grad_out.shape_str() +
                         " does not match " + warped_prev.shape_str());
    }
    BlendGrads g;
    g.warped_prev = Tensor(warped_prev.n(), warped_prev.c(), warped_prev.h(), warped_prev.w());
    g.warped_next = g.warped_prev;
    g.mask_prev = Tensor(mask_prev.n(), 1, mask_prev.h(), mask_prev.w());
    g.mask_next = g.mask_prev;
    for (int n = 0; n < grad_out.n(); ++n) {
        for (int c = 0; c < grad_out.c(); ++c) {
            for (int y = 0; y < grad_out.h(); ++y) {
                for (int x = 0; x < grad_out.w(); ++x) {
                    const double go = grad_out.at(n, c, y, x);
                    g.warped_prev.at(n, c, y, x) = mask_prev.at(n, 0, y, x) * go;
                    g.warped_next.at(n, c, y, x) = mask_next.at(n, 0, y, x) * go;
                    g.mask_prev.at(n, 0, y, x) += go * warped_prev.at(n, c, y, x);
                    g.mask_next.at(n, 0, y, x) += go * warped_next.at(n, c, y, x);
                }
            }
        }
    }
    return g;
}

} // namespace memc

namespace memc::ad {

Value blend(const Value& warped_prev, const Value& warped_next, const Value& mask_prev,
            const Value& mask_next) {
    Tensor out = blend_forward(warped_prev.tensor(), warped_next.tensor(), mask_prev.tensor(),
                               mask_next.tensor());
    auto node = std::make_shared<Node>();
    node->value = std::move(out);
    node->inputs = {warped_prev.node(), warped_next.node(), mask_prev.node(),
                    mask_next.node()};
    for (const NodePtr& in : node->inputs) {
        if (in->requires_grad) {
            node->requires_grad = true;
        }
    }
    node->backprop = [](Node& self) {
        BlendGrads g = blend_backward(self.inputs[0]->value, self.inputs[1]->value,
                                      self.inputs[2]->value, self.inputs[3]->value, self.grad);
        accumulate_grad(*self.inputs[0], g.warped_prev);
        accumulate_grad(*self.inputs[1], g.warped_next);
        accumulate_grad(*self.inputs[2], g.mask_prev);
        accumulate_grad(*self.inputs[3], g.mask_next);
    };
    return Value(node);
}

Value memc_loss(const Value& final, const Value& blended, const Value& gt,
                const Value& mask_prev, const Value& mask_next, double alpha, double beta,
                double eps) {
    const Value final_term = charbonnier_sum(sub(final, gt), eps);
    const Value blend_term = charbonnier_sum(sub(blended, gt), eps);
    const Tensor& mp = mask_prev.tensor();
    const Value mask_sum = add(mask_prev, mask_next);
    const Value mask_residual =
        sub(mask_sum, constant(Tensor::full(mp.n(), mp.c(), mp.h(), mp.w(), 1.0)));
    const Value mask_term = charbonnier_sum(mask_residual, eps);
    return add(final_term, add(scale(blend_term, alpha), scale(mask_term, beta)));
}

} // namespace memc::ad
