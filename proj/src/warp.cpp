#include "memc/warp.hpp"

#include <cmath>

#include "memc/error.hpp"

namespace memc {

namespace {

void check_flow(const FlowField& flow, const char* op) {
    if (flow.c() != 2) {
        throw ShapeError(std::string(op) + ": flow must have 2 channels, got " +
                         flow.shape_str());
    }
    if (!flow.all_finite()) {
        throw NumericError(std::string(op) + ": flow field contains non-finite values");
    }
}

int kernel_window(const KernelField& kernels, const char* op) {
    const int c = kernels.c();
    int k = 2;
    while (k * k < c) {
        k += 2;
    }
    if (k * k != c) {
        throw ShapeError(std::string(op) + ": kernel channel count " + std::to_string(c) +
                         " is not the square of an even window side");
    }
    return k;
}

void check_warp_operands(const Tensor& image, const FlowField& flow, const KernelField& kernels,
                         const char* op) {
    check_flow(flow, op);
    if (image.n() != flow.n() || image.h() != flow.h() || image.w() != flow.w()) {
        throw ShapeError(std::string(op) + ": image " + image.shape_str() +
                         " and flow " + flow.shape_str() + " disagree");
    }
    if (image.n() != kernels.n() || image.h() != kernels.h() || image.w() != kernels.w()) {
        throw ShapeError(std::string(op) + ": image " + image.shape_str() +
                         " and kernels " + kernels.shape_str() + " disagree");
    }
}

inline int clamp_coord(int v, int hi) {
    if (v < 0) {
        return 0;
    }
    if (v > hi) {
        return hi;
    }
    return v;
}

// Bilinear coefficient of the quadrant containing tap (ru, rv).
inline double bilinear_coeff(int ru, int rv, double theta_u, double theta_v) {
    const double wu = ru <= 0 ? 1.0 - theta_u : theta_u;
    const double wv = rv <= 0 ? 1.0 - theta_v : theta_v;
    return wu * wv;
}

// d k^d / du and d k^d / dv for the quadrant containing tap (ru, rv).
inline double bilinear_coeff_du(int ru, int rv, double theta_v) {
    const double sign_u = ru <= 0 ? -1.0 : 1.0;
    return sign_u * (rv <= 0 ? 1.0 - theta_v : theta_v);
}

inline double bilinear_coeff_dv(int ru, int rv, double theta_u) {
    const double sign_v = rv <= 0 ? -1.0 : 1.0;
    return sign_v * (ru <= 0 ? 1.0 - theta_u : theta_u);
}

} // namespace

Tensor make_bilinear_coefficients(const FlowField& flow, int k) {
    check_flow(flow, "make_bilinear_coefficients");
    if (k < 2 || k % 2 != 0) {
        throw ShapeError("make_bilinear_coefficients: window side must be even and >= 2, got " +
                         std::to_string(k));
    }
    Tensor out(flow.n(), k * k, flow.h(), flow.w());
    for (int n = 0; n < flow.n(); ++n) {
        for (int y = 0; y < flow.h(); ++y) {
            for (int x = 0; x < flow.w(); ++x) {
                const double u = flow.at(n, 0, y, x);
                const double v = flow.at(n, 1, y, x);
                const double theta_u = u - std::floor(u);
                const double theta_v = v - std::floor(v);
                for (int c = 0; c < k * k; ++c) {
                    out.at(n, c, y, x) =
                        bilinear_coeff(tap_u(c, k), tap_v(c, k), theta_u, theta_v);
                }
            }
        }
    }
    return out;
}

Tensor adaptive_warp_forward(const Tensor& image, const FlowField& flow,
                             const KernelField& kernels) {
    check_warp_operands(image, flow, kernels, "adaptive_warp");
    const int k = kernel_window(kernels, "adaptive_warp");
    const int h = image.h();
    const int w = image.w();
    Tensor out(image.n(), image.c(), h, w);
    for (int n = 0; n < image.n(); ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double u = flow.at(n, 0, y, x);
                const double v = flow.at(n, 1, y, x);
                const int fu = static_cast<int>(std::floor(u));
                const int fv = static_cast<int>(std::floor(v));
                const double theta_u = u - std::floor(u);
                const double theta_v = v - std::floor(v);
                for (int c = 0; c < k * k; ++c) {
                    const int ru = tap_u(c, k);
                    const int rv = tap_v(c, k);
                    const double weight = kernels.at(n, c, y, x) *
                                          bilinear_coeff(ru, rv, theta_u, theta_v);
                    if (weight == 0.0) {
                        continue;
                    }
                    const int sx = clamp_coord(x + fu + ru, w - 1);
                    const int sy = clamp_coord(y + fv + rv, h - 1);
                    for (int cc = 0; cc < image.c(); ++cc) {
                        out.at(n, cc, y, x) += weight * image.at(n, cc, sy, sx);
                    }
                }
            }
        }
    }
    return out;
}

WarpGrads adaptive_warp_backward(const Tensor& image, const FlowField& flow,
                                 const KernelField& kernels, const Tensor& grad_out) {
    check_warp_operands(image, flow, kernels, "adaptive_warp_backward");
    if (!grad_out.same_shape(image)) {
        throw ShapeError("adaptive_warp_backward: grad_out " + grad_out.shape_str() +
                         " does not match image " + image.shape_str());
    }
    const int k = kernel_window(kernels, "adaptive_warp_backward");
    const int h = image.h();
    const int w = image.w();
    WarpGrads grads;
    grads.image = Tensor(image.n(), image.c(), h, w);
    grads.flow = Tensor(flow.n(), 2, h, w);
    grads.kernels = Tensor(kernels.n(), k * k, h, w);

    for (int n = 0; n < image.n(); ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double u = flow.at(n, 0, y, x);
                const double v = flow.at(n, 1, y, x);
                const int fu = static_cast<int>(std::floor(u));
                const int fv = static_cast<int>(std::floor(v));
                const double theta_u = u - std::floor(u);
                const double theta_v = v - std::floor(v);
                double grad_u = 0.0;
                double grad_v = 0.0;
                for (int c = 0; c < k * k; ++c) {
                    const int ru = tap_u(c, k);
                    const int rv = tap_v(c, k);
                    const double kl = kernels.at(n, c, y, x);
                    const double kd = bilinear_coeff(ru, rv, theta_u, theta_v);
                    const double dkd_du = bilinear_coeff_du(ru, rv, theta_v);
                    const double dkd_dv = bilinear_coeff_dv(ru, rv, theta_u);
                    const int sx = clamp_coord(x + fu + ru, w - 1);
                    const int sy = clamp_coord(y + fv + rv, h - 1);
                    double dot = 0.0; // sum over channels of grad_out * sampled pixel
                    for (int cc = 0; cc < image.c(); ++cc) {
                        const double g = grad_out.at(n, cc, y, x);
                        dot += g * image.at(n, cc, sy, sx);
                        grads.image.at(n, cc, sy, sx) += kl * kd * g;
                    }
                    grads.kernels.at(n, c, y, x) = kd * dot;
                    grad_u += kl * dkd_du * dot;
                    grad_v += kl * dkd_dv * dot;
                }
                grads.flow.at(n, 0, y, x) = grad_u;
                grads.flow.at(n, 1, y, x) = grad_v;
            }
        }
    }
    return grads;
}

Tensor bilinear_warp(const Tensor& image, const FlowField& flow) {
    KernelField ones = Tensor::full(image.n(), 4, image.h(), image.w(), 1.0);
    return adaptive_warp_forward(image, flow, ones);
}

ImageFlowGrads bilinear_warp_backward(const Tensor& image, const FlowField& flow,
                                      const Tensor& grad_out) {
    KernelField ones = Tensor::full(image.n(), 4, image.h(), image.w(), 1.0);
    WarpGrads grads = adaptive_warp_backward(image, flow, ones, grad_out);
    return {std::move(grads.image), std::move(grads.flow)};
}

Tensor local_conv_forward(const Tensor& image, const KernelField& kernels) {
    if (image.n() != kernels.n() || image.h() != kernels.h() || image.w() != kernels.w()) {
        throw ShapeError("local_conv: image " + image.shape_str() + " and kernels " +
                         kernels.shape_str() + " disagree");
    }
    const int k = kernel_window(kernels, "local_conv");
    const int h = image.h();
    const int w = image.w();
    Tensor out(image.n(), image.c(), h, w);
    for (int n = 0; n < image.n(); ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < k * k; ++c) {
                    const double weight = kernels.at(n, c, y, x);
                    if (weight == 0.0) {
                        continue;
                    }
                    const int sx = clamp_coord(x + tap_u(c, k), w - 1);
                    const int sy = clamp_coord(y + tap_v(c, k), h - 1);
                    for (int cc = 0; cc < image.c(); ++cc) {
                        out.at(n, cc, y, x) += weight * image.at(n, cc, sy, sx);
                    }
                }
            }
        }
    }
    return out;
}

ImageKernelGrads local_conv_backward(const Tensor& image, const KernelField& kernels,
                                     const Tensor& grad_out) {
    if (image.n() != kernels.n() || image.h() != kernels.h() || image.w() != kernels.w()) {
        throw ShapeError("local_conv_backward: image " + image.shape_str() + " and kernels " +
                         kernels.shape_str() + " disagree");
    }
    if (!grad_out.same_shape(image)) {
        throw ShapeError("local_conv_backward: grad_out " + grad_out.shape_str() +
                         " does not match image " + image.shape_str());
    }
    const int k = kernel_window(kernels, "local_conv_backward");
    const int h = image.h();
    const int w = image.w();
    ImageKernelGrads grads;
    grads.image = Tensor(image.n(), image.c(), h, w);
    grads.kernels = Tensor(kernels.n(), k * k, h, w);
    for (int n = 0; n < image.n(); ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < k * k; ++c) {
                    const int sx = clamp_coord(x + tap_u(c, k), w - 1);
                    const int sy = clamp_coord(y + tap_v(c, k), h - 1);
                    const double kl = kernels.at(n, c, y, x);
                    double dot = 0.0;
                    for (int cc = 0; cc < image.c(); ++cc) {
                        const double g = grad_out.at(n, cc, y, x);
                        dot += g * image.at(n, cc, sy, sx);
                        grads.image.at(n, cc, sy, sx) += kl * g;
                    }
                    grads.kernels.at(n, c, y, x) = dot;
                }
            }
        }
    }
    return grads;
}

} // namespace memc

namespace memc::ad {

namespace {

NodePtr link(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->inputs = std::move(inputs);
    node->backprop = std::move(backprop);
    for (const NodePtr& in : node->inputs) {
        if (in->requires_grad) {
            node->requires_grad = true;
        }
    }
    return node;
}

} // namespace

Value adaptive_warp(const Value& image, const Value& flow, const Value& kernels) {
    Tensor out = adaptive_warp_forward(image.tensor(), flow.tensor(), kernels.tensor());
    return Value(link(std::move(out), {image.node(), flow.node(), kernels.node()},
                      [](Node& self) {
                          WarpGrads g = adaptive_warp_backward(
                              self.inputs[0]->value, self.inputs[1]->value,
                              self.inputs[2]->value, self.grad);
                          accumulate_grad(*self.inputs[0], g.image);
                          accumulate_grad(*self.inputs[1], g.flow);
                          accumulate_grad(*self.inputs[2], g.kernels);
                      }));
}

Value bilinear_warp(const Value& image, const Value& flow) {
    Tensor out = memc::bilinear_warp(image.tensor(), flow.tensor());
    return Value(link(std::move(out), {image.node(), flow.node()}, [](Node& self) {
        ImageFlowGrads g = bilinear_warp_backward(self.inputs[0]->value,
                                                  self.inputs[1]->value, self.grad);
        accumulate_grad(*self.inputs[0], g.image);
        accumulate_grad(*self.inputs[1], g.flow);
    }));
}

Value local_conv(const Value& image, const Value& kernels) {
    Tensor out = local_conv_forward(image.tensor(), kernels.tensor());
    return Value(link(std::move(out), {image.node(), kernels.node()}, [](Node& self) {
        ImageKernelGrads g = local_conv_backward(self.inputs[0]->value,
                                                 self.inputs[1]->value, self.grad);
        accumulate_grad(*self.inputs[0], g.image);
        accumulate_grad(*self.inputs[1], g.kernels);
    }));
}

} // namespace memc::ad
