#include "memc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "memc/autodiff.hpp"
#include "memc/blend.hpp"
#include "memc/pipeline.hpp"
#include "memc/projection.hpp"
#include "memc/rng.hpp"
#include "memc/tensor.hpp"
#include "memc/warp.hpp"

namespace memc {

double gradient_rel_err(double analytic, double numeric, double floor) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return std::fabs(analytic - numeric) / denom;
}

namespace {

Tensor random_tensor(int n, int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(lo, hi);
    }
    return t;
}

// Flow whose fractional parts stay inside [0.2, 0.8], keeping finite
// differences away from the floor discontinuity.
FlowField random_safe_flow(int n, int h, int w, Rng& rng) {
    FlowField flow(n, 2, h, w);
    for (std::size_t i = 0; i < flow.size(); ++i) {
        flow[i] = rng.uniform_int(-2, 1) + rng.uniform(0.2, 0.8);
    }
    return flow;
}

// Central difference of a scalar functional with respect to one coordinate
// of a tensor operand.
double central_diff(Tensor& operand, std::size_t index, double step,
                    const std::function<double()>& eval) {
    const double saved = operand[index];
    operand[index] = saved + step;
    const double up = eval();
    operand[index] = saved - step;
    const double down = eval();
    operand[index] = saved;
    return (up - down) / (2.0 * step);
}

double weighted_sum(const Tensor& values, const Tensor& weights) {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += values[i] * weights[i];
    }
    return acc;
}

// Near-zero entries are judged against the gradient tensor's own scale, so
// finite-difference rounding noise does not register as relative error.
double scaled_floor(const Tensor& analytic) {
    return 1e-6 * std::max(1.0, max_abs(analytic));
}

double max_grad_err(const Tensor& analytic, Tensor& operand, double step,
                    const std::function<double()>& eval) {
    const double floor = scaled_floor(analytic);
    double worst = 0.0;
    for (std::size_t i = 0; i < operand.size(); ++i) {
        const double fd = central_diff(operand, i, step, eval);
        worst = std::max(worst, gradient_rel_err(analytic[i], fd, floor));
    }
    return worst;
}

struct WarpErrors {
    double flow = 0.0;
    double kernels = 0.0;
    double image = 0.0;
};

WarpErrors check_adaptive_warp(std::uint64_t seed, int instances) {
    WarpErrors err;
    const double step = 1e-4;
    for (int inst = 0; inst < instances; ++inst) {
        Rng rng(seed * 1000003ULL + inst);
        Tensor image = random_tensor(1, 3, 8, 8, rng);
        FlowField flow = random_safe_flow(1, 8, 8, rng);
        KernelField kernels = random_tensor(1, 16, 8, 8, rng, -0.5, 0.5);
        Tensor probe = random_tensor(1, 3, 8, 8, rng, -1.0, 1.0);

        const WarpGrads analytic = adaptive_warp_backward(image, flow, kernels, probe);
        auto eval = [&]() { return weighted_sum(adaptive_warp_forward(image, flow, kernels), probe); };

        err.flow = std::max(err.flow, max_grad_err(analytic.flow, flow, step, eval));
        err.kernels = std::max(err.kernels, max_grad_err(analytic.kernels, kernels, step, eval));
        err.image = std::max(err.image, max_grad_err(analytic.image, image, step, eval));
    }
    return err;
}

struct ProjectionErrors {
    double flow = 0.0;
    double holes = 0.0; // max |gradient| reaching hole-filled outputs
};

ProjectionErrors check_projection(std::uint64_t seed, int instances) {
    ProjectionErrors err;
    const double step = 1e-4;
    const int h = 8, w = 8;
    for (int inst = 0; inst < instances; ++inst) {
        Rng rng(seed * 913ULL + inst);
        // Construct flows whose half-displacements land with fractional part
        // in [0.1, 0.4] or [0.6, 0.9]: a finite-difference step cannot cross
        // a rounding boundary.
        FlowField flow(1, 2, h, w);
        for (std::size_t i = 0; i < flow.size(); ++i) {
            const double frac = rng.uniform() < 0.5 ? rng.uniform(0.1, 0.4)
                                                    : rng.uniform(0.6, 0.9);
            flow[i] = 2.0 * (rng.uniform_int(-1, 1) + frac);
        }
        const ProjectionResult result = project_flow(flow);

        // Probe weights vanish on hole pixels: their forward value comes from
        // the fill, which the backward pass deliberately ignores.
        Tensor probe(1, 2, h, w);
        for (int c = 0; c < 2; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    probe.at(0, c, y, x) = result.hole_mask.at(0, 0, y, x) > 0.0
                                               ? 0.0
                                               : rng.uniform(-1.0, 1.0);
                }
            }
        }
        const FlowField analytic = project_flow_backward(flow, result, probe);
        auto eval = [&]() { return weighted_sum(project_flow(flow).flow, probe); };
        err.flow = std::max(err.flow, max_grad_err(analytic, flow, step, eval));

        // A gradient arriving only at hole pixels must propagate exactly zero.
        Tensor hole_probe(1, 2, h, w);
        for (int c = 0; c < 2; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (result.hole_mask.at(0, 0, y, x) > 0.0) {
                        hole_probe.at(0, c, y, x) = 1.0;
                    }
                }
            }
        }
        const FlowField hole_grad = project_flow_backward(flow, result, hole_probe);
        err.holes = std::max(err.holes, max_abs(hole_grad));
    }
    return err;
}

double check_charbonnier(std::uint64_t seed) {
    Rng rng(seed * 7919ULL + 17);
    Tensor x = random_tensor(1, 2, 5, 5, rng, -1.0, 1.0);
    ad::Value leaf = ad::leaf(x, true);
    ad::Value loss = ad::charbonnier_sum(leaf, 1e-6);
    ad::backward(loss);
    const Tensor analytic = leaf.grad();
    auto eval = [&]() {
        return ad::charbonnier_sum(ad::constant(x), 1e-6).tensor()[0];
    };
    return max_grad_err(analytic, x, 1e-5, eval);
}

double check_conv_net(std::uint64_t seed) {
    Rng rng(seed * 524287ULL + 3);
    Tensor input = random_tensor(1, 2, 6, 6, rng, -1.0, 1.0);
    Tensor w1 = ad::he_uniform(4, 2, 3, 3, rng);
    Tensor b1 = random_tensor(1, 4, 1, 1, rng, -0.1, 0.1);
    Tensor w2 = ad::he_uniform(4, 4, 3, 3, rng);
    Tensor b2 = random_tensor(1, 4, 1, 1, rng, -0.1, 0.1);
    Tensor w3 = ad::he_uniform(2, 4, 3, 3, rng);
    Tensor b3 = random_tensor(1, 2, 1, 1, rng, -0.1, 0.1);

    auto forward = [&](bool with_grads, Tensor** leaves, Tensor* grads) -> double {
        ad::Value vin = ad::leaf(input, with_grads);
        ad::Value vw1 = ad::leaf(w1, with_grads), vb1 = ad::leaf(b1, with_grads);
        ad::Value vw2 = ad::leaf(w2, with_grads), vb2 = ad::leaf(b2, with_grads);
        ad::Value vw3 = ad::leaf(w3, with_grads), vb3 = ad::leaf(b3, with_grads);
        ad::Value h = ad::relu(ad::conv2d(vin, vw1, vb1, 1, 1));
        h = ad::relu(ad::conv2d(h, vw2, vb2, 1, 1));
        h = ad::conv2d(h, vw3, vb3, 1, 1);
        ad::Value loss = ad::charbonnier_sum(h, 1e-3);
        if (with_grads) {
            ad::backward(loss);
            const ad::Value vals[7] = {vin, vw1, vb1, vw2, vb2, vw3, vb3};
            for (int i = 0; i < 7; ++i) {
                grads[i] = vals[i].grad();
            }
            (void)leaves;
        }
        return loss.tensor()[0];
    };

    Tensor* leaves[7] = {&input, &w1, &b1, &w2, &b2, &w3, &b3};
    Tensor grads[7];
    forward(true, leaves, grads);

    const double step = 1e-5;
    double err = 0.0;
    auto eval = [&]() { return forward(false, nullptr, nullptr); };
    for (int li = 0; li < 7; ++li) {
        Tensor& t = *leaves[li];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double fd = central_diff(t, i, step, eval);
            err = std::max(err, gradient_rel_err(grads[li][i], fd));
        }
    }
    return err;
}

double check_blend_loss(std::uint64_t seed) {
    Rng rng(seed * 69313ULL + 29);
    Tensor wp = random_tensor(1, 3, 5, 5, rng);
    Tensor wn = random_tensor(1, 3, 5, 5, rng);
    Tensor mp = random_tensor(1, 1, 5, 5, rng, -0.2, 1.2);
    Tensor mn = random_tensor(1, 1, 5, 5, rng, -0.2, 1.2);
    Tensor fin = random_tensor(1, 3, 5, 5, rng);
    Tensor gt = random_tensor(1, 3, 5, 5, rng);

    auto forward = [&](bool with_grads, Tensor* grads) -> double {
        ad::Value vwp = ad::leaf(wp, with_grads), vwn = ad::leaf(wn, with_grads);
        ad::Value vmp = ad::leaf(mp, with_grads), vmn = ad::leaf(mn, with_grads);
        ad::Value vfin = ad::leaf(fin, with_grads);
        ad::Value blended = ad::blend(vwp, vwn, vmp, vmn);
        ad::Value loss = ad::memc_loss(vfin, blended, ad::constant(gt), vmp, vmn, 1e-3,
                                       2e-3, 1e-6);
        if (with_grads) {
            ad::backward(loss);
            const ad::Value vals[5] = {vwp, vwn, vmp, vmn, vfin};
            for (int i = 0; i < 5; ++i) {
                grads[i] = vals[i].grad();
            }
        }
        return loss.tensor()[0];
    };

    Tensor grads[5];
    forward(true, grads);
    Tensor* leaves[5] = {&wp, &wn, &mp, &mn, &fin};
    const double step = 1e-5;
    double err = 0.0;
    auto eval = [&]() { return forward(false, nullptr); };
    for (int li = 0; li < 5; ++li) {
        Tensor& t = *leaves[li];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double fd = central_diff(t, i, step, eval);
            err = std::max(err, gradient_rel_err(grads[li][i], fd));
        }
    }
    return err;
}

double check_pipeline(std::uint64_t seed, int samples) {
    PipelineConfig cfg;
    cfg.seed = seed;
    Pipeline pipeline(cfg);
    const Triplet triplet =
        make_synthetic_triplet(SyntheticPattern::checker, {1, 0}, 8, seed + 5);

    auto eval = [&]() {
        const Pipeline::InterpolationTape tape = pipeline.forward_interpolate(
            ad::constant(triplet.prev), ad::constant(triplet.next));
        return pipeline.interpolation_loss(tape, ad::constant(triplet.gt)).tensor()[0];
    };

    const Pipeline::InterpolationTape tape = pipeline.forward_interpolate(
        ad::constant(triplet.prev), ad::constant(triplet.next));
    const ad::Value loss = pipeline.interpolation_loss(tape, ad::constant(triplet.gt));
    const ad::GradMap grads = ad::backward(loss, pipeline.params());

    const std::vector<std::string> names = pipeline.params().names();
    Rng rng(seed * 40503ULL + 11);
    const double step = 1e-5;
    double err = 0.0;
    for (int s = 0; s < samples; ++s) {
        const std::string& name = names[rng.uniform_int(0, static_cast<int>(names.size()) - 1)];
        Tensor& param = pipeline.params().get(name);
        const std::size_t idx =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(param.size()) - 1));
        const double fd = central_diff(param, idx, step, eval);
        err = std::max(err, gradient_rel_err(grads.at(name)[idx], fd));
    }
    return err;
}

} // namespace

GradCheckReport run_gradcheck(std::uint64_t seed) {
    GradCheckReport report;
    const WarpErrors warp_err = check_adaptive_warp(seed, 20);
    report.suites.push_back({"adaptive_warp.flow", warp_err.flow, 1e-4, false});
    report.suites.push_back({"adaptive_warp.kernels", warp_err.kernels, 1e-4, false});
    report.suites.push_back({"adaptive_warp.image", warp_err.image, 1e-4, false});
    const ProjectionErrors proj_err = check_projection(seed, 20);
    report.suites.push_back({"flow_projection", proj_err.flow, 1e-4, false});
    report.suites.push_back({"flow_projection.hole_gradients", proj_err.holes, 0.0, false});
    report.suites.push_back({"charbonnier", check_charbonnier(seed), 1e-6, false});
    report.suites.push_back({"conv_net", check_conv_net(seed), 1e-6, false});
    report.suites.push_back({"blend_loss", check_blend_loss(seed), 1e-5, false});
    report.suites.push_back({"pipeline", check_pipeline(seed, 10), 1e-3, false});

    report.pass = true;
    for (GradCheckSuite& suite : report.suites) {
        suite.pass = suite.max_rel_err <= suite.threshold;
        report.pass = report.pass && suite.pass;
    }
    return report;
}

} // namespace memc
