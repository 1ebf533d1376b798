// Shared test utilities: independent brute-force oracles and a central
// finite-difference helper. These deliberately re-derive each operation with
// plain nested loops so they stay decoupled from the library implementation.

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "memc/projection.hpp"
#include "memc/rng.hpp"
#include "memc/tensor.hpp"
#include "memc/warp.hpp"

namespace testsupport {

inline memc::Tensor random_tensor(int n, int c, int h, int w, memc::Rng& rng, double lo = 0.0,
                                  double hi = 1.0) {
    memc::Tensor t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(lo, hi);
    }
    return t;
}

// Naive six-nested-loop cross-correlation.
inline memc::Tensor conv2d_oracle(const memc::Tensor& input, const memc::Tensor& weight,
                                  const std::vector<double>& bias, int stride, int pad) {
    const int out_h = (input.h() + 2 * pad - weight.h()) / stride + 1;
    const int out_w = (input.w() + 2 * pad - weight.w()) / stride + 1;
    memc::Tensor out(input.n(), weight.n(), out_h, out_w);
    for (int n = 0; n < input.n(); ++n) {
        for (int co = 0; co < weight.n(); ++co) {
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    double acc = bias[co];
                    for (int ci = 0; ci < input.c(); ++ci) {
                        for (int ky = 0; ky < weight.h(); ++ky) {
                            for (int kx = 0; kx < weight.w(); ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= input.h() || ix < 0 || ix >= input.w()) {
                                    continue;
                                }
                                acc += input.at(n, ci, iy, ix) * weight.at(co, ci, ky, kx);
                            }
                        }
                    }
                    out.at(n, co, oy, ox) = acc;
                }
            }
        }
    }
    return out;
}

// Direct per-pixel evaluation of the adaptive warp definition: for each
// output pixel, loop the K x K tap window, combine the learned coefficient
// with the quadrant bilinear weight, and sample with border clamping.
inline memc::Tensor adaptive_warp_oracle(const memc::Tensor& image, const memc::Tensor& flow,
                                         const memc::Tensor& kernels) {
    int k = 2;
    while (k * k < kernels.c()) {
        k += 2;
    }
    const int h = image.h();
    const int w = image.w();
    memc::Tensor out(image.n(), image.c(), h, w);
    for (int n = 0; n < image.n(); ++n) {
        for (int cc = 0; cc < image.c(); ++cc) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double u = flow.at(n, 0, y, x);
                    const double v = flow.at(n, 1, y, x);
                    const double theta_u = u - std::floor(u);
                    const double theta_v = v - std::floor(v);
                    double acc = 0.0;
                    for (int rv = -k / 2 + 1; rv <= k / 2; ++rv) {
                        for (int ru = -k / 2 + 1; ru <= k / 2; ++ru) {
                            const int chan = (rv + k / 2 - 1) * k + (ru + k / 2 - 1);
                            const double wu = ru <= 0 ? 1.0 - theta_u : theta_u;
                            const double wv = rv <= 0 ? 1.0 - theta_v : theta_v;
                            int sx = x + static_cast<int>(std::floor(u)) + ru;
                            int sy = y + static_cast<int>(std::floor(v)) + rv;
                            sx = std::min(std::max(sx, 0), w - 1);
                            sy = std::min(std::max(sy, 0), h - 1);
                            acc += kernels.at(n, chan, y, x) * wu * wv *
                                   image.at(n, cc, sy, sx);
                        }
                    }
                    out.at(n, cc, y, x) = acc;
                }
            }
        }
    }
    return out;
}

// Two-pass scatter projection: accumulate sums and counts over row-major
// sources, then divide, then fill holes by independent directional scans.
inline memc::ProjectionResult project_flow_oracle(const memc::Tensor& flow) {
    const int h = flow.h();
    const int w = flow.w();
    memc::ProjectionResult res;
    res.flow = memc::Tensor(flow.n(), 2, h, w);
    res.count = memc::Tensor(flow.n(), 1, h, w);
    res.hole_mask = memc::Tensor(flow.n(), 1, h, w);
    for (int n = 0; n < flow.n(); ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double hu = flow.at(n, 0, y, x) / 2.0;
                const double hv = flow.at(n, 1, y, x) / 2.0;
                const int tx = static_cast<int>(std::round(x + hu));
                const int ty = static_cast<int>(std::round(y + hv));
                if (tx < 0 || tx >= w || ty < 0 || ty >= h) {
                    continue;
                }
                res.flow.at(n, 0, ty, tx) += hu;
                res.flow.at(n, 1, ty, tx) += hv;
                res.count.at(n, 0, ty, tx) += 1.0;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (res.count.at(n, 0, y, x) > 0.0) {
                    res.flow.at(n, 0, y, x) /= -res.count.at(n, 0, y, x);
                    res.flow.at(n, 1, y, x) /= -res.count.at(n, 0, y, x);
                } else {
                    res.hole_mask.at(n, 0, y, x) = 1.0;
                }
            }
        }
        memc::Tensor filled = res.flow;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (res.hole_mask.at(n, 0, y, x) == 0.0) {
                    continue;
                }
                double su = 0.0, sv = 0.0;
                int cnt = 0;
                for (int xx = x - 1; xx >= 0; --xx) {
                    if (res.hole_mask.at(n, 0, y, xx) == 0.0) {
                        su += res.flow.at(n, 0, y, xx);
                        sv += res.flow.at(n, 1, y, xx);
                        ++cnt;
                        break;
                    }
                }
                for (int xx = x + 1; xx < w; ++xx) {
                    if (res.hole_mask.at(n, 0, y, xx) == 0.0) {
                        su += res.flow.at(n, 0, y, xx);
                        sv += res.flow.at(n, 1, y, xx);
                        ++cnt;
                        break;
                    }
                }
                for (int yy = y - 1; yy >= 0; --yy) {
                    if (res.hole_mask.at(n, 0, yy, x) == 0.0) {
                        su += res.flow.at(n, 0, yy, x);
                        sv += res.flow.at(n, 1, yy, x);
                        ++cnt;
                        break;
                    }
                }
                for (int yy = y + 1; yy < h; ++yy) {
                    if (res.hole_mask.at(n, 0, yy, x) == 0.0) {
                        su += res.flow.at(n, 0, yy, x);
                        sv += res.flow.at(n, 1, yy, x);
                        ++cnt;
                        break;
                    }
                }
                filled.at(n, 0, y, x) = cnt > 0 ? su / cnt : 0.0;
                filled.at(n, 1, y, x) = cnt > 0 ? sv / cnt : 0.0;
            }
        }
        res.flow = filled;
    }
    return res;
}

// Central difference of a scalar functional w.r.t. one tensor coordinate.
inline double central_diff(memc::Tensor& operand, std::size_t index, double step,
                           const std::function<double()>& eval) {
    const double saved = operand[index];
    operand[index] = saved + step;
    const double up = eval();
    operand[index] = saved - step;
    const double down = eval();
    operand[index] = saved;
    return (up - down) / (2.0 * step);
}

inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

// Worst relative error between an analytic gradient tensor and central
// differences over every coordinate of `operand`. The comparison floor is
// scaled by the gradient magnitude so that noise on near-zero entries is
// judged against the tensor's scale, not against zero.
inline double max_grad_err(const memc::Tensor& analytic, memc::Tensor& operand, double step,
                           const std::function<double()>& eval) {
    if (analytic.size() != operand.size()) {
        throw std::logic_error("max_grad_err: gradient/operand size mismatch");
    }
    const double floor = 1e-6 * std::max(1.0, memc::max_abs(analytic));
    double worst = 0.0;
    for (std::size_t i = 0; i < operand.size(); ++i) {
        const double fd = central_diff(operand, i, step, eval);
        worst = std::max(worst, rel_err(analytic[i], fd, floor));
    }
    return worst;
}

inline double dot(const memc::Tensor& a, const memc::Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

} // namespace testsupport
