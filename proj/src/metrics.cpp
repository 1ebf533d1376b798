#include "memc/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "memc/error.hpp"

namespace memc {

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (!a.same_shape(b)) {
        throw ShapeError("psnr: shapes " + a.shape_str() + " and " + b.shape_str() + " differ");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWindow = 11;

std::array<double, kWindow * kWindow> gaussian_window() {
    std::array<double, kWindow * kWindow> w{};
    const double sigma = 1.5;
    double total = 0.0;
    for (int y = 0; y < kWindow; ++y) {
        for (int x = 0; x < kWindow; ++x) {
            const double dy = y - kWindow / 2;
            const double dx = x - kWindow / 2;
            w[y * kWindow + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            total += w[y * kWindow + x];
        }
    }
    for (double& v : w) {
        v /= total;
    }
    return w;
}

} // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("ssim: shapes " + a.shape_str() + " and " + b.shape_str() + " differ");
    }
    if (a.h() < kWindow || a.w() < kWindow) {
        throw ShapeError("ssim: image " + a.shape_str() + " smaller than the 11x11 window");
    }
    static const std::array<double, kWindow * kWindow> win = gaussian_window();
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double acc = 0.0;
    std::size_t windows = 0;
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c) {
            for (int y0 = 0; y0 + kWindow <= a.h(); ++y0) {
                for (int x0 = 0; x0 + kWindow <= a.w(); ++x0) {
                    double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
                    for (int y = 0; y < kWindow; ++y) {
                        for (int x = 0; x < kWindow; ++x) {
                            const double w = win[y * kWindow + x];
                            const double va = a.at(n, c, y0 + y, x0 + x);
                            const double vb = b.at(n, c, y0 + y, x0 + x);
                            mu_a += w * va;
                            mu_b += w * vb;
                            aa += w * va * va;
                            bb += w * vb * vb;
                            ab += w * va * vb;
                        }
                    }
                    const double var_a = aa - mu_a * mu_a;
                    const double var_b = bb - mu_b * mu_b;
                    const double cov = ab - mu_a * mu_b;
                    const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                    const double den =
                        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                    acc += num / den;
                    ++windows;
                }
            }
        }
    }
    return acc / static_cast<double>(windows);
}

double interpolation_error(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("interpolation_error: shapes " + a.shape_str() + " and " +
                         b.shape_str() + " differ");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = 255.0 * (a[i] - b[i]);
        mse += d * d;
    }
    return std::sqrt(mse / static_cast<double>(a.size()));
}

MetricReport compare_images(const Tensor& a, const Tensor& b) {
    return {psnr(a, b), ssim(a, b), interpolation_error(a, b)};
}

} // namespace memc
