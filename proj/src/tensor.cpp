#include "memc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "memc/error.hpp"

namespace memc {

namespace {
int g_num_threads = 1;
} // namespace

void set_num_threads(int threads) {
    g_num_threads = std::max(1, threads);
}

int num_threads() {
    return g_num_threads;
}

Tensor::Tensor(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
        throw ShapeError("tensor dimensions must be non-negative, got " + shape_str());
    }
    data_.assign(static_cast<std::size_t>(n) * c * h * w, 0.0);
}

Tensor Tensor::full(int n, int c, int h, int w, double value) {
    Tensor t(n, c, h, w);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::from(int n, int c, int h, int w, std::vector<double> values) {
    Tensor t(n, c, h, w);
    if (values.size() != t.size()) {
        throw ShapeError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + t.shape_str());
    }
    t.data_ = std::move(values);
    return t;
}

std::string Tensor::shape_str() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" +
           std::to_string(w_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": operand shapes " + a.shape_str() + " and " +
                         b.shape_str() + " differ");
    }
}

// Computes one batch/output-channel plane of the cross-correlation.
void conv2d_plane(const Tensor& input, const Tensor& weight, double bias, int n, int co,
                  int stride, int pad, int out_h, int out_w, Tensor& out) {
    const int cin = input.c();
    const int ih = input.h();
    const int iw = input.w();
    const int kh = weight.h();
    const int kw = weight.w();
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            double acc = bias;
            const int y0 = oy * stride - pad;
            const int x0 = ox * stride - pad;
            for (int ci = 0; ci < cin; ++ci) {
                const double* in_plane = input.data() +
                    (static_cast<std::size_t>(n) * cin + ci) * ih * iw;
                const double* w_plane = weight.data() +
                    (static_cast<std::size_t>(co) * cin + ci) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = y0 + ky;
                    if (iy < 0 || iy >= ih) {
                        continue;
                    }
                    const double* in_row = in_plane + static_cast<std::size_t>(iy) * iw;
                    const double* w_row = w_plane + static_cast<std::size_t>(ky) * kw;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = x0 + kx;
                        if (ix < 0 || ix >= iw) {
                            continue;
                        }
                        acc += in_row[ix] * w_row[kx];
                    }
                }
            }
            out.at(n, co, oy, ox) = acc;
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::vector<double>& bias,
              int stride, int pad) {
    if (stride < 1) {
        throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    }
    if (pad < 0) {
        throw ShapeError("conv2d: pad must be >= 0, got " + std::to_string(pad));
    }
    if (input.c() != weight.c()) {
        throw ShapeError("conv2d: input channels " + std::to_string(input.c()) +
                         " do not match weight input channels " + std::to_string(weight.c()));
    }
    const int cout = weight.n();
    if (static_cast<int>(bias.size()) != cout) {
        throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) +
                         " does not match output channels " + std::to_string(cout));
    }
    const int out_h = (input.h() + 2 * pad - weight.h()) / stride + 1;
    const int out_w = (input.w() + 2 * pad - weight.w()) / stride + 1;
    if (input.h() + 2 * pad < weight.h() || input.w() + 2 * pad < weight.w()) {
        throw ShapeError("conv2d: kernel " + std::to_string(weight.h()) + "x" +
                         std::to_string(weight.w()) + " exceeds padded input " +
                         std::to_string(input.h() + 2 * pad) + "x" +
                         std::to_string(input.w() + 2 * pad));
    }

    Tensor out(input.n(), cout, out_h, out_w);
    const int planes = input.n() * cout;
    const int threads = std::min(g_num_threads, planes);
    if (threads <= 1) {
        for (int p = 0; p < planes; ++p) {
            conv2d_plane(input, weight, bias[p % cout], p / cout, p % cout, stride, pad, out_h,
                         out_w, out);
        }
    } else {
        // Each worker owns a disjoint set of output planes, so the result is
        // bit-identical to the sequential loop above.
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t]() {
                for (int p = t; p < planes; p += threads) {
                    conv2d_plane(input, weight, bias[p % cout], p / cout, p % cout, stride, pad,
                                 out_h, out_w, out);
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b[i];
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b[i];
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b[i];
    }
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= s;
    }
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::max(out[i], 0.0);
    }
    return out;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_channels: no operands");
    }
    const Tensor& first = *parts.front();
    int total_c = 0;
    for (const Tensor* p : parts) {
        if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w()) {
            throw ShapeError("concat_channels: operand " + p->shape_str() +
                             " does not match leading shape " + first.shape_str());
        }
        total_c += p->c();
    }
    Tensor out(first.n(), total_c, first.h(), first.w());
    const std::size_t plane = static_cast<std::size_t>(first.h()) * first.w();
    for (int n = 0; n < first.n(); ++n) {
        int co = 0;
        for (const Tensor* p : parts) {
            const double* src = p->data() + static_cast<std::size_t>(n) * p->c() * plane;
            double* dst = out.data() + (static_cast<std::size_t>(n) * total_c + co) * plane;
            std::copy(src, src + static_cast<std::size_t>(p->c()) * plane, dst);
            co += p->c();
        }
    }
    return out;
}

Tensor upsample_nearest2(const Tensor& a) {
    Tensor out(a.n(), a.c(), a.h() * 2, a.w() * 2);
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c) {
            for (int y = 0; y < out.h(); ++y) {
                for (int x = 0; x < out.w(); ++x) {
                    out.at(n, c, y, x) = a.at(n, c, y / 2, x / 2);
                }
            }
        }
    }
    return out;
}

Tensor avgpool2(const Tensor& a) {
    if (a.h() % 2 != 0 || a.w() % 2 != 0) {
        throw ShapeError("avgpool2: spatial size " + a.shape_str() + " is not even");
    }
    Tensor out(a.n(), a.c(), a.h() / 2, a.w() / 2);
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c) {
            for (int y = 0; y < out.h(); ++y) {
                for (int x = 0; x < out.w(); ++x) {
                    out.at(n, c, y, x) = 0.25 * (a.at(n, c, 2 * y, 2 * x) +
                                                 a.at(n, c, 2 * y, 2 * x + 1) +
                                                 a.at(n, c, 2 * y + 1, 2 * x) +
                                                 a.at(n, c, 2 * y + 1, 2 * x + 1));
                }
            }
        }
    }
    return out;
}

double sum(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i];
    }
    return acc;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a[i]));
    }
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

Tensor hflip(const Tensor& a) {
    Tensor out(a.n(), a.c(), a.h(), a.w());
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c) {
            for (int y = 0; y < a.h(); ++y) {
                for (int x = 0; x < a.w(); ++x) {
                    out.at(n, c, y, x) = a.at(n, c, y, a.w() - 1 - x);
                }
            }
        }
    }
    return out;
}

Tensor vflip(const Tensor& a) {
    Tensor out(a.n(), a.c(), a.h(), a.w());
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c) {
            for (int y = 0; y < a.h(); ++y) {
                for (int x = 0; x < a.w(); ++x) {
                    out.at(n, c, y, x) = a.at(n, c, a.h() - 1 - y, x);
                }
            }
        }
    }
    return out;
}

Tensor roll2d(const Tensor& a, int dy, int dx) {
    Tensor out(a.n(), a.c(), a.h(), a.w());
    const int h = a.h();
    const int w = a.w();
    auto wrap = [](int v, int m) { return ((v % m) + m) % m; };
    for (int n = 0; n < a.n(); ++n) {
        for (int c = 0; c < a.c(); ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    out.at(n, c, y, x) = a.at(n, c, wrap(y - dy, h), wrap(x - dx, w));
                }
            }
        }
    }
    return out;
}

Tensor slice_channels(const Tensor& a, int c_begin, int c_end) {
    if (c_begin < 0 || c_end > a.c() || c_begin >= c_end) {
        throw ShapeError("slice_channels: range [" + std::to_string(c_begin) + ", " +
                         std::to_string(c_end) + ") invalid for " + a.shape_str());
    }
    Tensor out(a.n(), c_end - c_begin, a.h(), a.w());
    const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
    for (int n = 0; n < a.n(); ++n) {
        const double* src = a.data() + (static_cast<std::size_t>(n) * a.c() + c_begin) * plane;
        double* dst = out.data() + static_cast<std::size_t>(n) * out.c() * plane;
        std::copy(src, src + static_cast<std::size_t>(out.c()) * plane, dst);
    }
    return out;
}

Tensor clamp01(const Tensor& a) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::clamp(out[i], 0.0, 1.0);
    }
    return out;
}

} // namespace memc
