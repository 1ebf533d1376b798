// Dense rank-4 tensor (batch, channel, height, width) of doubles, plus the
// convolution and elementwise primitives the rest of the library builds on.
// All operations are pure: inputs are never mutated.

#pragma once

#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

namespace memc {

class Tensor {
public:
    Tensor() = default;

    // Zero-initialized.
    Tensor(int n, int c, int h, int w);

    static Tensor full(int n, int c, int h, int w, double value);
    static Tensor from(int n, int c, int h, int w, std::vector<double> values);

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    // Out-of-range access is a contract violation, not silent clamping.
    double& at(int n, int c, int y, int x) {
        assert(in_range(n, c, y, x));
        return data_[offset(n, c, y, x)];
    }
    double at(int n, int c, int y, int x) const {
        assert(in_range(n, c, y, x));
        return data_[offset(n, c, y, x)];
    }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const {
        return n_ == other.n_ && c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
    }

    std::string shape_str() const;

    bool all_finite() const;

private:
    std::size_t offset(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
    }
    bool in_range(int n, int c, int y, int x) const {
        return n >= 0 && n < n_ && c >= 0 && c < c_ && y >= 0 && y < h_ && x >= 0 && x < w_;
    }

    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> data_;
};

// Number of worker threads used by the bit-identical parallel paths
// (currently conv2d, which is gather-style over output elements).
void set_num_threads(int threads);
int num_threads();

// Cross-correlation with zero padding; weight is (Cout, Cin, Kh, Kw), bias is
// one value per output channel.
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::vector<double>& bias,
              int stride, int pad);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor concat_channels(const std::vector<const Tensor*>& parts);
Tensor upsample_nearest2(const Tensor& a);
Tensor avgpool2(const Tensor& a);

double sum(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Structural helpers used by the pipeline and synthetic data generation.
Tensor hflip(const Tensor& a);
Tensor vflip(const Tensor& a);
Tensor roll2d(const Tensor& a, int dy, int dx); // periodic shift, +dy down, +dx right
Tensor slice_channels(const Tensor& a, int c_begin, int c_end);
Tensor clamp01(const Tensor& a);

} // namespace memc
