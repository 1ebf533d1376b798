#include <doctest.h>

#include "memc/error.hpp"
#include "memc/rng.hpp"
#include "memc/tensor.hpp"

#include "test_support.hpp"

using namespace memc;
using testsupport::conv2d_oracle;
using testsupport::random_tensor;

TEST_CASE("tensor layout and construction") {
    Tensor t(2, 3, 4, 5);
    CHECK(t.size() == 2 * 3 * 4 * 5);
    t.at(1, 2, 3, 4) = 7.0;
    CHECK(t[t.size() - 1] == 7.0); // last element in row-major (n,c,h,w)
    CHECK_THROWS_AS(Tensor::from(1, 1, 2, 2, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("conv2d scalar scaling") {
    const Tensor input = Tensor::full(1, 1, 3, 3, 1.0);
    const Tensor weight = Tensor::from(1, 1, 1, 1, {2.0});
    const Tensor out = conv2d(input, weight, {0.0}, 1, 0);
    CHECK(out.same_shape(input));
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] == doctest::Approx(2.0));
    }
}

TEST_CASE("conv2d identity kernel") {
    const Tensor input = Tensor::from(1, 1, 3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor weight(1, 1, 3, 3);
    weight.at(0, 0, 1, 1) = 1.0;
    const Tensor out = conv2d(input, weight, {0.0}, 1, 1);
    CHECK(max_abs_diff(out, input) == 0.0);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
    Rng rng(42);
    const Tensor input = random_tensor(1, 2, 5, 5, rng, -1.0, 1.0);
    const Tensor weight = random_tensor(3, 2, 3, 3, rng, -1.0, 1.0);
    const std::vector<double> bias = {0.1, -0.2, 0.3};
    for (int stride : {1, 2}) {
        for (int pad : {0, 1}) {
            const Tensor got = conv2d(input, weight, bias, stride, pad);
            const Tensor want = conv2d_oracle(input, weight, bias, stride, pad);
            CHECK(max_abs_diff(got, want) < 1e-12);
        }
    }
}

TEST_CASE("conv2d is linear in input and weight") {
    Rng rng(7);
    const Tensor x = random_tensor(1, 2, 5, 5, rng, -1.0, 1.0);
    const Tensor y = random_tensor(1, 2, 5, 5, rng, -1.0, 1.0);
    const Tensor w = random_tensor(3, 2, 3, 3, rng, -1.0, 1.0);
    const std::vector<double> zero_bias = {0.0, 0.0, 0.0};
    const double a = 1.7, b = -0.4;

    const Tensor lhs = conv2d(add(scale(x, a), scale(y, b)), w, zero_bias, 1, 1);
    const Tensor rhs =
        add(scale(conv2d(x, w, zero_bias, 1, 1), a), scale(conv2d(y, w, zero_bias, 1, 1), b));
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);

    const Tensor w2 = random_tensor(3, 2, 3, 3, rng, -1.0, 1.0);
    const Tensor lhs_w = conv2d(x, add(scale(w, a), scale(w2, b)), zero_bias, 1, 1);
    const Tensor rhs_w =
        add(scale(conv2d(x, w, zero_bias, 1, 1), a), scale(conv2d(x, w2, zero_bias, 1, 1), b));
    CHECK(max_abs_diff(lhs_w, rhs_w) < 1e-12);
}

TEST_CASE("conv2d stride-1 odd-kernel same padding preserves shape") {
    Rng rng(3);
    const Tensor x = random_tensor(2, 3, 7, 9, rng);
    for (int k : {1, 3, 5}) {
        const Tensor w = random_tensor(4, 3, k, k, rng, -1.0, 1.0);
        const Tensor out = conv2d(x, w, std::vector<double>(4, 0.0), 1, (k - 1) / 2);
        CHECK(out.h() == x.h());
        CHECK(out.w() == x.w());
    }
}

TEST_CASE("conv2d shape errors name the offending dimension") {
    const Tensor input(1, 2, 4, 4);
    const Tensor weight(1, 3, 3, 3);
    CHECK_THROWS_WITH_AS(conv2d(input, weight, {0.0}, 1, 1),
                         doctest::Contains("input channels"), ShapeError);
    const Tensor weight_ok(2, 2, 3, 3);
    CHECK_THROWS_WITH_AS(conv2d(input, weight_ok, {0.0}, 1, 1), doctest::Contains("bias"),
                         ShapeError);
}

TEST_CASE("conv2d parallel path is bit-identical") {
    Rng rng(11);
    const Tensor x = random_tensor(2, 3, 9, 9, rng);
    const Tensor w = random_tensor(5, 3, 3, 3, rng, -1.0, 1.0);
    const std::vector<double> bias = {0.1, 0.2, 0.3, 0.4, 0.5};
    const Tensor sequential = conv2d(x, w, bias, 1, 1);
    set_num_threads(4);
    const Tensor parallel = conv2d(x, w, bias, 1, 1);
    set_num_threads(1);
    CHECK(max_abs_diff(sequential, parallel) == 0.0);
}

TEST_CASE("relu sign cases") {
    const Tensor x = Tensor::from(1, 1, 1, 3, {-1.0, 0.0, 2.0});
    const Tensor out = relu(x);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 2.0);
}

TEST_CASE("concat preserves operand order") {
    const Tensor a = Tensor::full(1, 2, 3, 3, 1.0);
    const Tensor b = Tensor::full(1, 3, 3, 3, 2.0);
    const Tensor out = concat_channels({&a, &b});
    CHECK(out.c() == 5);
    CHECK(out.at(0, 0, 0, 0) == 1.0);
    CHECK(out.at(0, 1, 2, 2) == 1.0);
    CHECK(out.at(0, 2, 0, 0) == 2.0);
    CHECK(out.at(0, 4, 2, 2) == 2.0);
    const Tensor mismatched = Tensor::full(1, 1, 2, 2, 0.0);
    CHECK_THROWS_AS(concat_channels({&a, &mismatched}), ShapeError);
}

TEST_CASE("avgpool then nearest-upsample of a constant is the identity") {
    const Tensor x = Tensor::full(1, 2, 4, 6, 0.37);
    const Tensor out = upsample_nearest2(avgpool2(x));
    CHECK(max_abs_diff(out, x) == 0.0);
}

TEST_CASE("operations never mutate their inputs") {
    Rng rng(5);
    const Tensor x = random_tensor(1, 2, 4, 4, rng);
    const Tensor y = random_tensor(1, 2, 4, 4, rng);
    const Tensor x_copy = x;
    const Tensor y_copy = y;
    (void)add(x, y);
    (void)sub(x, y);
    (void)mul(x, y);
    (void)relu(x);
    (void)scale(x, 2.0);
    (void)avgpool2(x);
    (void)upsample_nearest2(x);
    (void)hflip(x);
    (void)roll2d(x, 1, 2);
    CHECK(max_abs_diff(x, x_copy) == 0.0);
    CHECK(max_abs_diff(y, y_copy) == 0.0);
}

TEST_CASE("structural helpers") {
    const Tensor x = Tensor::from(1, 1, 2, 2, {1, 2, 3, 4});
    const Tensor h = hflip(x);
    CHECK(h.at(0, 0, 0, 0) == 2.0);
    CHECK(max_abs_diff(hflip(h), x) == 0.0);
    const Tensor r = roll2d(x, 0, 1);
    CHECK(r.at(0, 0, 0, 0) == 2.0);
    CHECK(r.at(0, 0, 0, 1) == 1.0);
    const Tensor s = slice_channels(Tensor::from(1, 2, 1, 2, {1, 2, 3, 4}), 1, 2);
    CHECK(s.c() == 1);
    CHECK(s.at(0, 0, 0, 0) == 3.0);
}
