#include <doctest.h>

#include <cmath>

#include "memc/autodiff.hpp"
#include "memc/error.hpp"
#include "memc/tensor.hpp"

#include "test_support.hpp"

using namespace memc;
using testsupport::central_diff;
using testsupport::random_tensor;
using testsupport::rel_err;

TEST_CASE("backward of a linear map is all ones") {
    ad::ParamStore store;
    store.add("p", Tensor::from(1, 1, 2, 2, {1, -2, 3, 4}));
    const ad::Value loss = ad::sum_all(store.leaf("p"));
    const ad::GradMap grads = ad::backward(loss, store);
    const Tensor& g = grads.at("p");
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(g[i] == 1.0);
    }
}

TEST_CASE("backward of a quadratic is 2p") {
    ad::ParamStore store;
    store.add("p", Tensor::from(1, 1, 2, 2, {1, -2, 3, 4}));
    const ad::Value p = store.leaf("p");
    const ad::GradMap grads = ad::backward(ad::sum_all(ad::mul(p, p)), store);
    const Tensor& g = grads.at("p");
    const Tensor& v = store.get("p");
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(g[i] == doctest::Approx(2.0 * v[i]).epsilon(1e-12));
    }
}

TEST_CASE("non-scalar loss is rejected") {
    ad::ParamStore store;
    store.add("p", Tensor::full(1, 1, 2, 2, 1.0));
    CHECK_THROWS_AS(ad::backward(store.leaf("p"), store), Error);
}

TEST_CASE("unreachable parameters get zero gradients") {
    ad::ParamStore store;
    store.add("used", Tensor::full(1, 1, 1, 1, 2.0));
    store.add("unused", Tensor::full(1, 2, 3, 3, 1.0));
    const ad::GradMap grads = ad::backward(ad::sum_all(store.leaf("used")), store);
    CHECK(grads.at("used")[0] == 1.0);
    CHECK(grads.at("unused").same_shape(store.get("unused")));
    CHECK(max_abs(grads.at("unused")) == 0.0);
}

TEST_CASE("duplicate parameter names are rejected") {
    ad::ParamStore store;
    store.add("p", Tensor(1, 1, 1, 1));
    CHECK_THROWS_AS(store.add("p", Tensor(1, 1, 1, 1)), Error);
}

TEST_CASE("diamond graph sums branch gradients") {
    ad::ParamStore store;
    store.add("p", Tensor::from(1, 1, 1, 2, {3.0, -1.0}));
    const ad::Value p = store.leaf("p");
    const ad::Value branch_a = ad::scale(p, 2.0);
    const ad::Value branch_b = ad::mul(p, p);
    const ad::Value loss = ad::sum_all(ad::add(branch_a, branch_b));
    const ad::GradMap grads = ad::backward(loss, store);
    const Tensor& v = store.get("p");
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(grads.at("p")[i] == doctest::Approx(2.0 + 2.0 * v[i]).epsilon(1e-12));
    }
}

TEST_CASE("running backward twice yields identical gradients") {
    Rng rng(31);
    ad::ParamStore store;
    store.add("p", random_tensor(1, 2, 3, 3, rng, -1.0, 1.0));
    const ad::Value p = store.leaf("p");
    const ad::Value loss = ad::charbonnier_sum(ad::mul(p, p), 1e-4);
    const ad::GradMap first = ad::backward(loss, store);
    const ad::GradMap second = ad::backward(loss, store);
    CHECK(max_abs_diff(first.at("p"), second.at("p")) == 0.0);
}

TEST_CASE("conv net gradients match finite differences") {
    // Random 3-layer conv net; every parameter checked at step 1e-5.
    Rng rng(12345);
    Tensor input = random_tensor(1, 2, 6, 6, rng, -1.0, 1.0);
    Tensor w1 = ad::he_uniform(4, 2, 3, 3, rng);
    Tensor b1 = random_tensor(1, 4, 1, 1, rng, -0.1, 0.1);
    Tensor w2 = ad::he_uniform(4, 4, 3, 3, rng);
    Tensor b2 = random_tensor(1, 4, 1, 1, rng, -0.1, 0.1);
    Tensor w3 = ad::he_uniform(2, 4, 3, 3, rng);
    Tensor b3 = random_tensor(1, 2, 1, 1, rng, -0.1, 0.1);
    Tensor* params[6] = {&w1, &b1, &w2, &b2, &w3, &b3};

    auto loss_value = [&]() {
        ad::Value h = ad::relu(ad::conv2d(ad::constant(input), ad::constant(w1),
                                          ad::constant(b1), 1, 1));
        h = ad::relu(ad::conv2d(h, ad::constant(w2), ad::constant(b2), 1, 1));
        h = ad::conv2d(h, ad::constant(w3), ad::constant(b3), 1, 1);
        return ad::charbonnier_sum(h, 1e-3).tensor()[0];
    };

    ad::ParamStore store;
    store.add("w1", w1);
    store.add("b1", b1);
    store.add("w2", w2);
    store.add("b2", b2);
    store.add("w3", w3);
    store.add("b3", b3);
    ad::Value h = ad::relu(ad::conv2d(ad::constant(input), store.leaf("w1"),
                                      store.leaf("b1"), 1, 1));
    h = ad::relu(ad::conv2d(h, store.leaf("w2"), store.leaf("b2"), 1, 1));
    h = ad::conv2d(h, store.leaf("w3"), store.leaf("b3"), 1, 1);
    const ad::GradMap grads = ad::backward(ad::charbonnier_sum(h, 1e-3), store);

    const char* names[6] = {"w1", "b1", "w2", "b2", "w3", "b3"};
    double max_err = 0.0;
    for (int pi = 0; pi < 6; ++pi) {
        max_err = std::max(
            max_err, testsupport::max_grad_err(grads.at(names[pi]), *params[pi], 1e-5,
                                               loss_value));
    }
    CHECK(max_err < 1e-6);
}

TEST_CASE("strided conv gradients match finite differences") {
    Rng rng(99);
    Tensor input = random_tensor(1, 2, 7, 7, rng, -1.0, 1.0);
    Tensor w = random_tensor(3, 2, 3, 3, rng, -0.5, 0.5);
    Tensor b = random_tensor(1, 3, 1, 1, rng, -0.1, 0.1);
    auto loss_value = [&]() {
        const ad::Value out =
            ad::conv2d(ad::constant(input), ad::constant(w), ad::constant(b), 2, 1);
        return ad::charbonnier_sum(out, 1e-3).tensor()[0];
    };
    ad::Value vin = ad::leaf(input, true);
    ad::Value vw = ad::leaf(w, true);
    ad::Value vb = ad::leaf(b, true);
    ad::backward(ad::charbonnier_sum(ad::conv2d(vin, vw, vb, 2, 1), 1e-3));
    double max_err = 0.0;
    Tensor* operands[3] = {&input, &w, &b};
    const Tensor grads[3] = {vin.grad(), vw.grad(), vb.grad()};
    for (int oi = 0; oi < 3; ++oi) {
        max_err = std::max(
            max_err, testsupport::max_grad_err(grads[oi], *operands[oi], 1e-5, loss_value));
    }
    CHECK(max_err < 1e-6);
}

TEST_CASE("structural op gradients match finite differences") {
    Rng rng(55);
    Tensor a = random_tensor(1, 2, 4, 4, rng, -1.0, 1.0);
    Tensor b = random_tensor(1, 3, 4, 4, rng, -1.0, 1.0);
    auto loss_value = [&]() {
        const ad::Value cat = ad::concat_channels({ad::constant(a), ad::constant(b)});
        const ad::Value pooled = ad::avgpool2(ad::slice_channels(cat, 1, 4));
        const ad::Value up = ad::upsample_nearest2(pooled);
        return ad::charbonnier_sum(up, 1e-3).tensor()[0];
    };
    ad::Value va = ad::leaf(a, true);
    ad::Value vb = ad::leaf(b, true);
    const ad::Value cat = ad::concat_channels({va, vb});
    const ad::Value up = ad::upsample_nearest2(ad::avgpool2(ad::slice_channels(cat, 1, 4)));
    ad::backward(ad::charbonnier_sum(up, 1e-3));
    double max_err = testsupport::max_grad_err(va.grad(), a, 1e-5, loss_value);
    max_err = std::max(max_err, testsupport::max_grad_err(vb.grad(), b, 1e-5, loss_value));
    CHECK(max_err < 1e-6);
}

TEST_CASE("softmax and sigmoid gradients match finite differences") {
    Rng rng(77);
    Tensor x = random_tensor(1, 4, 3, 3, rng, -2.0, 2.0);
    auto loss_value = [&]() {
        const ad::Value sm = ad::softmax_channels(ad::constant(x));
        const ad::Value sg = ad::sigmoid(ad::constant(x));
        return ad::charbonnier_sum(ad::mul(sm, sg), 1e-3).tensor()[0];
    };
    ad::Value vx = ad::leaf(x, true);
    ad::backward(
        ad::charbonnier_sum(ad::mul(ad::softmax_channels(vx), ad::sigmoid(vx)), 1e-3));
    CHECK(testsupport::max_grad_err(vx.grad(), x, 1e-5, loss_value) < 1e-6);
}

TEST_CASE("charbonnier closed forms") {
    const int elements = 2 * 3 * 3;
    const Tensor zeros(1, 2, 3, 3);
    const double at_zero = ad::charbonnier_sum(ad::constant(zeros), 1e-6).tensor()[0];
    CHECK(at_zero == doctest::Approx(elements * 1e-6).epsilon(1e-12));

    const Tensor three = Tensor::from(1, 1, 1, 1, {3.0});
    const double large = ad::charbonnier_sum(ad::constant(three), 1e-6).tensor()[0];
    CHECK(std::fabs(large - 3.0) < 1e-12);

    CHECK_THROWS_AS(ad::charbonnier_sum(ad::constant(three), 0.0), Error);
}

TEST_CASE("charbonnier gradient matches finite differences") {
    Rng rng(8);
    Tensor x = random_tensor(1, 2, 4, 4, rng, -1.0, 1.0);
    auto loss_value = [&]() { return ad::charbonnier_sum(ad::constant(x), 1e-6).tensor()[0]; };
    ad::Value vx = ad::leaf(x, true);
    ad::backward(ad::charbonnier_sum(vx, 1e-6));
    CHECK(testsupport::max_grad_err(vx.grad(), x, 1e-5, loss_value) < 1e-6);
}

TEST_CASE("adam: zero learning rate leaves parameters unchanged") {
    ad::ParamStore store;
    store.add("p", Tensor::from(1, 1, 1, 2, {1.5, -2.5}));
    ad::GradMap grads;
    grads.emplace("p", Tensor::from(1, 1, 1, 2, {10.0, -3.0}));
    store.adam_step(grads, {0.0, 0.9, 0.999, 1e-8, 0.0});
    CHECK(store.get("p")[0] == 1.5);
    CHECK(store.get("p")[1] == -2.5);
}

TEST_CASE("adam: bias-corrected first step has magnitude lr") {
    ad::ParamStore store;
    store.add("p", Tensor::from(1, 1, 1, 1, {0.7}));
    ad::GradMap grads;
    grads.emplace("p", Tensor::from(1, 1, 1, 1, {0.35}));
    const double lr = 1e-3;
    store.adam_step(grads, {lr, 0.9, 0.999, 1e-12, 0.0});
    CHECK(std::fabs(std::fabs(store.get("p")[0] - 0.7) - lr) < 1e-9);
}

TEST_CASE("adam: zero moments reduce to sign-SGD") {
    ad::ParamStore store;
    store.add("p", Tensor::from(1, 1, 1, 2, {1.0, 2.0}));
    ad::GradMap grads;
    grads.emplace("p", Tensor::from(1, 1, 1, 2, {4.0, -0.25}));
    const double lr = 0.01, eps = 1e-8;
    store.adam_step(grads, {lr, 0.0, 0.0, eps, 0.0});
    CHECK(store.get("p")[0] ==
          doctest::Approx(1.0 - lr * 4.0 / (4.0 + eps)).epsilon(1e-12));
    CHECK(store.get("p")[1] ==
          doctest::Approx(2.0 + lr * 0.25 / (0.25 + eps)).epsilon(1e-12));
}

TEST_CASE("adam: missing gradient acts as zero") {
    ad::ParamStore store;
    store.add("p", Tensor::from(1, 1, 1, 1, {1.0}));
    store.adam_step({}, {0.1, 0.9, 0.999, 1e-8, 0.0});
    CHECK(store.get("p")[0] == 1.0);

    // With weight decay the decoupled shrink still applies.
    store.adam_step({}, {0.1, 0.9, 0.999, 1e-8, 0.01});
    CHECK(store.get("p")[0] == doctest::Approx(1.0 - 0.1 * 0.01).epsilon(1e-12));
}

TEST_CASE("he_uniform stays within the fan-in bound") {
    Rng rng(4);
    const Tensor w = ad::he_uniform(8, 4, 3, 3, rng);
    const double bound = std::sqrt(2.0 / (4 * 3 * 3));
    CHECK(max_abs(w) <= bound);
    CHECK(max_abs(w) > 0.0);
}
