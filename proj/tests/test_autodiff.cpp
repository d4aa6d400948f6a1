#include "doctest.h"

#include <cmath>

#include "evfi/autodiff.hpp"
#include "evfi/rng.hpp"

using namespace evfi;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// central finite differences on a scalar-valued graph builder
template <typename BuildFn>
double max_rel_grad_error(Tensor& input, BuildFn build, double eps = 1e-5) {
    Var x = leaf(input, true);
    Var loss = build(x);
    backward(loss);
    Tensor analytic = x->grad;

    double worst = 0.0;
    for (size_t i = 0; i < input.size(); ++i) {
        double keep = input[i];
        input[i] = keep + eps;
        double up = build(leaf(input, false))->value[0];
        input[i] = keep - eps;
        double dn = build(leaf(input, false))->value[0];
        input[i] = keep;
        double fd = (up - dn) / (2 * eps);
        double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

} // namespace

TEST_CASE("elementwise ops match finite differences") {
    Rng rng(11);
    Tensor a = random_tensor({2, 4, 4}, rng);
    Tensor b = random_tensor({2, 4, 4}, rng);
    Var bv = constant(b);

    auto check = [&](auto build) { CHECK(max_rel_grad_error(a, build) < 1e-6); };
    check([&](Var x) { return mean_sq_diff(tanh_op(x), bv); });
    check([&](Var x) { return mean_sq_diff(sigmoid_op(x), bv); });
    check([&](Var x) { return mean_sq_diff(mul(x, bv), bv); });
    check([&](Var x) { return mean_sq_diff(affine(x, 2.5, -0.25), bv); });
    check([&](Var x) { return mean_sq_diff(add(x, bv), bv); });
    check([&](Var x) { return mean_sq_diff(sub(bv, x), bv); });
}

TEST_CASE("conv2d gradients w.r.t. input, weight and bias") {
    Rng rng(22);
    Tensor x = random_tensor({3, 6, 6}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, -0.4, 0.4);
    Tensor b = random_tensor({4}, rng, -0.2, 0.2);
    Tensor target = random_tensor({4, 6, 6}, rng);
    Var tv = constant(target);

    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(conv2d(xi, constant(w), constant(b), 1, 1), tv);
    }) < 1e-6);
    CHECK(max_rel_grad_error(w, [&](Var wi) {
        return mean_sq_diff(conv2d(constant(x), wi, constant(b), 1, 1), tv);
    }) < 1e-6);
    CHECK(max_rel_grad_error(b, [&](Var bi) {
        return mean_sq_diff(conv2d(constant(x), constant(w), bi, 1, 1), tv);
    }) < 1e-6);

    Tensor target2 = random_tensor({4, 3, 3}, rng);
    Var tv2 = constant(target2);
    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(conv2d(xi, constant(w), constant(b), 2, 1), tv2);
    }) < 1e-6);
}

TEST_CASE("structural ops route gradients correctly") {
    Rng rng(33);
    Tensor x = random_tensor({2, 4, 4}, rng);
    Tensor t8 = random_tensor({2, 8, 8}, rng);
    Var t8v = constant(t8);
    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(upsample2_nearest(xi), t8v);
    }) < 1e-6);

    Tensor tpad = random_tensor({2, 6, 7}, rng);
    Var tpadv = constant(tpad);
    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(pad_bottom_right(xi, 6, 7), tpadv);
    }) < 1e-6);

    Tensor tc = random_tensor({2, 2, 2}, rng);
    Var tcv = constant(tc);
    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(crop_top_left(xi, 2, 2), tcv);
    }) < 1e-6);

    Tensor w1 = random_tensor({1, 4, 4}, rng, 0.1, 0.9);
    Tensor t2 = random_tensor({2, 4, 4}, rng);
    Var t2v = constant(t2);
    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(broadcast_mul(constant(w1), xi), t2v);
    }) < 1e-6);
    CHECK(max_rel_grad_error(w1, [&](Var wi) {
        return mean_sq_diff(broadcast_mul(wi, constant(x)), t2v);
    }) < 1e-6);

    Tensor other = random_tensor({3, 4, 4}, rng);
    Tensor t5 = random_tensor({5, 4, 4}, rng);
    Var t5v = constant(t5);
    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(concat_channels({xi, constant(other)}), t5v);
    }) < 1e-6);
    Tensor tslice = random_tensor({1, 4, 4}, rng);
    Var tslicev = constant(tslice);
    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(slice_channels(xi, 1, 2), tslicev);
    }) < 1e-6);
}

TEST_CASE("instance norm gradients") {
    Rng rng(44);
    Tensor x = random_tensor({3, 5, 5}, rng);
    Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({3}, rng, -0.3, 0.3);
    Tensor target = random_tensor({3, 5, 5}, rng);
    Var tv = constant(target);

    CHECK(max_rel_grad_error(x, [&](Var xi) {
        return mean_sq_diff(instance_norm(xi, constant(gamma), constant(beta)), tv);
    }, 1e-5) < 1e-5);
    CHECK(max_rel_grad_error(gamma, [&](Var gi) {
        return mean_sq_diff(instance_norm(constant(x), gi, constant(beta)), tv);
    }) < 1e-6);
    CHECK(max_rel_grad_error(beta, [&](Var bi) {
        return mean_sq_diff(instance_norm(constant(x), constant(gamma), bi), tv);
    }) < 1e-6);
}

TEST_CASE("a node shared by two paths backpropagates once") {
    Tensor x({2}, 3.0);
    Var xv = leaf(x, true);
    Var y = mul(xv, xv); // x^2
    Var z = add(y, y);   // 2 x^2 -> d/dx = 4x = 12
    Var loss = weighted_sum({mean_sq_diff(z, constant(Tensor({2}, 0.0)))}, {1.0});
    // loss = mean_i (2 x_i^2)^2 so dL/dx_i = (1/2) * 2 z_i * 4 x_i = 8 x_i^3 = 216
    backward(loss);
    CHECK(xv->grad[0] == doctest::Approx(8 * 27).epsilon(1e-12));
    CHECK(xv->grad[1] == doctest::Approx(8 * 27).epsilon(1e-12));
}

TEST_CASE("leaky relu and clamp pass gradients on their active regions") {
    Tensor x({4});
    x[0] = -2.0;
    x[1] = 0.5;
    x[2] = 1.5;
    x[3] = 0.25;
    Var xv = leaf(x, true);
    Var loss = weighted_sum({mean_abs_diff(clamp01(xv), constant(Tensor({4}, 0.0)))}, {4.0});
    backward(loss);
    CHECK(xv->grad[0] == 0.0);  // clamped below
    CHECK(xv->grad[1] == 1.0);  // inside
    CHECK(xv->grad[2] == 0.0);  // clamped above
    CHECK(xv->grad[3] == 1.0);

    Var lv = leaf(x, true);
    Var act = leaky_relu(lv, 0.1);
    backward(weighted_sum({mean_abs_diff(act, constant(Tensor({4}, -100.0)))}, {4.0}));
    CHECK(lv->grad[0] == doctest::Approx(0.1));
    CHECK(lv->grad[1] == doctest::Approx(1.0));
}
