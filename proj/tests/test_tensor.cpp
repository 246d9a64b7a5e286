#include <doctest.h>

#include <cmath>

#include "eegdec/gradcheck.hpp"
#include "eegdec/rng.hpp"
#include "eegdec/tensor.hpp"

using namespace eegdec;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.values_mut()) v = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("tensor invariants") {
    Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.at({1, 2}) == 6.0);
    CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), DimError);
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), DimError);
    CHECK_FALSE(t.has_grad());
    t.grad();
    CHECK(t.has_grad());
    CHECK(t.grad_view().size() == 6);
}

TEST_CASE("matmul identity and hand cases") {
    Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from_values({2, 2}, {2.5, -1, 7, 0.25});
    Tensor out = matmul(nullptr, eye, m);
    for (int64_t i = 0; i < 4; ++i) CHECK(out.values()[i] == m.values()[i]);

    Tensor a = Tensor::from_values({1, 2}, {1, 2});
    Tensor b = Tensor::from_values({2, 1}, {3, 4});
    CHECK(matmul(nullptr, a, b).scalar_value() == 11.0);

    CHECK_THROWS_AS(matmul(nullptr, Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimError);
    CHECK_THROWS_AS(matmul(nullptr, Tensor::zeros({3}), Tensor::zeros({3, 2})), DimError);
}

TEST_CASE("matmul gradient of sum(A*B) wrt A is ones x B^T") {
    Rng rng(7);
    Tensor a = rand_tensor({3, 4}, rng);
    Tensor b = rand_tensor({4, 2}, rng);
    b.set_requires_grad(false);

    Tape tape;
    Tensor loss = sum(&tape, matmul(&tape, a, b));
    backward(loss, tape);

    // analytic: dA[i,k] = sum_j B[k,j]
    for (int64_t i = 0; i < 3; ++i) {
        for (int64_t k = 0; k < 4; ++k) {
            double expected = 0.0;
            for (int64_t j = 0; j < 2; ++j) expected += b.at({k, j});
            CHECK(a.grad_view()[i * 4 + k] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    // and against the finite-difference oracle
    const double err = finite_diff_max_rel_err(
        [&]() { return sum(nullptr, matmul(nullptr, a, b)).scalar_value(); }, {a});
    CHECK(err < 1e-4);
}

TEST_CASE("elementwise examples") {
    Tensor x = Tensor::from_values({3}, {-1, 0, 2});
    Tensor y = abs(nullptr, x);
    CHECK(y.values()[0] == 1.0);
    CHECK(y.values()[1] == 0.0);
    CHECK(y.values()[2] == 2.0);

    Tensor r = relu(nullptr, Tensor::from_values({2}, {-3, 5}));
    CHECK(r.values()[0] == 0.0);
    CHECK(r.values()[1] == 5.0);

    CHECK_THROWS_AS(add(nullptr, Tensor::zeros({2, 3}), Tensor::zeros({4})), DimError);
}

TEST_CASE("abs subgradient at zero is zero") {
    Tensor x = Tensor::from_values({3}, {-2, 0, 3});
    x.set_requires_grad(true);
    Tape tape;
    backward(sum(&tape, abs(&tape, x)), tape);
    CHECK(x.grad_view()[0] == -1.0);
    CHECK(x.grad_view()[1] == 0.0);
    CHECK(x.grad_view()[2] == 1.0);
}

TEST_CASE("d/dx exp(x) at x=1 matches e") {
    Tensor x = Tensor::from_values({1}, {1.0});
    x.set_requires_grad(true);
    Tape tape;
    backward(sum(&tape, exp(&tape, x)), tape);
    CHECK(x.grad_view()[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-9));

    const double err = finite_diff_max_rel_err(
        [&]() { return sum(nullptr, exp(nullptr, x)).scalar_value(); }, {x});
    CHECK(err < 1e-6);
}

TEST_CASE("reduction examples") {
    CHECK(mean(nullptr, Tensor::from_values({3}, {1, 2, 3})).scalar_value() == 2.0);

    Tensor m = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor s = sum(nullptr, m, {0});
    CHECK(s.shape() == Shape{2});
    CHECK(s.values()[0] == 4.0);
    CHECK(s.values()[1] == 6.0);

    CHECK_THROWS_AS(sum(nullptr, m, {2}), DimError);
    CHECK_THROWS_AS(sum(nullptr, m, {-3}), DimError);

    // gradient of mean is 1/n per element
    Tensor x = Tensor::from_values({4}, {1, 2, 3, 4});
    x.set_requires_grad(true);
    Tape tape;
    backward(mean(&tape, x), tape);
    for (int64_t i = 0; i < 4; ++i) CHECK(x.grad_view()[i] == 0.25);
}

TEST_CASE("softmax examples and properties") {
    Tensor flat = softmax(nullptr, Tensor::from_values({2}, {0, 0}), 0);
    CHECK(flat.values()[0] == doctest::Approx(0.5));
    CHECK(flat.values()[1] == doctest::Approx(0.5));

    Tensor big = softmax(nullptr, Tensor::from_values({2}, {1000, 1000}), 0);
    CHECK(big.values()[0] == doctest::Approx(0.5));
    CHECK(std::isfinite(big.values()[1]));

    Rng rng(3);
    Tensor x = rand_tensor({5, 7}, rng, -50.0, 50.0);
    Tensor y = softmax(nullptr, x, -1);
    for (int64_t i = 0; i < 5; ++i) {
        double row_sum = 0.0;
        for (int64_t j = 0; j < 7; ++j) {
            CHECK(y.values()[i * 7 + j] >= 0.0);
            row_sum += y.values()[i * 7 + j];
        }
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("softmax jacobian matches finite differences") {
    Rng rng(11);
    Tensor x = rand_tensor({3, 4}, rng);
    Tensor coeff = rand_tensor({3, 4}, rng, 0.5, 1.5);
    coeff.set_requires_grad(false);

    Tape tape;
    backward(sum(&tape, mul(&tape, softmax(&tape, x, 1), coeff)), tape);
    const double err = finite_diff_max_rel_err(
        [&]() {
            return sum(nullptr, mul(nullptr, softmax(nullptr, x, 1), coeff)).scalar_value();
        },
        {x});
    CHECK(err < 1e-5);
}

TEST_CASE("backward basics") {
    Tensor x = Tensor::from_values({3}, {1, 2, 3});
    x.set_requires_grad(true);

    Tape tape;
    Tensor loss = sum(&tape, x);
    backward(loss, tape);
    for (int64_t i = 0; i < 3; ++i) CHECK(x.grad_view()[i] == 1.0);

    x.zero_grad();
    Tensor x2 = Tensor::from_values({2}, {1, 2});
    x2.set_requires_grad(true);
    Tape tape2;
    backward(sum(&tape2, mul(&tape2, x2, x2)), tape2);
    CHECK(x2.grad_view()[0] == 2.0);
    CHECK(x2.grad_view()[1] == 4.0);

    CHECK_THROWS_AS(backward(x, tape), ContractError); // non-scalar loss
}

TEST_CASE("gradient accumulation: two backward passes double leaf grads") {
    Rng rng(5);
    Tensor x = rand_tensor({4}, rng);
    Tape tape;
    Tensor loss = sum(&tape, mul(&tape, x, exp(&tape, x)));
    backward(loss, tape);
    std::vector<double> once(x.grad_view().begin(), x.grad_view().end());
    backward(loss, tape);
    for (size_t i = 0; i < once.size(); ++i) {
        CHECK(x.grad_view()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-14));
    }
}

TEST_CASE("ops are deterministic") {
    Rng rng1(99), rng2(99);
    Tensor a1 = rand_tensor({3, 5}, rng1), a2 = rand_tensor({3, 5}, rng2);
    Tensor b1 = rand_tensor({5, 2}, rng1), b2 = rand_tensor({5, 2}, rng2);
    Tensor y1 = matmul(nullptr, a1, b1), y2 = matmul(nullptr, a2, b2);
    for (int64_t i = 0; i < y1.numel(); ++i) CHECK(y1.values()[i] == y2.values()[i]);
    Tensor s1 = softmax(nullptr, y1, -1), s2 = softmax(nullptr, y2, -1);
    for (int64_t i = 0; i < s1.numel(); ++i) CHECK(s1.values()[i] == s2.values()[i]);
}

TEST_CASE("broadcasting rules") {
    Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_values({3}, {10, 20, 30});
    Tensor y = add(nullptr, a, b);
    CHECK(y.at({0, 0}) == 11.0);
    CHECK(y.at({1, 2}) == 36.0);

    Tensor col = Tensor::from_values({2, 1}, {100, 200});
    Tensor z = add(nullptr, a, col);
    CHECK(z.at({0, 2}) == 103.0);
    CHECK(z.at({1, 0}) == 204.0);

    CHECK(broadcast_shape({4, 1, 3}, {2, 1}) == Shape{4, 2, 3});
    CHECK_THROWS_AS(broadcast_shape({2, 3}, {2, 4}), DimError);
}

TEST_CASE("broadcast gradients reduce correctly") {
    Rng rng(13);
    Tensor a = rand_tensor({2, 3, 4}, rng);
    Tensor b = rand_tensor({3, 1}, rng);
    Tape tape;
    backward(sum(&tape, mul(&tape, a, b)), tape);
    const double err = finite_diff_max_rel_err(
        [&]() { return sum(nullptr, mul(nullptr, a, b)).scalar_value(); }, {a, b});
    CHECK(err < 1e-4);
}

TEST_CASE("every differentiable op agrees with central differences") {
    const auto rows = run_gradient_checks(42);
    for (const auto& row : rows) {
        INFO(row.name, " max_rel_err=", row.max_rel_err);
        CHECK(row.pass);
    }
}

TEST_CASE("permute and reshape round structure") {
    Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor t = permute(nullptr, a, {1, 0});
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.at({0, 1}) == 4.0);
    CHECK(t.at({2, 0}) == 3.0);

    Tensor r = reshape(nullptr, a, {3, 2});
    CHECK(r.at({0, 1}) == 2.0);
    CHECK_THROWS_AS(reshape(nullptr, a, {4, 2}), DimError);
    CHECK_THROWS_AS(permute(nullptr, a, {0, 0}), DimError);
}
