// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "purify/rng.hpp"
#include "purify/tape.hpp"

using namespace purify;
using ad::Op;
using ad::Shape;
using ad::Tape;
using ad::TapeTensor;

TEST_CASE("record: elementwise add") {
    Tape tape;
    TapeTensor out = tape.add(TapeTensor({2}, {1.0, 2.0}), TapeTensor({2}, {3.0, 4.0}));
    CHECK(out.values->at(0) == 4.0);
    CHECK(out.values->at(1) == 6.0);
}

TEST_CASE("record: identity matmul maps any 2-vector to itself") {
    Tape tape;
    TapeTensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
    for (double a : {-3.5, 0.0, 7.25}) {
        TapeTensor out = tape.matmul(eye, TapeTensor({2}, {a, a + 1.0}));
        CHECK(out.shape == Shape{2});
        CHECK(out.values->at(0) == a);
        CHECK(out.values->at(1) == a + 1.0);
    }
}

TEST_CASE("record: relu") {
    Tape tape;
    TapeTensor out = tape.relu(TapeTensor({2}, {-1.0, 2.0}));
    CHECK(out.values->at(0) == 0.0);
    CHECK(out.values->at(1) == 2.0);
}

TEST_CASE("record: shape mismatch is rejected naming the shapes") {
    Tape tape;
    try {
        tape.add(TapeTensor({2}, {1.0, 2.0}), TapeTensor({3}, {1.0, 2.0, 3.0}));
        FAIL("expected shape error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2]") != std::string::npos);
        CHECK(msg.find("[3]") != std::string::npos);
    }
    CHECK_THROWS_AS(tape.matmul(TapeTensor({2, 3}, std::vector<double>(6, 1.0)),
                                TapeTensor({2, 2}, std::vector<double>(4, 1.0))),
                    std::invalid_argument);
}

TEST_CASE("record via the generic entry point") {
    Tape tape;
    const TapeTensor in[2] = {TapeTensor({2}, {1.0, -2.0}), TapeTensor({2}, {0.5, 0.5})};
    TapeTensor out = tape.record(Op::kMul, in);
    CHECK(out.values->at(0) == 0.5);
    CHECK(out.values->at(1) == -1.0);
    CHECK(out.on_tape());
}

TEST_CASE("backward: sum gives all-ones gradient") {
    Tape tape;
    TapeTensor x = tape.variable(TapeTensor({3}, {5.0, -1.0, 2.0}));
    TapeTensor out = tape.sum(x);
    const auto g = tape.backward(out).at(x);
    CHECK(g == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("backward: x*x at x=3 gives gradient 6") {
    Tape tape;
    TapeTensor x = tape.variable(TapeTensor({1}, {3.0}));
    TapeTensor out = tape.sum(tape.mul(x, x));
    const auto g = tape.backward(out).at(x);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward: rejects non-scalar output and foreign tensors") {
    Tape tape;
    TapeTensor x = tape.variable(TapeTensor({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
    Tape other;
    TapeTensor y = other.variable(TapeTensor({1}, {1.0}));
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("backward: untouched leaves map to zero arrays, constants get none") {
    Tape tape;
    TapeTensor x = tape.variable(TapeTensor({2}, {1.0, 2.0}));
    TapeTensor unused = tape.variable(TapeTensor({2}, {7.0, 8.0}));
    TapeTensor c = tape.constant(TapeTensor({2}, {1.0, 1.0}));
    TapeTensor out = tape.sum(tape.mul(x, c));
    const auto grads = tape.backward(out);
    CHECK(grads.at(x) == std::vector<double>{1.0, 1.0});
    CHECK_FALSE(grads.touched(unused));
    CHECK(grads.at(unused) == std::vector<double>{0.0, 0.0});
    CHECK_FALSE(grads.touched(c));
}

TEST_CASE("backward: matmul, scale, exp, log, maximum rules") {
    // d/dA sum(A*B) = B^T reachable entries etc.; checked against closed forms.
    Tape tape;
    TapeTensor a = tape.variable(TapeTensor({2, 2}, {1.0, 2.0, 3.0, 4.0}));
    TapeTensor b = tape.constant(TapeTensor({2, 2}, {0.5, -1.0, 1.5, 2.0}));
    TapeTensor out = tape.sum(tape.matmul(a, b));
    const auto g = tape.backward(out).at(a);
    // d sum(AB) / dA[i,k] = sum_j B[k,j]
    CHECK(g[0] == doctest::Approx(-0.5));
    CHECK(g[1] == doctest::Approx(3.5));
    CHECK(g[2] == doctest::Approx(-0.5));
    CHECK(g[3] == doctest::Approx(3.5));

    Tape t2;
    TapeTensor x = t2.variable(TapeTensor({2}, {0.3, 1.2}));
    TapeTensor out2 = t2.sum(t2.log(t2.exp(t2.scale(x, 2.0))));
    const auto g2 = t2.backward(out2).at(x);
    CHECK(g2[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g2[1] == doctest::Approx(2.0).epsilon(1e-12));

    Tape t3;
    TapeTensor u = t3.variable(TapeTensor({3}, {1.0, 5.0, 2.0}));
    TapeTensor v = t3.variable(TapeTensor({3}, {2.0, 4.0, 2.0}));
    TapeTensor out3 = t3.sum(t3.maximum(u, v));
    const auto gm = t3.backward(out3);
    CHECK(gm.at(u) == std::vector<double>{0.0, 1.0, 1.0});  // tie goes to the first operand
    CHECK(gm.at(v) == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("backward: row-broadcast add routes column sums to the bias") {
    Tape tape;
    TapeTensor a = tape.variable(TapeTensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    TapeTensor bias = tape.variable(TapeTensor({1, 2}, {0.5, -0.5}));
    TapeTensor out = tape.sum(tape.add(a, bias));
    const auto g = tape.backward(out);
    CHECK(g.at(bias) == std::vector<double>{3.0, 3.0});
    CHECK(g.at(a) == std::vector<double>(6, 1.0));
}

TEST_CASE("softmax-cross-entropy forward and analytic gradient") {
    // Oracle: p - onehot, p from an independently computed softmax.
    const std::vector<double> logits = {0.2, -0.1, 1.3};
    const int label = 1;
    double z = 0.0;
    std::array<double, 3> p{};
    const double m = 1.3;
    for (int j = 0; j < 3; ++j) z += std::exp(logits[j] - m);
    for (int j = 0; j < 3; ++j) p[j] = std::exp(logits[j] - m) / z;
    const double expected_loss = -std::log(p[label]);

    Tape tape;
    TapeTensor x = tape.variable(TapeTensor({1, 3}, logits));
    TapeTensor loss = tape.softmax_cross_entropy(x, {label});
    CHECK(loss.item() == doctest::Approx(expected_loss).epsilon(1e-14));
    const auto g = tape.backward(loss).at(x);
    for (int j = 0; j < 3; ++j) {
        const double expect = p[j] - (j == label ? 1.0 : 0.0);
        CHECK(g[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("tape determinism: replay reproduces recorded values bit-exactly") {
    RandomStream rng(42);
    Tape tape;
    std::vector<double> xv(8), yv(8);
    rng.fill_normal(xv);
    rng.fill_normal(yv);
    TapeTensor x = tape.variable(TapeTensor({2, 4}, xv));
    TapeTensor y = tape.constant(TapeTensor({2, 4}, yv));
    TapeTensor h = tape.relu(tape.add(x, y));
    TapeTensor s = softplus(tape, tape.mul(h, x));
    tape.sum(s);
    CHECK(tape.replay_matches());
}

TEST_CASE("finite differences: sum has zero error up to rounding") {
    RandomStream rng(7);
    std::vector<double> xv(5);
    rng.fill_normal(xv);
    const double err = ad::finite_difference_check(
        [](Tape& t, const TapeTensor& x) { return t.sum(x); }, TapeTensor({5}, xv), 1e-5);
    CHECK(err < 1e-9);
}

TEST_CASE("finite differences: softmax-cross-entropy of a 3-logit vector") {
    RandomStream rng(11);
    std::vector<double> xv(3);
    rng.fill_normal(xv);
    const double err = ad::finite_difference_check(
        [](Tape& t, const TapeTensor& x) { return t.softmax_cross_entropy(x, {1}); },
        TapeTensor({1, 3}, xv), 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("finite differences: non-finite values are rejected with a coordinate") {
    CHECK_THROWS_AS(ad::finite_difference_check(
                        [](Tape& t, const TapeTensor& x) { return t.sum(t.log(x)); },
                        TapeTensor({2}, {1.0, -1.0}), 1e-5),
                    std::runtime_error);
}

TEST_CASE("gradient oracle property: random primitive composites pass fd checks") {
    RandomStream rng(123);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> xv(4);
        rng.fill_normal(xv);
        std::vector<double> wv(16);
        rng.fill_normal(wv);
        const TapeTensor w({4, 4}, wv);
        const double err = ad::finite_difference_check(
            [&](Tape& t, const TapeTensor& x) {
                TapeTensor h = t.matmul(x, t.constant(w));
                TapeTensor s = softplus(t, h);
                TapeTensor m = t.mul(s, s);
                return t.scale(t.sum(m), 0.25);
            },
            TapeTensor({1, 4}, xv), 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("mean squared error composite") {
    Tape tape;
    TapeTensor a = tape.variable(TapeTensor({2}, {1.0, 3.0}));
    TapeTensor b = tape.constant(TapeTensor({2}, {0.0, 1.0}));
    TapeTensor mse = mean_squared_error(tape, a, b);
    CHECK(mse.item() == doctest::Approx(2.5).epsilon(1e-14));
    const auto g = tape.backward(mse).at(a);
    CHECK(g[0] == doctest::Approx(1.0));
    CHECK(g[1] == doctest::Approx(2.0));
}
