// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include "doctest.h"
#include "purify/denoiser.hpp"
#include "purify/scores.hpp"

using namespace purify;
using ad::Tape;
using ad::TapeTensor;

namespace {

VarianceSchedule raw_schedule(std::vector<double> alphas) {
    VarianceSchedule s;
    s.T = static_cast<int>(alphas.size()) - 1;
    s.alphas = std::move(alphas);
    s.eta = 1.0;
    s.sigmas.assign(s.alphas.size(), 0.0);
    return s;
}

GmmSpec random_spec(RandomStream& rng, int k) {
    GmmSpec spec;
    std::vector<double> w(k);
    double wsum = 0;
    for (double& v : w) {
        v = rng.uniform(0.2, 1.0);
        wsum += v;
    }
    for (int i = 0; i < k; ++i) {
        GmmSpec::Component c;
        c.weight = w[i] / wsum;
        c.mean = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const double a = rng.uniform(0.3, 1.5);
        const double d = rng.uniform(0.3, 1.5);
        const double b = rng.uniform(-0.2, 0.2) * std::sqrt(a * d);
        c.cov = {a, b, b, d};
        c.cls = i % 2;
        spec.components.push_back(c);
    }
    // Exact unit weight sum.
    double total = 0;
    for (const auto& c : spec.components) total += c.weight;
    spec.components.back().weight += 1.0 - total;
    spec.validate();
    return spec;
}

}  // namespace

TEST_CASE("gmm validation rejects bad specs") {
    GmmSpec bad;
    bad.components.push_back({0.5, {0, 0}, {1, 0, 0, 1}, 0});
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);  // weights must sum to 1
    GmmSpec asym;
    asym.components.push_back({1.0, {0, 0}, {1, 0.5, -0.5, 1}, 0});
    CHECK_THROWS_AS(asym.validate(), std::invalid_argument);
    GmmSpec indef;
    indef.components.push_back({1.0, {0, 0}, {1, 2, 2, 1}, 0});
    CHECK_THROWS_AS(indef.validate(), std::invalid_argument);
}

TEST_CASE("ring spec geometry") {
    const GmmSpec spec = make_ring_spec(4, 4.0, 0.3);
    CHECK(spec.components.size() == 8);
    CHECK(spec.num_classes() == 2);
    const double gap = min_opposite_class_gap(spec);
    CHECK(gap == doctest::Approx(2.0 * 4.0 * std::sin(M_PI / 8.0)).epsilon(1e-12));
}

TEST_CASE("gmm score: single component with alpha = 1 gives mu - x") {
    const VarianceSchedule s = raw_schedule({1.0, 0.5});
    GmmSpec spec;
    spec.components.push_back({1.0, {1.5, -0.5}, {1, 0, 0, 1}, 0});
    const std::vector<double> x = {0.25, 0.75};
    const auto score = gmm_score_t(spec, x, 0, s);
    CHECK(score[0] == doctest::Approx(1.5 - 0.25).epsilon(1e-12));
    CHECK(score[1] == doctest::Approx(-0.5 - 0.75).epsilon(1e-12));
}

TEST_CASE("gmm score: symmetric two-component mixture vanishes at the origin") {
    const VarianceSchedule s = build_schedule(5, 0.2, 0.9, 1.0);
    GmmSpec spec;
    spec.components.push_back({0.5, {2.0, 1.0}, {0.8, 0, 0, 0.8}, 0});
    spec.components.push_back({0.5, {-2.0, -1.0}, {0.8, 0, 0, 0.8}, 1});
    const std::vector<double> x = {0.0, 0.0};
    const auto score = gmm_score_t(spec, x, 3, s);
    CHECK(score[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(score[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gmm score: matches finite differences of the log-density to 1e-6") {
    const VarianceSchedule s = build_schedule(6, 0.15, 0.95, 1.0);
    RandomStream rng(314);
    const GmmSpec spec = random_spec(rng, 4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> x = {rng.uniform(-4, 4), rng.uniform(-4, 4)};
        const auto score = gmm_score_t(spec, x, 3, s);
        const double h = 1e-6;
        for (int j = 0; j < 2; ++j) {
            std::vector<double> hi = x, lo = x;
            hi[j] += h;
            lo[j] -= h;
            const double numeric =
                (gmm_log_density_t(spec, hi, 3, s) - gmm_log_density_t(spec, lo, 3, s)) / (2 * h);
            const double denom = std::max({std::fabs(score[j]), std::fabs(numeric), 1e-12});
            CHECK(std::fabs(score[j] - numeric) / denom < 1e-6);
        }
    }
}

TEST_CASE("gmm score: rejects non-finite input") {
    const VarianceSchedule s = build_schedule(5, 0.2, 0.9, 1.0);
    const GmmSpec spec = make_ring_spec();
    const std::vector<double> bad = {std::nan(""), 0.0};
    CHECK_THROWS_AS(gmm_score_t(spec, bad, 2, s), std::invalid_argument);
}

TEST_CASE("gmm score: tape composite equals the plain path bitwise") {
    const VarianceSchedule s = build_schedule(6, 0.15, 0.95, 1.0);
    RandomStream rng(2718);
    const GmmSpec spec = random_spec(rng, 5);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> x = {rng.uniform(-4, 4), rng.uniform(-4, 4)};
        const auto plain = gmm_score_t(spec, x, 4, s);
        Tape tape;
        TapeTensor xv = tape.variable(TapeTensor::row(x));
        TapeTensor taped = gmm_score_tape(tape, spec, xv, 4, s);
        CHECK(std::memcmp(plain.data(), taped.values->data(), 2 * sizeof(double)) == 0);
    }
}

TEST_CASE("gmm score: gradient through the composite passes finite differences") {
    const VarianceSchedule s = build_schedule(6, 0.15, 0.95, 1.0);
    RandomStream rng(999);
    const GmmSpec spec = random_spec(rng, 4);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> x = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const double err = ad::finite_difference_check(
            [&](Tape& t, const TapeTensor& xv) {
                TapeTensor sc = gmm_score_tape(t, spec, xv, 2, s);
                return t.sum(t.mul(sc, t.constant(TapeTensor::row({1.3, -0.4}))));
            },
            TapeTensor::row(x), 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("score_to_eps: zero score, closed-form scalar, and alpha = 1 rejection") {
    const VarianceSchedule s = raw_schedule({1.0, 0.75, 0.5});
    const std::vector<double> zero = {0.0, 0.0};
    CHECK(score_to_eps(zero, 1, s) == std::vector<double>{-0.0, -0.0});

    const std::vector<double> score = {2.0, -2.0};
    const auto eps = score_to_eps(score, 1, s);  // alpha = 0.75
    CHECK(eps[0] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(eps[1] == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(score_to_eps(score, 0, s), std::invalid_argument);
}

TEST_CASE("analytic estimator on N(0,I) data is the posterior-mean denoiser") {
    const VarianceSchedule s = build_schedule(6, 0.2, 0.95, 1.0);
    GmmSpec gauss;
    gauss.components.push_back({1.0, {0.0, 0.0}, {1, 0, 0, 1}, 0});
    const AnalyticGmmEstimator est(gauss, &s);
    const std::vector<double> x_t = {0.7, -1.9};
    const int t = 4;
    const auto eps = est.eps_plain(x_t, t);
    const double a = s.alpha(t);
    for (int j = 0; j < 2; ++j)
        CHECK(eps[j] == doctest::Approx(std::sqrt(1.0 - a) * x_t[j]).epsilon(1e-10));
    // x0_hat = (x_t - sqrt(1-a) eps)/sqrt(a) collapses to sqrt(a) x_t.
    for (int j = 0; j < 2; ++j) {
        const double x0_hat = (x_t[j] - std::sqrt(1.0 - a) * eps[j]) / std::sqrt(a);
        CHECK(x0_hat == doctest::Approx(std::sqrt(a) * x_t[j]).epsilon(1e-10));
    }
}

TEST_CASE("gmm score converges to the clean score as alpha -> 1") {
    const VarianceSchedule s = build_schedule(1, 0.5, 1.0 - 1e-6, 1.0);
    RandomStream rng(515);
    const GmmSpec spec = random_spec(rng, 4);
    const VarianceSchedule clean = raw_schedule({1.0, 0.5});
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> x = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const auto noised = gmm_score_t(spec, x, 0, s);       // alpha = 1 - 1e-6
        const auto exact = gmm_score_t(spec, x, 0, clean);    // alpha = 1
        const double diff = std::hypot(noised[0] - exact[0], noised[1] - exact[1]);
        const double denom = std::max(std::hypot(exact[0], exact[1]), 1e-12);
        CHECK(diff / denom < 1e-3);
    }
}

TEST_CASE("purify at T* = T reproduces the mixture class proportions") {
    const VarianceSchedule s = build_schedule(60, 1e-4, 1.0, 1.0);
    PurifierConfig cfg{60, make_tau(60, 1), &s};
    const GmmSpec spec = make_ring_spec();
    const AnalyticGmmEstimator est(spec, &s);
    const int n = 10000;
    std::vector<double> xs(2 * n, 1.0);
    std::vector<RandomStream> rngs;
    rngs.reserve(n);
    for (int i = 0; i < n; ++i) rngs.emplace_back(seed_mix(4242, i));
    std::vector<double> out(2 * n);
    purify_batch(xs.data(), n, cfg, est, rngs, out.data());
    int class0 = 0;
    for (int i = 0; i < n; ++i) {
        const std::span<const double> row(out.data() + 2 * i, 2);
        const int comp = spec.nearest_component(row);
        if (spec.components[static_cast<std::size_t>(comp)].cls == 0) ++class0;
    }
    const double p0 = static_cast<double>(class0) / n;
    CHECK(std::fabs(p0 - 0.5) < 3.0 * std::sqrt(0.25 / n));
}

// --- trained denoiser ---------------------------------------------------------

TEST_CASE("denoiser forward: deterministic, shape-preserving, embedding-checked") {
    const VarianceSchedule s = build_schedule(6, 0.2, 0.95, 1.0);
    RandomStream rng(9);
    DenoiserMlp model = init_denoiser(2, s.T, s.hash(), 2, 32, 8, rng);

    const std::vector<double> x = {0.4, -0.2};
    const auto a = MlpEstimator(&model).eps_plain(x, 3);
    const auto b = MlpEstimator(&model).eps_plain(x, 3);
    CHECK(a == b);
    CHECK(a.size() == 2);

    Tape tape;
    TapeTensor xv = tape.variable(TapeTensor::row(x));
    TapeTensor out = denoiser_forward(tape, model, xv, 3);
    CHECK(out.shape == ad::Shape{1, 2});
    CHECK(std::memcmp(out.values->data(), a.data(), 2 * sizeof(double)) == 0);

    CHECK_THROWS_AS(denoiser_forward(tape, model, xv, 7), std::invalid_argument);
    CHECK_THROWS_AS(denoiser_forward(tape, model, xv, -1), std::invalid_argument);
}

TEST_CASE("denoiser forward: gradient wrt x_t passes finite differences") {
    const VarianceSchedule s = build_schedule(6, 0.2, 0.95, 1.0);
    RandomStream rng(10);
    DenoiserMlp model = init_denoiser(2, s.T, s.hash(), 2, 24, 8, rng);
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const double err = ad::finite_difference_check(
            [&](Tape& t, const TapeTensor& xv) {
                return t.sum(denoiser_forward(t, model, xv, 2));
            },
            TapeTensor::row(x), 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("train_denoiser: zero epochs returns the initialized network unchanged") {
    const VarianceSchedule s = build_schedule(6, 0.2, 0.95, 1.0);
    RandomStream rng(11);
    DenoiserMlp model = init_denoiser(2, s.T, s.hash(), 2, 16, 4, rng);
    const std::vector<double> w0 = *model.mlp.weights[0].values;
    const std::vector<double> points = {0.0, 0.0, 1.0, 1.0};
    RandomStream train_rng(12);
    const auto losses = train_denoiser(points, 2, s, 0, 0.01, train_rng, &model);
    CHECK(losses.empty());
    CHECK(*model.mlp.weights[0].values == w0);
}

TEST_CASE("train_denoiser: divergence aborts naming the epoch") {
    const VarianceSchedule s = build_schedule(6, 0.2, 0.95, 1.0);
    RandomStream rng(13);
    DenoiserMlp model = init_denoiser(2, s.T, s.hash(), 3, 16, 4, rng);
    std::vector<double> points(200);
    RandomStream data_rng(14);
    data_rng.fill_normal(points);
    RandomStream train_rng(15);
    try {
        std::ignore = train_denoiser(points, 100, s, 50, 1e150, train_rng, &model);
        FAIL("expected divergence abort");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("train_denoiser: learns the closed-form optimum on N(0,I) data") {
    const VarianceSchedule s = build_schedule(6, 0.2, 0.95, 1.0);
    RandomStream rng(16);
    DenoiserMlp model = init_denoiser(2, s.T, s.hash(), 2, 48, 8, rng);
    const std::size_t n = 2000;
    std::vector<double> points(2 * n);
    RandomStream data_rng(17);
    data_rng.fill_normal(points);
    RandomStream train_rng(18);
    const auto losses = train_denoiser(points, n, s, 400, 0.01, train_rng, &model);
    REQUIRE(!losses.empty());

    // Held-out check against eps_opt(x_t, t) = sqrt(1-a_t) x_t.
    RandomStream test_rng(19);
    double mae = 0.0;
    int count = 0;
    const MlpEstimator est(&model);
    for (int i = 0; i < 300; ++i) {
        const int t = 1 + static_cast<int>(test_rng.index(static_cast<std::size_t>(s.T)));
        const std::vector<double> x0 = {test_rng.normal(), test_rng.normal()};
        auto [x_t, eps] = forward_noise_plain(x0, t, s, test_rng);
        const auto pred = est.eps_plain(x_t, t);
        const double c = std::sqrt(1.0 - s.alpha(t));
        for (int j = 0; j < 2; ++j) {
            mae += std::fabs(pred[j] - c * x_t[j]);
            ++count;
        }
    }
    mae /= count;
    CHECK(mae < 0.05);
}

TEST_CASE("train_denoiser: on the 2D mixture the loss drops by at least 5x") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    const GmmSpec spec = make_ring_spec();
    RandomStream data_rng(20);
    const std::size_t n = 2000;
    std::vector<double> points(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = spec.sample(data_rng);
        points[2 * i] = p[0];
        points[2 * i + 1] = p[1];
    }
    RandomStream rng(21);
    DenoiserMlp model = init_denoiser(2, s.T, s.hash(), 2, 48, 8, rng);
    RandomStream train_rng(22);
    const auto losses = train_denoiser(points, n, s, 400, 0.01, train_rng, &model);
    REQUIRE(losses.size() == 400);
    CHECK(losses.back() < losses.front() / 5.0);
}

TEST_CASE("trained and analytic estimators agree on the mixture (MAE < 0.15)") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    const GmmSpec spec = make_ring_spec();
    RandomStream data_rng(23);
    const std::size_t n = 3000;
    std::vector<double> points(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = spec.sample(data_rng);
        points[2 * i] = p[0];
        points[2 * i + 1] = p[1];
    }
    RandomStream rng(24);
    DenoiserMlp model = init_denoiser(2, s.T, s.hash(), 3, 64, 12, rng);
    RandomStream train_rng(25);
    const auto losses = train_denoiser(points, n, s, 1200, 0.005, train_rng, &model);
    REQUIRE(!losses.empty());

    const MlpEstimator trained(&model);
    const AnalyticGmmEstimator analytic(spec, &s);
    RandomStream test_rng(26);
    double mae = 0.0;
    int count = 0;
    for (int i = 0; i < 400; ++i) {
        const int t = 1 + static_cast<int>(test_rng.index(static_cast<std::size_t>(s.T)));
        const auto x0 = spec.sample(test_rng);
        auto [x_t, eps] = forward_noise_plain(std::span<const double>(x0), t, s, test_rng);
        const auto a = trained.eps_plain(x_t, t);
        const auto b = analytic.eps_plain(x_t, t);
        for (int j = 0; j < 2; ++j) {
            mae += std::fabs(a[j] - b[j]);
            ++count;
        }
    }
    mae /= count;
    CHECK(mae < 0.15);
}
