// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include "doctest.h"
#include "purify/diffusion.hpp"
#include "purify/scores.hpp"

using namespace purify;
using ad::Tape;
using ad::TapeTensor;

namespace {

// Schedule with alpha values outside what build_schedule allows (degenerate
// endpoints for the closed-form checks).
VarianceSchedule raw_schedule(std::vector<double> alphas, double eta) {
    VarianceSchedule s;
    s.T = static_cast<int>(alphas.size()) - 1;
    s.alphas = std::move(alphas);
    s.eta = eta;
    s.sigmas.assign(s.alphas.size(), 0.0);
    for (int t = 1; t <= s.T; ++t)
        if (s.alphas[t - 1] < 1.0) s.sigmas[t] = s.sigma_jump(t, t - 1);
    return s;
}

// Test-only estimator returning a fixed noise vector (the "perfect denoiser"
// when fed the true forward noise).
class ConstEstimator final : public NoiseEstimator {
public:
    explicit ConstEstimator(std::vector<double> eps) : eps_(std::move(eps)) {}
    int dim() const override { return static_cast<int>(eps_.size()); }
    TapeTensor eps(Tape& tape, const TapeTensor& x_t, int) const override {
        return tape.constant(TapeTensor(x_t.shape, eps_));
    }
    void eps_batch(const double* /*x_t*/, std::size_t n, int, double* out) const override {
        for (std::size_t i = 0; i < n; ++i)
            std::copy(eps_.begin(), eps_.end(), out + i * eps_.size());
    }

private:
    std::vector<double> eps_;
};

// Exact score of N(0, I) data: score(x) = -x, so eps = sqrt(1-a_t) x_t.
class StandardGaussianEstimator final : public NoiseEstimator {
public:
    explicit StandardGaussianEstimator(const VarianceSchedule* sched) : sched_(sched) {}
    int dim() const override { return 2; }
    TapeTensor eps(Tape& tape, const TapeTensor& x_t, int t) const override {
        return tape.scale(x_t, std::sqrt(1.0 - sched_->alpha(t)));
    }
    void eps_batch(const double* x_t, std::size_t n, int t, double* out) const override {
        const double c = std::sqrt(1.0 - sched_->alpha(t));
        for (std::size_t i = 0; i < 2 * n; ++i) out[i] = c * x_t[i];
    }

private:
    const VarianceSchedule* sched_;
};

}  // namespace

TEST_CASE("build_schedule: the Sec-4.1 configuration") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    CHECK(s.alphas[0] == doctest::Approx(1.0 - 1e-9).epsilon(1e-12));
    CHECK(s.alphas[10] == 0.1);
    for (int t = 1; t <= 10; ++t) CHECK(s.alphas[t] < s.alphas[t - 1]);
    CHECK_NOTHROW(s.validate());
}

TEST_CASE("build_schedule: eta = 0 gives a deterministic sampler") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 0.0);
    for (int t = 1; t <= 10; ++t) CHECK(s.sigmas[t] == 0.0);
}

TEST_CASE("build_schedule: T=1 sigma matches the closed formula") {
    const VarianceSchedule s = build_schedule(1, 0.3, 0.9, 1.0);
    CHECK(s.alphas[0] == 0.9);
    CHECK(s.alphas[1] == 0.3);
    const double expect = std::sqrt(0.1 / 0.7) * std::sqrt(1.0 - 0.3 / 0.9);
    CHECK(s.sigmas[1] == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("build_schedule: non-monotone or invalid requests are rejected") {
    CHECK_THROWS_AS(build_schedule(10, 0.9, 0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(10, -0.1, 0.9, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(0, 0.1, 0.9, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(10, 0.1, 0.9, 1.5), std::invalid_argument);
}

TEST_CASE("schedule invariant: sigma^2 <= 1 - alpha_prev for all jumps") {
    const VarianceSchedule s = build_schedule(16, 0.004, 1.0, 1.0);
    for (int t = 1; t <= s.T; ++t)
        for (int p = 0; p < t; ++p) {
            const double sig = s.sigma_jump(t, p);
            CHECK(sig * sig <= 1.0 - s.alpha(p) + 1e-12);
        }
}

TEST_CASE("forward_noise: alpha = 1 (degenerate) returns x exactly") {
    const VarianceSchedule s = raw_schedule({1.0, 0.5}, 1.0);
    RandomStream rng(3);
    Tape tape;
    TapeTensor x = tape.variable(TapeTensor::row({1.25, -2.5}));
    auto [x_t, eps] = forward_noise(tape, x, 0, s, rng);
    CHECK(x_t.values->at(0) == 1.25);
    CHECK(x_t.values->at(1) == -2.5);
}

TEST_CASE("forward_noise: x = 0 gives sqrt(1-a) times the replayed draw") {
    VarianceSchedule s = build_schedule(4, 0.25, 0.9, 1.0);
    s.alphas[2] = 0.25;  // pin the level used below
    RandomStream rng(99);
    std::vector<double> expect(2);
    {
        RandomStream replay(99);
        replay.fill_normal(expect);
        for (double& v : expect) v *= std::sqrt(0.75);
    }
    const std::vector<double> zero = {0.0, 0.0};
    auto [x_t, eps] = forward_noise_plain(zero, 2, s, rng);
    CHECK(x_t[0] == expect[0]);
    CHECK(x_t[1] == expect[1]);
}

TEST_CASE("forward_noise: alpha -> 0 makes x_t pure noise (mean near 0)") {
    const VarianceSchedule s = raw_schedule({0.9, 1e-6}, 1.0);
    const std::vector<double> x = {3.0, -2.0};
    const int n = 10000;
    RandomStream rng(17);
    double mean[2] = {0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        auto [x_t, eps] = forward_noise_plain(x, 1, s, rng);
        mean[0] += x_t[0];
        mean[1] += x_t[1];
    }
    const double se = 1.0 / std::sqrt(static_cast<double>(n));
    for (int j = 0; j < 2; ++j) CHECK(std::fabs(mean[j] / n) < 3.0 * se + 3e-3);
}

TEST_CASE("chain-vs-direct consistency (Eq.1 chain matches the Eq.2 marginal)") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    const int n = 10000;
    const std::vector<std::pair<std::array<double, 2>, int>> cases = {{{1.5, -0.7}, 7},
                                                                      {{-2.0, 0.4}, 10}};
    for (const auto& [x0, t] : cases) {
        RandomStream rng_chain(1000 + t), rng_direct(2000 + t);
        std::array<double, 2> mean_c{}, mean_d{};
        std::array<double, 3> cov_c{}, cov_d{};  // xx, yy, xy raw moments
        for (int i = 0; i < n; ++i) {
            // Oracle: compose the per-step transition of the single-step chain.
            double cx = x0[0], cy = x0[1];
            for (int step = 1; step <= t; ++step) {
                const double ratio = s.alpha(step) / s.alpha(step - 1);
                cx = std::sqrt(ratio) * cx + std::sqrt(1.0 - ratio) * rng_chain.normal();
                cy = std::sqrt(ratio) * cy + std::sqrt(1.0 - ratio) * rng_chain.normal();
            }
            auto [xd, eps] = forward_noise_plain(std::span<const double>(x0), t, s, rng_direct);
            mean_c[0] += cx, mean_c[1] += cy;
            mean_d[0] += xd[0], mean_d[1] += xd[1];
            cov_c[0] += cx * cx, cov_c[1] += cy * cy, cov_c[2] += cx * cy;
            cov_d[0] += xd[0] * xd[0], cov_d[1] += xd[1] * xd[1], cov_d[2] += xd[0] * xd[1];
        }
        const double v = 1.0 - s.alpha(t);  // per-coordinate variance of both marginals
        for (int j = 0; j < 2; ++j) {
            mean_c[j] /= n, mean_d[j] /= n;
            const double se_diff = std::sqrt(2.0 * v / n);
            CHECK(std::fabs(mean_c[j] - mean_d[j]) < 3.0 * se_diff);
        }
        for (int j = 0; j < 3; ++j) {
            const double m1 = j == 2 ? mean_c[0] * mean_c[1] : mean_c[j] * mean_c[j];
            const double m2 = j == 2 ? mean_d[0] * mean_d[1] : mean_d[j] * mean_d[j];
            const double c1 = cov_c[j] / n - m1;
            const double c2 = cov_d[j] / n - m2;
            const double var_est = j == 2 ? v * v / n : 2.0 * v * v / n;
            CHECK(std::fabs(c1 - c2) < 3.0 * std::sqrt(2.0 * var_est));
        }
    }
}

TEST_CASE("ddim_step: sigma = 0 is deterministic") {
    const VarianceSchedule s = build_schedule(6, 0.2, 0.95, 0.0);
    RandomStream r1(5);
    const std::vector<double> x_t = {0.6, -1.1};
    const std::vector<double> eps_pred = {0.3, 0.2};
    const auto a = ddim_step_plain(x_t, 4, 3, eps_pred, s, r1);
    RandomStream r3(999);  // different rng state must not matter at eta = 0
    const auto b = ddim_step_plain(x_t, 4, 3, eps_pred, s, r3);
    CHECK(a == b);
}

TEST_CASE("ddim_step: exact-noise prediction recovers the closed form") {
    const VarianceSchedule s = build_schedule(8, 0.15, 0.98, 0.0);
    RandomStream rng(31);
    const std::vector<double> x0 = {1.7, -0.4};
    auto [x_t, eps] = forward_noise_plain(x0, 6, s, rng);
    const auto out = ddim_step_plain(x_t, 6, 2, eps, s, rng);
    for (int j = 0; j < 2; ++j) {
        const double expect = std::sqrt(s.alpha(2)) * x0[j] + std::sqrt(1.0 - s.alpha(2)) * eps[j];
        CHECK(out[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("ddim_step: schedule invariant violation is rejected") {
    VarianceSchedule s = build_schedule(4, 0.3, 0.9, 1.0);
    s.eta = 3.0;  // forces sigma^2 > 1 - alpha_prev
    RandomStream rng(1);
    const std::vector<double> x_t = {0.1, 0.2}, eps = {0.0, 0.0};
    CHECK_THROWS_AS(ddim_step_plain(x_t, 3, 2, eps, s, rng), std::invalid_argument);
}

TEST_CASE("ddim_step: shape and order preconditions") {
    const VarianceSchedule s = build_schedule(4, 0.3, 0.9, 1.0);
    RandomStream rng(1);
    const std::vector<double> x_t = {0.1, 0.2};
    CHECK_THROWS_AS(ddim_step_plain(x_t, 2, 2, x_t, s, rng), std::invalid_argument);
    CHECK_THROWS_AS(ddim_step_plain(x_t, 2, 3, x_t, s, rng), std::invalid_argument);
    const std::vector<double> bad = {0.1, 0.2, 0.3};
    CHECK_THROWS_AS(ddim_step_plain(x_t, 3, 2, bad, s, rng), std::invalid_argument);
}

TEST_CASE("ddim_step: exact-score step on N(0,I) data matches the closed-form marginal") {
    // With score(x) = -x the update collapses to x_prev = c x_t + sigma eps with
    // c = sqrt(a_p a_t) + sqrt((1-a_p-sigma^2)(1-a_t)); the output marginal is
    // N(0, c^2 + sigma^2). At coarse steps c^2 + sigma^2 sits slightly below 1
    // (the step plugs a point estimate of x0 into the posterior mean); it
    // approaches 1 as the discretization refines.
    auto run = [](const VarianceSchedule& s, int t, int t_prev, int n, std::uint64_t seed) {
        const StandardGaussianEstimator est(&s);
        RandomStream rng(seed);
        std::vector<double> samples(2 * n);
        double mean[2] = {0, 0};
        for (int i = 0; i < n; ++i) {
            const std::vector<double> x_t = {rng.normal(), rng.normal()};
            const auto ep = est.eps_plain(x_t, t);
            const auto out = ddim_step_plain(x_t, t, t_prev, ep, s, rng);
            samples[2 * i] = out[0];
            samples[2 * i + 1] = out[1];
            mean[0] += out[0], mean[1] += out[1];
        }
        mean[0] /= n, mean[1] /= n;
        double var[2] = {0, 0};
        for (int i = 0; i < n; ++i) {
            const double dx = samples[2 * i] - mean[0], dy = samples[2 * i + 1] - mean[1];
            var[0] += dx * dx, var[1] += dy * dy;
        }
        var[0] /= n - 1, var[1] /= n - 1;
        return std::array<double, 4>{mean[0], mean[1], var[0], var[1]};
    };

    const int n = 10000;
    const double se_mean = 1.0 / std::sqrt(static_cast<double>(n));
    const double se_var = std::sqrt(2.0 / n);

    // Coarse schedule: check against the exact closed form.
    {
        const VarianceSchedule s = build_schedule(8, 0.1, 0.995, 1.0);
        const int t = 5, t_prev = 4;
        const double a_t = s.alpha(t), a_p = s.alpha(t_prev);
        const double sigma = s.sigma_jump(t, t_prev);
        const double c = std::sqrt(a_p * a_t) +
                         std::sqrt((1.0 - a_p - sigma * sigma) * (1.0 - a_t));
        const double expect_var = c * c + sigma * sigma;
        const auto m = run(s, t, t_prev, n, 77);
        for (int j = 0; j < 2; ++j) {
            CHECK(std::fabs(m[j]) < 3 * se_mean);
            CHECK(std::fabs(m[2 + j] - expect_var) < 3 * se_var * expect_var);
        }
    }
    // Fine schedule: the marginal is preserved up to sampling noise.
    {
        const VarianceSchedule s = build_schedule(100, 0.1, 0.995, 1.0);
        const auto m = run(s, 50, 49, n, 78);
        for (int j = 0; j < 2; ++j) {
            CHECK(std::fabs(m[j]) < 3 * se_mean);
            CHECK(std::fabs(m[2 + j] - 1.0) < 3 * se_var + 2e-3);
        }
    }
}

TEST_CASE("purify: T* = 0 is exactly the identity") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    PurifierConfig cfg{0, {0}, &s};
    const GmmSpec spec = make_ring_spec();
    const AnalyticGmmEstimator est(spec, &s);
    RandomStream rng(5);
    const std::vector<double> x = {0.123456789, -9.87654321};
    const auto out = purify_plain(x, cfg, est, rng);
    CHECK(out == x);
    Tape tape;
    TapeTensor xv = tape.variable(TapeTensor::row(x));
    TapeTensor out_t = purify::purify(tape, xv, cfg, est, rng);
    CHECK(out_t.values == xv.values);  // same tensor, nothing recorded
    CHECK(tape.size() == 1);
}

TEST_CASE("purify: deterministic under a fixed seed, tape and plain paths agree bitwise") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    PurifierConfig cfg{10, make_tau(10, 1), &s};
    const GmmSpec spec = make_ring_spec();
    const AnalyticGmmEstimator est(spec, &s);
    const std::vector<double> x = {2.1, -1.3};

    RandomStream r1(404), r2(404), r3(404);
    const auto plain_a = purify_plain(x, cfg, est, r1);
    const auto plain_b = purify_plain(x, cfg, est, r2);
    CHECK(plain_a == plain_b);

    Tape tape;
    TapeTensor xv = tape.variable(TapeTensor::row(x));
    TapeTensor out = purify::purify(tape, xv, cfg, est, r3);
    CHECK(std::memcmp(out.values->data(), plain_a.data(), 2 * sizeof(double)) == 0);
    CHECK(tape.replay_matches());
}

TEST_CASE("purify: batch rows equal the single-sample path bit for bit") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    PurifierConfig cfg{10, make_tau(10, 1), &s};
    const GmmSpec spec = make_ring_spec();
    const AnalyticGmmEstimator est(spec, &s);
    const std::vector<double> xs = {2.1, -1.3, -0.4, 3.3, 0.0, 0.5};
    std::vector<RandomStream> rngs{RandomStream(1), RandomStream(2), RandomStream(3)};
    std::vector<double> out(6);
    purify_batch(xs.data(), 3, cfg, est, rngs, out.data());
    for (int i = 0; i < 3; ++i) {
        RandomStream r(static_cast<std::uint64_t>(i + 1));
        const std::span<const double> row(xs.data() + 2 * i, 2);
        const auto single = purify_plain(row, cfg, est, r);
        CHECK(std::memcmp(single.data(), out.data() + 2 * i, 2 * sizeof(double)) == 0);
    }
}

TEST_CASE("purify: T* = T with the analytic denoiser samples the data mixture") {
    // Deep schedule so the deepest level carries essentially no input signal.
    const VarianceSchedule s = build_schedule(60, 1e-4, 1.0, 1.0);
    PurifierConfig cfg{60, make_tau(60, 1), &s};
    const GmmSpec spec = make_ring_spec();
    const AnalyticGmmEstimator est(spec, &s);

    const int n = 10000;
    std::vector<double> xs(2 * n);
    for (int i = 0; i < n; ++i) {
        xs[2 * i] = 3.0;  // fixed far-off input; the output must not depend on it
        xs[2 * i + 1] = 1.0;
    }
    std::vector<RandomStream> rngs;
    rngs.reserve(n);
    for (int i = 0; i < n; ++i) rngs.emplace_back(seed_mix(88, i));
    std::vector<double> out(2 * n);
    purify_batch(xs.data(), n, cfg, est, rngs, out.data());

    const auto mix_mean = spec.mixture_mean();
    const auto mix_cov = spec.mixture_cov();
    // Fourth moments of the mixture, for the variance standard error.
    double mu4[2] = {0, 0};
    for (const auto& c : spec.components)
        for (int j = 0; j < 2; ++j) {
            const double m = c.mean[j], v = c.cov[j * 2 + j];
            mu4[j] += c.weight * (m * m * m * m + 6 * m * m * v + 3 * v * v);
        }
    for (int j = 0; j < 2; ++j) {
        double mean = 0;
        for (int i = 0; i < n; ++i) mean += out[2 * i + j];
        mean /= n;
        double var = 0;
        for (int i = 0; i < n; ++i) {
            const double d = out[2 * i + j] - mean;
            var += d * d;
        }
        var /= n - 1;
        const double vj = mix_cov[j * 2 + j];
        const double se_mean = std::sqrt(vj / n);
        const double se_var = std::sqrt((mu4[j] - vj * vj) / n);
        CHECK(std::fabs(mean - mix_mean[j]) < 3 * se_mean);
        CHECK(std::fabs(var - vj) < 3 * se_var);
    }
}

TEST_CASE("subsequence sanity: perfect denoiser and sigma = 0 collapse over any tau") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 0.0);
    const std::vector<double> x0 = {1.2, -2.2};
    RandomStream rng(55);
    auto [x_t, eps] = forward_noise_plain(x0, 10, s, rng);
    const ConstEstimator perfect(eps);

    auto run = [&](const std::vector<int>& tau) {
        std::vector<double> cur = x_t;
        for (std::size_t i = 0; i + 1 < tau.size(); ++i) {
            const auto ep = perfect.eps_plain(cur, tau[i]);
            RandomStream r(0);
            cur = ddim_step_plain(cur, tau[i], tau[i + 1], ep, s, r);
        }
        return cur;
    };
    const auto full = run(make_tau(10, 1));
    const auto skipped = run({10, 5, 0});
    for (int j = 0; j < 2; ++j) CHECK(full[j] == doctest::Approx(skipped[j]).epsilon(1e-12));
    // Both equal the closed form sqrt(a_0) x0 + sqrt(1-a_0) eps.
    for (int j = 0; j < 2; ++j) {
        const double expect = std::sqrt(s.alpha(0)) * x0[j] + std::sqrt(1.0 - s.alpha(0)) * eps[j];
        CHECK(full[j] == doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("make_tau and PurifierConfig validation") {
    CHECK(make_tau(10, 1) == std::vector<int>{10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0});
    CHECK(make_tau(10, 3) == std::vector<int>{10, 7, 4, 1, 0});
    CHECK(make_tau(0, 1) == std::vector<int>{0});
    CHECK(make_tau(140, 10).size() == 15);  // {140, 130, ..., 10, 0}

    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    PurifierConfig bad{5, {5, 3, 1}, &s};  // does not end at 0
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    PurifierConfig bad2{5, {5, 6, 0}, &s};  // not decreasing
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
    PurifierConfig good{5, {5, 3, 0}, &s};
    CHECK_NOTHROW(good.validate());
}

TEST_CASE("finite differences through one ddim_step with a linear readout") {
    const VarianceSchedule s = build_schedule(10, 0.1, 1.0, 1.0);
    const GmmSpec spec = make_ring_spec();
    const AnalyticGmmEstimator est(spec, &s);
    RandomStream seed_rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> xv = {seed_rng.uniform(-4, 4), seed_rng.uniform(-4, 4)};
        const std::uint64_t noise_seed = seed_rng.next_u64();
        const double err = ad::finite_difference_check(
            [&](Tape& t, const ad::TapeTensor& x) {
                RandomStream rng(noise_seed);  // fixed-noise replay
                TapeTensor ep = est.eps(t, x, 6);
                TapeTensor stepped = ddim_step(t, x, 6, 5, ep, s, rng);
                return t.sum(t.mul(stepped, t.constant(TapeTensor::row({0.7, -1.3}))));
            },
            ad::TapeTensor::row(xv), 1e-5);
        CHECK(err < 1e-5);
    }
}
