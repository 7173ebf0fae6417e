// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "purify/kernels.hpp"

namespace purify {

namespace {

using ad::TapeTensor;

constexpr double kLog2Pi = 1.8378770664093454836;

/// Per-component parameters of the level-t marginal.
struct NoisedComponent {
    std::array<double, 2> neg_mean;  // -sqrt(a) mu
    std::array<double, 4> precision;
    double log_norm;  // log w - log(2 pi) - 0.5 logdet
};

std::vector<NoisedComponent> noised_params(const GmmSpec& spec, int t,
                                           const VarianceSchedule& sched) {
    const double a = sched.alpha(t);
    const double sa = std::sqrt(a);
    std::vector<NoisedComponent> out;
    out.reserve(spec.components.size());
    for (const auto& c : spec.components) {
        NoisedComponent nc;
        nc.neg_mean = {-sa * c.mean[0], -sa * c.mean[1]};
        const double c00 = a * c.cov[0] + (1.0 - a);
        const double c01 = a * c.cov[1];
        const double c10 = a * c.cov[2];
        const double c11 = a * c.cov[3] + (1.0 - a);
        const double det = c00 * c11 - c01 * c10;
        if (det <= 0.0)
            throw std::invalid_argument("gmm: noised covariance not positive definite");
        nc.precision = {c11 / det, -c01 / det, -c10 / det, c00 / det};
        nc.log_norm = std::log(c.weight) - kLog2Pi - 0.5 * std::log(det);
        out.push_back(nc);
    }
    return out;
}

/// Plain score of one row; mirrors gmm_score_tape op for op (same kernels,
/// same order) so the two paths agree bitwise.
void score_row(const std::vector<NoisedComponent>& comps, const double* x, double* score_out,
               double* log_density_out) {
    const std::size_t K = comps.size();
    std::vector<std::array<double, 2>> g(K);
    std::vector<double> l(K);
    for (std::size_t k = 0; k < K; ++k) {
        double u[2], v[2], uv[2], q, lq;
        kern::add(x, comps[k].neg_mean.data(), u, 2);
        kern::matmul(u, comps[k].precision.data(), v, 1, 2, 2);
        kern::mul(u, v, uv, 2);
        q = kern::vsum(uv, 2);
        kern::scale(&q, -0.5, &lq, 1);
        kern::add(&lq, &comps[k].log_norm, &l[k], 1);
        kern::scale(v, -1.0, g[k].data(), 2);
    }
    double m = l[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, l[k]);
    const double neg_m = -m;
    std::vector<double> sh(K), e(K);
    for (std::size_t k = 0; k < K; ++k) {
        kern::add(&l[k], &neg_m, &sh[k], 1);
        kern::vexp(&sh[k], &e[k], 1);
    }
    double s = e[0];
    for (std::size_t k = 1; k < K; ++k) {
        double tmp;
        kern::add(&s, &e[k], &tmp, 1);
        s = tmp;
    }
    double lz;
    kern::vlog(&s, &lz, 1);
    if (log_density_out) *log_density_out = lz + m;
    if (!score_out) return;
    double acc[2] = {0.0, 0.0};
    for (std::size_t k = 0; k < K; ++k) {
        double neg_lz, arg, r, term[2];
        kern::scale(&lz, -1.0, &neg_lz, 1);
        kern::add(&sh[k], &neg_lz, &arg, 1);
        kern::vexp(&arg, &r, 1);
        kern::scale(g[k].data(), r, term, 2);
        if (k == 0) {
            acc[0] = term[0];
            acc[1] = term[1];
        } else {
            double next[2];
            kern::add(acc, term, next, 2);
            acc[0] = next[0];
            acc[1] = next[1];
        }
    }
    score_out[0] = acc[0];
    score_out[1] = acc[1];
}

void check_finite(std::span<const double> x) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]))
            throw std::invalid_argument("gmm_score_t: non-finite input at coordinate " +
                                        std::to_string(i));
}

}  // namespace

int GmmSpec::num_classes() const {
    int m = 0;
    for (const auto& c : components) m = std::max(m, c.cls + 1);
    return m;
}

void GmmSpec::validate() const {
    if (components.empty()) throw std::invalid_argument("gmm: no components");
    double wsum = 0.0;
    for (const auto& c : components) {
        if (!(c.weight > 0.0)) throw std::invalid_argument("gmm: weights must be positive");
        wsum += c.weight;
        if (std::fabs(c.cov[1] - c.cov[2]) > 1e-12)
            throw std::invalid_argument("gmm: covariance not symmetric");
        if (!(c.cov[0] > 0.0) || !(c.cov[0] * c.cov[3] - c.cov[1] * c.cov[2] > 0.0))
            throw std::invalid_argument("gmm: covariance not positive definite");
        if (c.cls < 0) throw std::invalid_argument("gmm: negative class label");
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
        throw std::invalid_argument("gmm: weights sum to " + std::to_string(wsum) + ", expected 1");
}

std::array<double, 2> GmmSpec::sample(RandomStream& rng, int* component) const {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = components.size() - 1;
    for (std::size_t i = 0; i < components.size(); ++i) {
        acc += components[i].weight;
        if (u < acc) {
            k = i;
            break;
        }
    }
    const auto& c = components[k];
    if (component) *component = static_cast<int>(k);
    // Cholesky of the 2x2 covariance.
    const double l00 = std::sqrt(c.cov[0]);
    const double l10 = c.cov[2] / l00;
    const double l11 = std::sqrt(c.cov[3] - l10 * l10);
    const double z0 = rng.normal();
    const double z1 = rng.normal();
    return {c.mean[0] + l00 * z0, c.mean[1] + l10 * z0 + l11 * z1};
}

std::array<double, 2> GmmSpec::mixture_mean() const {
    std::array<double, 2> m{0.0, 0.0};
    for (const auto& c : components) {
        m[0] += c.weight * c.mean[0];
        m[1] += c.weight * c.mean[1];
    }
    return m;
}

std::array<double, 4> GmmSpec::mixture_cov() const {
    const auto m = mixture_mean();
    std::array<double, 4> cov{0.0, 0.0, 0.0, 0.0};
    for (const auto& c : components) {
        cov[0] += c.weight * (c.cov[0] + c.mean[0] * c.mean[0]);
        cov[1] += c.weight * (c.cov[1] + c.mean[0] * c.mean[1]);
        cov[2] += c.weight * (c.cov[2] + c.mean[1] * c.mean[0]);
        cov[3] += c.weight * (c.cov[3] + c.mean[1] * c.mean[1]);
    }
    cov[0] -= m[0] * m[0];
    cov[1] -= m[0] * m[1];
    cov[2] -= m[1] * m[0];
    cov[3] -= m[1] * m[1];
    return cov;
}

int GmmSpec::nearest_component(std::span<const double> x) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < components.size(); ++k) {
        const double dx = x[0] - components[k].mean[0];
        const double dy = x[1] - components[k].mean[1];
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    return best;
}

GmmSpec make_ring_spec(int clusters_per_class, double radius, double sigma) {
    if (clusters_per_class < 1) throw std::invalid_argument("make_ring_spec: need >= 1 cluster per class");
    const int K = 2 * clusters_per_class;
    GmmSpec spec;
    for (int k = 0; k < K; ++k) {
        const double theta = 2.0 * M_PI * k / K;
        GmmSpec::Component c;
        c.weight = 1.0 / K;
        c.mean = {radius * std::cos(theta), radius * std::sin(theta)};
        c.cov = {sigma * sigma, 0.0, 0.0, sigma * sigma};
        c.cls = k % 2;
        spec.components.push_back(c);
    }
    spec.validate();
    return spec;
}

double min_opposite_class_gap(const GmmSpec& spec) {
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spec.components.size(); ++i)
        for (std::size_t j = i + 1; j < spec.components.size(); ++j) {
            if (spec.components[i].cls == spec.components[j].cls) continue;
            const double dx = spec.components[i].mean[0] - spec.components[j].mean[0];
            const double dy = spec.components[i].mean[1] - spec.components[j].mean[1];
            gap = std::min(gap, std::hypot(dx, dy));
        }
    return gap;
}

double gmm_log_density_t(const GmmSpec& spec, std::span<const double> x, int t,
                         const VarianceSchedule& sched) {
    check_finite(x);
    const auto comps = noised_params(spec, t, sched);
    double ld;
    score_row(comps, x.data(), nullptr, &ld);
    return ld;
}

std::array<double, 2> gmm_score_t(const GmmSpec& spec, std::span<const double> x, int t,
                                  const VarianceSchedule& sched) {
    check_finite(x);
    const auto comps = noised_params(spec, t, sched);
    std::array<double, 2> s;
    score_row(comps, x.data(), s.data(), nullptr);
    return s;
}

TapeTensor gmm_score_tape(ad::Tape& tape, const GmmSpec& spec, const TapeTensor& x, int t,
                          const VarianceSchedule& sched) {
    if (x.shape != ad::Shape{1, 2})
        throw std::invalid_argument("gmm_score_tape: expected a 1x2 row, got " +
                                    ad::shape_str(x.shape));
    const auto comps = noised_params(spec, t, sched);
    const std::size_t K = comps.size();

    std::vector<TapeTensor> l(K), g(K);
    for (std::size_t k = 0; k < K; ++k) {
        TapeTensor u = tape.add(x, TapeTensor({1, 2}, {comps[k].neg_mean[0], comps[k].neg_mean[1]}));
        TapeTensor v = tape.matmul(u, TapeTensor({2, 2}, {comps[k].precision[0], comps[k].precision[1],
                                                          comps[k].precision[2], comps[k].precision[3]}));
        TapeTensor q = tape.sum(tape.mul(u, v));
        l[k] = tape.add(tape.scale(q, -0.5), TapeTensor::scalar(comps[k].log_norm));
        g[k] = tape.scale(v, -1.0);
    }
    double m = l[0].item();
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, l[k].item());
    // The shift is recorded as a constant: log-sum-exp gradients are invariant
    // to it, so treating it as data is gradient-exact.
    TapeTensor neg_m = TapeTensor::scalar(-m);
    std::vector<TapeTensor> sh(K), e(K);
    for (std::size_t k = 0; k < K; ++k) {
        sh[k] = tape.add(l[k], neg_m);
        e[k] = tape.exp(sh[k]);
    }
    TapeTensor s = e[0];
    for (std::size_t k = 1; k < K; ++k) s = tape.add(s, e[k]);
    TapeTensor lz = tape.log(s);

    TapeTensor score;
    for (std::size_t k = 0; k < K; ++k) {
        TapeTensor r = tape.exp(tape.add(sh[k], tape.scale(lz, -1.0)));
        TapeTensor term = tape.mul(r, g[k]);
        score = k == 0 ? term : tape.add(score, term);
    }
    return score;
}

std::vector<double> score_to_eps(std::span<const double> score, int t,
                                 const VarianceSchedule& sched) {
    const double a = sched.alpha(t);
    if (a >= 1.0)
        throw std::invalid_argument("score_to_eps: alpha_t = 1 has no score/noise correspondence");
    std::vector<double> out(score.size());
    kern::scale(score.data(), -std::sqrt(1.0 - a), out.data(), score.size());
    return out;
}

TapeTensor score_to_eps_tape(ad::Tape& tape, const TapeTensor& score, int t,
                             const VarianceSchedule& sched) {
    const double a = sched.alpha(t);
    if (a >= 1.0)
        throw std::invalid_argument("score_to_eps: alpha_t = 1 has no score/noise correspondence");
    return tape.scale(score, -std::sqrt(1.0 - a));
}

AnalyticGmmEstimator::AnalyticGmmEstimator(GmmSpec spec, const VarianceSchedule* sched)
    : spec_(std::move(spec)), sched_(sched) {
    spec_.validate();
    if (!sched_) throw std::invalid_argument("AnalyticGmmEstimator: null schedule");
}

TapeTensor AnalyticGmmEstimator::eps(ad::Tape& tape, const TapeTensor& x_t, int t) const {
    return score_to_eps_tape(tape, gmm_score_tape(tape, spec_, x_t, t, *sched_), t, *sched_);
}

void AnalyticGmmEstimator::eps_batch(const double* x_t, std::size_t n, int t, double* out) const {
    const double a = sched_->alpha(t);
    if (a >= 1.0)
        throw std::invalid_argument("score_to_eps: alpha_t = 1 has no score/noise correspondence");
    const double c = -std::sqrt(1.0 - a);
    const auto comps = noised_params(spec_, t, *sched_);
    for (std::size_t i = 0; i < n; ++i) {
        double s[2];
        score_row(comps, x_t + 2 * i, s, nullptr);
        kern::scale(s, c, out + 2 * i, 2);
    }
}

}  // namespace purify
