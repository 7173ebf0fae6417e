// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "purify/kernels.hpp"

namespace purify {

namespace {

using ad::TapeTensor;

std::vector<double> draw_normal(RandomStream& rng, std::size_t n) {
    std::vector<double> eps(n);
    rng.fill_normal(eps);
    return eps;
}

// sqrt(1 - a_prev - sigma^2) with the schedule-invariant guard.
double attenuation_coeff(const VarianceSchedule& sched, int t, int t_prev, double sigma) {
    const double arg = 1.0 - sched.alpha(t_prev) - sigma * sigma;
    if (arg < -1e-12)
        throw std::invalid_argument("ddim_step: 1 - alpha_" + std::to_string(t_prev) +
                                    " - sigma^2 < 0 for jump " + std::to_string(t) + " -> " +
                                    std::to_string(t_prev) + " (schedule invariant violation)");
    return std::sqrt(arg < 0.0 ? 0.0 : arg);
}

}  // namespace

std::pair<TapeTensor, TapeTensor> forward_noise(ad::Tape& tape, const TapeTensor& x, int t,
                                                const VarianceSchedule& sched,
                                                RandomStream& rng) {
    const double a = sched.alpha(t);
    const double c_sig = std::sqrt(a);
    const double c_eps = std::sqrt(1.0 - a);
    TapeTensor eps = tape.constant(TapeTensor(x.shape, draw_normal(rng, x.size())));
    TapeTensor x_t = tape.add(tape.scale(x, c_sig), tape.scale(eps, c_eps));
    return {x_t, eps};
}

std::pair<std::vector<double>, std::vector<double>> forward_noise_plain(
    std::span<const double> x, int t, const VarianceSchedule& sched, RandomStream& rng) {
    const double a = sched.alpha(t);
    const double c_sig = std::sqrt(a);
    const double c_eps = std::sqrt(1.0 - a);
    std::vector<double> eps = draw_normal(rng, x.size());
    std::vector<double> sx(x.size()), se(x.size()), x_t(x.size());
    kern::scale(x.data(), c_sig, sx.data(), x.size());
    kern::scale(eps.data(), c_eps, se.data(), eps.size());
    kern::add(sx.data(), se.data(), x_t.data(), x.size());
    return {std::move(x_t), std::move(eps)};
}

TapeTensor ddim_step(ad::Tape& tape, const TapeTensor& x_t, int t, int t_prev,
                     const TapeTensor& eps_pred, const VarianceSchedule& sched,
                     RandomStream& rng) {
    if (t <= t_prev)
        throw std::invalid_argument("ddim_step: need t > t_prev, got " + std::to_string(t) +
                                    " -> " + std::to_string(t_prev));
    if (eps_pred.shape != x_t.shape)
        throw std::invalid_argument("ddim_step: eps_pred shape " + ad::shape_str(eps_pred.shape) +
                                    " does not match x_t shape " + ad::shape_str(x_t.shape));
    const double a_t = sched.alpha(t);
    const double sigma = sched.sigma_jump(t, t_prev);
    const double c_keep = attenuation_coeff(sched, t, t_prev, sigma);

    TapeTensor x0 = tape.scale(tape.add(x_t, tape.scale(eps_pred, -std::sqrt(1.0 - a_t))),
                               1.0 / std::sqrt(a_t));
    TapeTensor mean = tape.add(tape.scale(x0, std::sqrt(sched.alpha(t_prev))),
                               tape.scale(eps_pred, c_keep));
    TapeTensor noise = tape.constant(TapeTensor(x_t.shape, draw_normal(rng, x_t.size())));
    return tape.add(mean, tape.scale(noise, sigma));
}

std::vector<double> ddim_step_plain(std::span<const double> x_t, int t, int t_prev,
                                    std::span<const double> eps_pred,
                                    const VarianceSchedule& sched, RandomStream& rng) {
    if (t <= t_prev)
        throw std::invalid_argument("ddim_step: need t > t_prev, got " + std::to_string(t) +
                                    " -> " + std::to_string(t_prev));
    if (eps_pred.size() != x_t.size())
        throw std::invalid_argument("ddim_step: eps_pred/x_t size mismatch");
    const std::size_t n = x_t.size();
    const double a_t = sched.alpha(t);
    const double sigma = sched.sigma_jump(t, t_prev);
    const double c_keep = attenuation_coeff(sched, t, t_prev, sigma);

    std::vector<double> tmp(n), x0(n), mean(n), out(n);
    kern::scale(eps_pred.data(), -std::sqrt(1.0 - a_t), tmp.data(), n);
    kern::add(x_t.data(), tmp.data(), x0.data(), n);
    kern::scale(x0.data(), 1.0 / std::sqrt(a_t), x0.data(), n);
    kern::scale(x0.data(), std::sqrt(sched.alpha(t_prev)), x0.data(), n);
    kern::scale(eps_pred.data(), c_keep, tmp.data(), n);
    kern::add(x0.data(), tmp.data(), mean.data(), n);
    std::vector<double> noise = draw_normal(rng, n);
    kern::scale(noise.data(), sigma, tmp.data(), n);
    kern::add(mean.data(), tmp.data(), out.data(), n);
    return out;
}

TapeTensor purify(ad::Tape& tape, const TapeTensor& x, const PurifierConfig& cfg,
                  const NoiseEstimator& denoiser, RandomStream& rng) {
    cfg.validate();
    if (cfg.t_star == 0) return x;  // depth 0: exact identity, nothing recorded
    auto [x_t, eps0] = forward_noise(tape, x, cfg.t_star, *cfg.schedule, rng);
    for (std::size_t i = 0; i + 1 < cfg.tau.size(); ++i) {
        TapeTensor eps_pred = denoiser.eps(tape, x_t, cfg.tau[i]);
        x_t = ddim_step(tape, x_t, cfg.tau[i], cfg.tau[i + 1], eps_pred, *cfg.schedule, rng);
    }
    return x_t;
}

std::vector<double> purify_plain(std::span<const double> x, const PurifierConfig& cfg,
                                 const NoiseEstimator& denoiser, RandomStream& rng) {
    cfg.validate();
    if (cfg.t_star == 0) return std::vector<double>(x.begin(), x.end());
    auto [x_t, eps0] = forward_noise_plain(x, cfg.t_star, *cfg.schedule, rng);
    for (std::size_t i = 0; i + 1 < cfg.tau.size(); ++i) {
        std::vector<double> eps_pred = denoiser.eps_plain(x_t, cfg.tau[i]);
        x_t = ddim_step_plain(x_t, cfg.tau[i], cfg.tau[i + 1], eps_pred, *cfg.schedule, rng);
    }
    return x_t;
}

void purify_batch(const double* x, std::size_t n, const PurifierConfig& cfg,
                  const NoiseEstimator& denoiser, std::span<RandomStream> rngs, double* out) {
    cfg.validate();
    const std::size_t d = static_cast<std::size_t>(denoiser.dim());
    if (rngs.size() != n) throw std::invalid_argument("purify_batch: one rng per row required");
    if (cfg.t_star == 0) {
        std::copy(x, x + n * d, out);
        return;
    }
    const VarianceSchedule& sched = *cfg.schedule;

    std::vector<double> cur(n * d);
    {
        const double a = sched.alpha(cfg.t_star);
        const double c_sig = std::sqrt(a);
        const double c_eps = std::sqrt(1.0 - a);
        std::vector<double> eps(d), sx(d), se(d);
        for (std::size_t i = 0; i < n; ++i) {
            rngs[i].fill_normal(eps);
            kern::scale(x + i * d, c_sig, sx.data(), d);
            kern::scale(eps.data(), c_eps, se.data(), d);
            kern::add(sx.data(), se.data(), cur.data() + i * d, d);
        }
    }

    std::vector<double> eps_pred(n * d);
    std::vector<double> tmp(d), x0(d), mean(d), noise(d);
    for (std::size_t s = 0; s + 1 < cfg.tau.size(); ++s) {
        const int t = cfg.tau[s];
        const int t_prev = cfg.tau[s + 1];
        denoiser.eps_batch(cur.data(), n, t, eps_pred.data());
        const double a_t = sched.alpha(t);
        const double sigma = sched.sigma_jump(t, t_prev);
        const double c_keep = attenuation_coeff(sched, t, t_prev, sigma);
        const double c_neg = -std::sqrt(1.0 - a_t);
        const double c_inv = 1.0 / std::sqrt(a_t);
        const double c_prev = std::sqrt(sched.alpha(t_prev));
        for (std::size_t i = 0; i < n; ++i) {
            double* row = cur.data() + i * d;
            const double* ep = eps_pred.data() + i * d;
            kern::scale(ep, c_neg, tmp.data(), d);
            kern::add(row, tmp.data(), x0.data(), d);
            kern::scale(x0.data(), c_inv, x0.data(), d);
            kern::scale(x0.data(), c_prev, x0.data(), d);
            kern::scale(ep, c_keep, tmp.data(), d);
            kern::add(x0.data(), tmp.data(), mean.data(), d);
            rngs[i].fill_normal(noise);
            kern::scale(noise.data(), sigma, tmp.data(), d);
            kern::add(mean.data(), tmp.data(), row, d);
        }
    }
    std::copy(cur.begin(), cur.end(), out);
}

}  // namespace purify
