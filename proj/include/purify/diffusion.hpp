// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward noising and the truncated stochastic reverse sampler.
//
// Every operation comes in a tape-recorded flavour (differentiable, used by
// white-box attacks) and a plain flavour (mass evaluation). Both run the same
// kernels in the same order, so equal seeds give bit-identical outputs.

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "purify/rng.hpp"
#include "purify/schedule.hpp"
#include "purify/tape.hpp"

namespace purify {

/// eps_theta(x_t, t): noise estimator driving the reverse process.
class NoiseEstimator {
public:
    virtual ~NoiseEstimator() = default;
    virtual int dim() const = 0;
    /// Tape-recorded prediction for a 1 x d row.
    virtual ad::TapeTensor eps(ad::Tape& tape, const ad::TapeTensor& x_t, int t) const = 0;
    /// Row-wise prediction for an n x d batch.
    virtual void eps_batch(const double* x_t, std::size_t n, int t, double* out) const = 0;

    std::vector<double> eps_plain(std::span<const double> x_t, int t) const {
        std::vector<double> out(x_t.size());
        eps_batch(x_t.data(), 1, t, out.data());
        return out;
    }
};

/// x_t = sqrt(a_t) x + sqrt(1-a_t) eps, eps ~ N(0,I) drawn from rng.
/// Returns (x_t, eps); the draw is recorded as a constant on the tape.
std::pair<ad::TapeTensor, ad::TapeTensor> forward_noise(ad::Tape& tape, const ad::TapeTensor& x,
                                                        int t, const VarianceSchedule& sched,
                                                        RandomStream& rng);
std::pair<std::vector<double>, std::vector<double>> forward_noise_plain(
    std::span<const double> x, int t, const VarianceSchedule& sched, RandomStream& rng);

/// One reverse update from level t to t_prev (t > t_prev), generalizing the
/// adjacent-step rule to subsequence jumps:
///   x0_hat  = (x_t - sqrt(1-a_t) eps_pred) / sqrt(a_t)
///   x_prev  = sqrt(a_prev) x0_hat + sqrt(1-a_prev-sigma^2) eps_pred + sigma eps_new
ad::TapeTensor ddim_step(ad::Tape& tape, const ad::TapeTensor& x_t, int t, int t_prev,
                         const ad::TapeTensor& eps_pred, const VarianceSchedule& sched,
                         RandomStream& rng);
std::vector<double> ddim_step_plain(std::span<const double> x_t, int t, int t_prev,
                                    std::span<const double> eps_pred,
                                    const VarianceSchedule& sched, RandomStream& rng);

/// The defense: noise to depth T*, then walk tau down to 0.
/// T* = 0 is the exact identity (no draws, no recording).
ad::TapeTensor purify(ad::Tape& tape, const ad::TapeTensor& x, const PurifierConfig& cfg,
                      const NoiseEstimator& denoiser, RandomStream& rng);
std::vector<double> purify_plain(std::span<const double> x, const PurifierConfig& cfg,
                                 const NoiseEstimator& denoiser, RandomStream& rng);
/// Row-wise purification of an n x d batch; row i consumes draws only from
/// rngs[i], so each row equals the single-sample path bit-for-bit.
void purify_batch(const double* x, std::size_t n, const PurifierConfig& cfg,
                  const NoiseEstimator& denoiser, std::span<RandomStream> rngs, double* out);

}  // namespace purify
