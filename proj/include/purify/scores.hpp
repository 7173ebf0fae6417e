// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// The analytic noise estimator: score of the exact forward-process marginal of
// a known 2D Gaussian mixture. At level t the marginal is again a mixture,
// with means sqrt(a_t) mu_k and covariances a_t Sigma_k + (1-a_t) I; the score
// is the responsibility-weighted sum of per-component Gaussian scores,
// stabilized with a log-sum-exp shift.

#pragma once

#include <array>
#include <span>
#include <vector>

#include "purify/diffusion.hpp"
#include "purify/rng.hpp"
#include "purify/schedule.hpp"
#include "purify/tape.hpp"

namespace purify {

struct GmmSpec {
    struct Component {
        double weight;
        std::array<double, 2> mean;
        std::array<double, 4> cov;  // row-major 2x2, SPD
        int cls;
    };
    std::vector<Component> components;

    int num_classes() const;
    void validate() const;

    /// One draw; stores the chosen component index when requested.
    std::array<double, 2> sample(RandomStream& rng, int* component = nullptr) const;

    std::array<double, 2> mixture_mean() const;
    std::array<double, 4> mixture_cov() const;
    /// Index of the component whose center is nearest to x.
    int nearest_component(std::span<const double> x) const;
};

/// 4+4 clusters on a circle, alternating class; the default Sec-4.1-style layout.
GmmSpec make_ring_spec(int clusters_per_class = 4, double radius = 4.0, double sigma = 0.3);

/// Min distance between cluster centers of opposite classes.
double min_opposite_class_gap(const GmmSpec& spec);

/// log p_t(x) of the noised mixture (finite-difference oracle target).
double gmm_log_density_t(const GmmSpec& spec, std::span<const double> x, int t,
                         const VarianceSchedule& sched);

/// grad_x log p_t(x). Rejects non-finite input.
std::array<double, 2> gmm_score_t(const GmmSpec& spec, std::span<const double> x, int t,
                                  const VarianceSchedule& sched);

/// Tape-recorded score composite for a 1x2 row (differentiable end to end).
ad::TapeTensor gmm_score_tape(ad::Tape& tape, const GmmSpec& spec, const ad::TapeTensor& x,
                              int t, const VarianceSchedule& sched);

/// eps_pred = -sqrt(1-a_t) * score. Rejects a_t = 1.
std::vector<double> score_to_eps(std::span<const double> score, int t,
                                 const VarianceSchedule& sched);
ad::TapeTensor score_to_eps_tape(ad::Tape& tape, const ad::TapeTensor& score, int t,
                                 const VarianceSchedule& sched);

/// score_to_eps(gmm_score_t(.)) behind the estimator interface.
class AnalyticGmmEstimator final : public NoiseEstimator {
public:
    AnalyticGmmEstimator(GmmSpec spec, const VarianceSchedule* sched);

    int dim() const override { return 2; }
    ad::TapeTensor eps(ad::Tape& tape, const ad::TapeTensor& x_t, int t) const override;
    void eps_batch(const double* x_t, std::size_t n, int t, double* out) const override;

    const GmmSpec& spec() const { return spec_; }

private:
    GmmSpec spec_;
    const VarianceSchedule* sched_;
};

}  // namespace purify
