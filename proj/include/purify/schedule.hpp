// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace purify {

/// Decaying variance schedule 1 > alpha_0 > ... > alpha_T > 0 with per-step
/// stochasticity sigma_t, sigma_t^2 <= 1 - alpha_{t-1}.
struct VarianceSchedule {
    std::vector<double> alphas;  // alpha_0 .. alpha_T
    std::vector<double> sigmas;  // sigmas[t] = sigma_t for t in 1..T; sigmas[0] unused (0)
    double eta = 1.0;
    int T = 0;

    double alpha(int t) const;
    /// Stochasticity of the jump t -> t_prev (skipped steps reuse the sigma
    /// formula with the subsequence neighbour's alpha).
    double sigma_jump(int t, int t_prev) const;
    void validate() const;
    std::uint64_t hash() const;
};

/// Linear-in-alpha schedule from alpha_max (t=0) down to alpha_min (t=T);
/// alpha_max is clamped to 1 - 1e-9. sigma_t = eta * sqrt((1-a_{t-1})/(1-a_t)) *
/// sqrt(1 - a_t/a_{t-1}), the standard interpolation between the deterministic
/// (eta=0) and maximally stochastic (eta=1) samplers.
VarianceSchedule build_schedule(int T, double alpha_min, double alpha_max, double eta);

/// Starting depth T* plus the decreasing time-step subsequence tau walked by
/// the sampler; tau starts at T* and ends at 0.
struct PurifierConfig {
    int t_star = 0;
    std::vector<int> tau;
    const VarianceSchedule* schedule = nullptr;

    void validate() const;
};

/// {t_star, t_star-stride, ..., 0}; 0 is appended when the stride misses it.
std::vector<int> make_tau(int t_star, int stride);

}  // namespace purify
