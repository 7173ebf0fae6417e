// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/schedule.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace purify {

namespace {

std::uint64_t fnv64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

double VarianceSchedule::alpha(int t) const {
    if (t < 0 || t > T)
        throw std::out_of_range("schedule: step " + std::to_string(t) + " outside [0," +
                                std::to_string(T) + "]");
    return alphas[static_cast<std::size_t>(t)];
}

double VarianceSchedule::sigma_jump(int t, int t_prev) const {
    if (t_prev < 0 || t <= t_prev)
        throw std::invalid_argument("schedule: sigma_jump needs t > t_prev >= 0, got t=" +
                                    std::to_string(t) + " t_prev=" + std::to_string(t_prev));
    const double a_t = alpha(t);
    const double a_p = alpha(t_prev);
    return eta * std::sqrt((1.0 - a_p) / (1.0 - a_t)) * std::sqrt(1.0 - a_t / a_p);
}

void VarianceSchedule::validate() const {
    if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
    if (alphas.size() != static_cast<std::size_t>(T) + 1 ||
        sigmas.size() != static_cast<std::size_t>(T) + 1)
        throw std::invalid_argument("schedule: alphas/sigmas must have T+1 entries");
    if (!(alphas[0] < 1.0))
        throw std::invalid_argument("schedule: alpha_0 must be < 1, got " + std::to_string(alphas[0]));
    if (!(alphas.back() > 0.0))
        throw std::invalid_argument("schedule: alpha_T must be > 0");
    for (int t = 1; t <= T; ++t) {
        if (!(alphas[t] < alphas[t - 1]))
            throw std::invalid_argument("schedule: alphas must strictly decay, violated at t=" +
                                        std::to_string(t));
        if (sigmas[t] < 0.0)
            throw std::invalid_argument("schedule: sigma_" + std::to_string(t) + " is negative");
        if (sigmas[t] * sigmas[t] > 1.0 - alphas[t - 1] + 1e-12)
            throw std::invalid_argument("schedule: sigma_" + std::to_string(t) +
                                        "^2 exceeds 1 - alpha_" + std::to_string(t - 1));
    }
}

std::uint64_t VarianceSchedule::hash() const {
    std::uint64_t h = fnv64(&T, sizeof(T));
    h = fnv64(&eta, sizeof(eta), h);
    h = fnv64(alphas.data(), alphas.size() * sizeof(double), h);
    h = fnv64(sigmas.data(), sigmas.size() * sizeof(double), h);
    return h;
}

VarianceSchedule build_schedule(int T, double alpha_min, double alpha_max, double eta) {
    if (T < 1) throw std::invalid_argument("build_schedule: T must be >= 1");
    const double a_max = std::min(alpha_max, 1.0 - 1e-9);
    if (!(alpha_min > 0.0) || !(alpha_min < a_max))
        throw std::invalid_argument(
            "build_schedule: need 0 < alpha_min < alpha_max (after clamping), got alpha_min=" +
            std::to_string(alpha_min) + " alpha_max=" + std::to_string(a_max));
    if (eta < 0.0 || eta > 1.0)
        throw std::invalid_argument("build_schedule: eta must be in [0,1], got " + std::to_string(eta));

    VarianceSchedule s;
    s.T = T;
    s.eta = eta;
    s.alphas.resize(static_cast<std::size_t>(T) + 1);
    for (int t = 0; t <= T; ++t)
        s.alphas[t] = a_max + (alpha_min - a_max) * (static_cast<double>(t) / T);
    s.alphas[0] = a_max;
    s.alphas[T] = alpha_min;
    s.sigmas.assign(static_cast<std::size_t>(T) + 1, 0.0);
    for (int t = 1; t <= T; ++t) s.sigmas[t] = s.sigma_jump(t, t - 1);
    s.validate();
    return s;
}

void PurifierConfig::validate() const {
    if (!schedule) throw std::invalid_argument("purifier: no schedule attached");
    schedule->validate();
    if (t_star < 0 || t_star > schedule->T)
        throw std::invalid_argument("purifier: t_star=" + std::to_string(t_star) +
                                    " outside [0," + std::to_string(schedule->T) + "]");
    if (tau.empty() || tau.front() != t_star || tau.back() != 0)
        throw std::invalid_argument("purifier: tau must start at t_star and end at 0");
    for (std::size_t i = 0; i + 1 < tau.size(); ++i)
        if (tau[i] <= tau[i + 1])
            throw std::invalid_argument("purifier: tau must be strictly decreasing");
    for (int t : tau)
        if (t < 0 || t > schedule->T)
            throw std::invalid_argument("purifier: tau member " + std::to_string(t) +
                                        " outside [0," + std::to_string(schedule->T) + "]");
}

std::vector<int> make_tau(int t_star, int stride) {
    if (t_star < 0) throw std::invalid_argument("make_tau: t_star must be >= 0");
    if (stride < 1) throw std::invalid_argument("make_tau: stride must be >= 1");
    std::vector<int> tau;
    for (int t = t_star; t > 0; t -= stride) tau.push_back(t);
    tau.push_back(0);
    return tau;
}

}  // namespace purify
