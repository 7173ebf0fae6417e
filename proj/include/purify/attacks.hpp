// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// The attack suite: norm-ball projection, PGD, and the grey-box / BPDA / EOT
// compositions against the defended pipeline classifier(purify(x)).

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "purify/classifier.hpp"
#include "purify/diffusion.hpp"

namespace purify {

enum class Norm { kL2, kLinf };
const char* norm_name(Norm n);

struct ThreatModel {
    Norm norm = Norm::kLinf;
    double epsilon = 0.0;
    void validate() const;
};

enum class GradientMode { kWhite, kGrey, kBpda };
const char* gradient_mode_name(GradientMode m);

struct AttackConfig {
    ThreatModel threat;
    int steps = 40;
    double step_size = 0.0;  // <= 0 means 2.5 * epsilon / steps
    int eot_samples = 1;
    GradientMode gradient_mode = GradientMode::kWhite;
    std::uint64_t seed = 0;
    // Re-randomize the defense per PGD iteration (default) or keep the
    // realizations fixed across iterations.
    bool resample_per_iter = true;
    // Success evaluation: single fresh realization (1) or odd majority vote.
    int vote_realizations = 1;
    // Optional per-coordinate clamp applied after projection (bounded data).
    std::optional<std::array<double, 2>> box;
    // White-box graph-size guard.
    std::size_t max_graph_bytes = 4ull << 30;

    double effective_step() const;
    void validate() const;
};

struct AttackResult {
    std::vector<double> delta;
    bool success = false;  // defended pipeline misclassifies x + delta
    std::vector<double> loss_trace;
};

/// Projection onto the threat ball: Linf clamps per coordinate, L2 rescales
/// only when the norm exceeds epsilon.
void project(std::span<double> delta, const ThreatModel& threat);
std::vector<double> project(std::vector<double> delta, const ThreatModel& threat);

struct GradEval {
    double loss = 0.0;
    std::vector<double> grad;
};

/// classifier(purify(.)) with every stochastic choice seeded.
/// t_star == 0 makes the defense the exact identity.
struct DefendedPipeline {
    const MlpClassifier* classifier = nullptr;
    const NoiseEstimator* denoiser = nullptr;  // may be null when t_star == 0
    PurifierConfig purifier;

    void validate() const;

    /// One defense realization, forward only.
    std::vector<double> purify_once(std::span<const double> x, std::uint64_t seed) const;

    /// Loss and input gradient of a single realization under the given mode.
    GradEval loss_grad(GradientMode mode, std::span<const double> x_adv, int label,
                       std::uint64_t seed) const;

    int predict_defended(std::span<const double> x, std::uint64_t seed) const;
    /// Majority over `votes` realizations (odd count avoids two-class ties).
    int predict_defended_vote(std::span<const double> x, std::uint64_t seed, int votes) const;

    /// Estimated white-box graph bytes for one EOT round; throws a sized-graph
    /// error naming T* and K when it exceeds the cap.
    void check_graph_size(int eot_samples, std::size_t max_bytes) const;
};

/// Mean of K per-realization gradients, each from a fresh defense draw.
GradEval eot_gradient(const DefendedPipeline& pipe, GradientMode mode,
                      std::span<const double> x_adv, int label, int K, std::uint64_t seed_base);

/// Forward through the defense, backward through the classifier only
/// (identity in place of the defense Jacobian).
GradEval bpda_gradient(const DefendedPipeline& pipe, std::span<const double> x_adv, int label,
                       std::uint64_t seed);

/// Alg.-1 PGD driven by the mode in cfg; success is evaluated against the
/// defended pipeline with eval_seed (shared with the clean evaluation so a
/// zero delta reproduces the clean prediction).
AttackResult pgd(const DefendedPipeline& pipe, std::span<const double> x, int label,
                 const AttackConfig& cfg, std::uint64_t eval_seed);

/// delta crafted against the bare classifier, success measured on the
/// defended pipeline; the loss trace is the bare classifier's.
AttackResult greybox_attack(const DefendedPipeline& pipe, std::span<const double> x, int label,
                            AttackConfig cfg, std::uint64_t eval_seed);

/// PGD driven by eot_gradient through classifier(purify(.)) end to end.
AttackResult whitebox_eot_pgd(const DefendedPipeline& pipe, std::span<const double> x, int label,
                              AttackConfig cfg, std::uint64_t eval_seed);

/// BPDA gradients (EOT-averaged when cfg.eot_samples > 1).
AttackResult bpda_eot_attack(const DefendedPipeline& pipe, std::span<const double> x, int label,
                             AttackConfig cfg, std::uint64_t eval_seed);

/// Single-step Linf attack: epsilon * sign(grad); equals pgd with N=1 and
/// step_size = epsilon.
AttackResult fgsm(const DefendedPipeline& pipe, std::span<const double> x, int label,
                  AttackConfig cfg, std::uint64_t eval_seed);

}  // namespace purify
