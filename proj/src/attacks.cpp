// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/attacks.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace purify {

namespace {

using ad::Tape;
using ad::TapeTensor;

constexpr std::uint64_t kRealizeTag = 0x5eed0001;

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

bool finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

const char* norm_name(Norm n) { return n == Norm::kL2 ? "l2" : "linf"; }

const char* gradient_mode_name(GradientMode m) {
    switch (m) {
        case GradientMode::kWhite: return "white";
        case GradientMode::kGrey: return "grey";
        case GradientMode::kBpda: return "bpda";
    }
    return "?";
}

void ThreatModel::validate() const {
    if (!(epsilon > 0.0))
        throw std::invalid_argument("threat model: epsilon must be > 0, got " +
                                    std::to_string(epsilon));
}

double AttackConfig::effective_step() const {
    return step_size > 0.0 ? step_size : 2.5 * threat.epsilon / steps;
}

void AttackConfig::validate() const {
    threat.validate();
    if (steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
    if (eot_samples < 1) throw std::invalid_argument("attack: eot_samples must be >= 1");
    if (!(effective_step() > 0.0)) throw std::invalid_argument("attack: step_size must be > 0");
    if (vote_realizations < 1 || vote_realizations % 2 == 0)
        throw std::invalid_argument("attack: vote_realizations must be odd and >= 1");
}

void project(std::span<double> delta, const ThreatModel& threat) {
    if (threat.norm == Norm::kLinf) {
        for (double& v : delta) {
            if (v > threat.epsilon) v = threat.epsilon;
            if (v < -threat.epsilon) v = -threat.epsilon;
        }
    } else {
        const double n = l2_norm(delta);
        if (n > threat.epsilon) {
            const double s = threat.epsilon / n;
            for (double& v : delta) v *= s;
        }
    }
}

std::vector<double> project(std::vector<double> delta, const ThreatModel& threat) {
    project(std::span<double>(delta), threat);
    return delta;
}

// --- DefendedPipeline ---------------------------------------------------------

void DefendedPipeline::validate() const {
    if (!classifier) throw std::invalid_argument("pipeline: null classifier");
    purifier.validate();
    if (purifier.t_star > 0 && !denoiser)
        throw std::invalid_argument("pipeline: t_star > 0 requires a noise estimator");
}

std::vector<double> DefendedPipeline::purify_once(std::span<const double> x,
                                                  std::uint64_t seed) const {
    if (purifier.t_star == 0) return std::vector<double>(x.begin(), x.end());
    RandomStream rng(seed_mix(seed, kRealizeTag));
    return purify_plain(x, purifier, *denoiser, rng);
}

GradEval DefendedPipeline::loss_grad(GradientMode mode, std::span<const double> x_adv, int label,
                                     std::uint64_t seed) const {
    GradEval out;
    switch (mode) {
        case GradientMode::kWhite: {
            Tape tape;
            TapeTensor xv = tape.variable(
                TapeTensor::row(std::vector<double>(x_adv.begin(), x_adv.end())));
            TapeTensor purified = xv;
            if (purifier.t_star > 0) {
                RandomStream rng(seed_mix(seed, kRealizeTag));
                purified = purify(tape, xv, purifier, *denoiser, rng);
            }
            TapeTensor loss =
                tape.softmax_cross_entropy(predict(tape, *classifier, purified), {label});
            out.loss = loss.item();
            out.grad = tape.backward(loss).at(xv);
            break;
        }
        case GradientMode::kGrey: {
            Tape tape;
            TapeTensor xv = tape.variable(
                TapeTensor::row(std::vector<double>(x_adv.begin(), x_adv.end())));
            TapeTensor loss = tape.softmax_cross_entropy(predict(tape, *classifier, xv), {label});
            out.loss = loss.item();
            out.grad = tape.backward(loss).at(xv);
            break;
        }
        case GradientMode::kBpda: {
            // g(x) forward only, then the exact classifier gradient at g(x).
            std::vector<double> gx = purify_once(x_adv, seed);
            Tape tape;
            TapeTensor gv = tape.variable(TapeTensor::row(std::move(gx)));
            TapeTensor loss = tape.softmax_cross_entropy(predict(tape, *classifier, gv), {label});
            out.loss = loss.item();
            out.grad = tape.backward(loss).at(gv);
            break;
        }
    }
    return out;
}

int DefendedPipeline::predict_defended(std::span<const double> x, std::uint64_t seed) const {
    const std::vector<double> purified = purify_once(x, seed);
    const std::vector<double> logits = logits_batch(*classifier, purified.data(), 1);
    return argmax(logits);
}

int DefendedPipeline::predict_defended_vote(std::span<const double> x, std::uint64_t seed,
                                            int votes) const {
    if (votes <= 1) return predict_defended(x, seed);
    std::vector<int> counts(static_cast<std::size_t>(classifier->num_classes), 0);
    for (int v = 0; v < votes; ++v)
        counts[static_cast<std::size_t>(predict_defended(x, seed_mix(seed, 0xb077, v)))]++;
    int best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    return best;
}

void DefendedPipeline::check_graph_size(int eot_samples, std::size_t max_bytes) const {
    // Rough per-realization cost: every tau step records the estimator
    // composite plus the sampler arithmetic; the classifier stack rides on top.
    const std::size_t d = static_cast<std::size_t>(classifier->in_dim);
    const std::size_t per_node = 2 * sizeof(double) * d + 160;  // values + node bookkeeping
    const std::size_t steps = purifier.tau.size();
    const std::size_t est_nodes_per_step = 120;
    const std::size_t classifier_nodes =
        4 * (static_cast<std::size_t>(classifier->depth) + 1) + 8;
    const std::size_t classifier_bytes =
        classifier_nodes * (sizeof(double) * static_cast<std::size_t>(
                                                 std::max(classifier->width, classifier->num_classes)) +
                            160);
    const std::size_t per_real = steps * est_nodes_per_step * per_node + classifier_bytes;
    const std::size_t total = per_real * static_cast<std::size_t>(eot_samples);
    if (total > max_bytes)
        throw std::runtime_error(
            "white-box attack graph too large: ~" + std::to_string(total / (1024 * 1024)) +
            " MiB for T*=" + std::to_string(purifier.t_star) + " and K=" +
            std::to_string(eot_samples) + " EOT samples (cap " +
            std::to_string(max_bytes / (1024 * 1024)) + " MiB); reduce the depth, thin tau, or lower K");
}

GradEval eot_gradient(const DefendedPipeline& pipe, GradientMode mode,
                      std::span<const double> x_adv, int label, int K, std::uint64_t seed_base) {
    if (K < 1) throw std::invalid_argument("eot_gradient: K must be >= 1");
    GradEval acc;
    acc.grad.assign(x_adv.size(), 0.0);
    for (int k = 0; k < K; ++k) {
        GradEval one = pipe.loss_grad(mode, x_adv, label, seed_mix(seed_base, k));
        acc.loss += one.loss;
        for (std::size_t i = 0; i < acc.grad.size(); ++i) acc.grad[i] += one.grad[i];
    }
    const double inv = 1.0 / static_cast<double>(K);
    acc.loss *= inv;
    for (double& g : acc.grad) g *= inv;
    return acc;
}

GradEval bpda_gradient(const DefendedPipeline& pipe, std::span<const double> x_adv, int label,
                       std::uint64_t seed) {
    return pipe.loss_grad(GradientMode::kBpda, x_adv, label, seed);
}

// --- PGD ------------------------------------------------------------------------

AttackResult pgd(const DefendedPipeline& pipe, std::span<const double> x, int label,
                 const AttackConfig& cfg, std::uint64_t eval_seed) {
    cfg.validate();
    pipe.validate();
    if (cfg.gradient_mode == GradientMode::kWhite && pipe.purifier.t_star > 0)
        pipe.check_graph_size(cfg.eot_samples, cfg.max_graph_bytes);

    const std::size_t d = x.size();
    const double step = cfg.effective_step();
    AttackResult res;
    res.delta.assign(d, 0.0);
    res.loss_trace.reserve(static_cast<std::size_t>(cfg.steps));

    std::vector<double> x_adv(d);
    for (int iter = 0; iter < cfg.steps; ++iter) {
        for (std::size_t i = 0; i < d; ++i) x_adv[i] = x[i] + res.delta[i];

        GradEval ge;
        if (cfg.gradient_mode == GradientMode::kGrey) {
            ge = pipe.loss_grad(GradientMode::kGrey, x_adv, label, 0);
        } else {
            const std::uint64_t round_seed =
                cfg.resample_per_iter ? seed_mix(cfg.seed, static_cast<std::uint64_t>(iter))
                                      : seed_mix(cfg.seed, 0);
            ge = eot_gradient(pipe, cfg.gradient_mode, x_adv, label, cfg.eot_samples, round_seed);
        }
        if (!std::isfinite(ge.loss) || !finite(ge.grad))
            throw std::runtime_error("pgd: non-finite gradient at iteration " +
                                     std::to_string(iter));
        res.loss_trace.push_back(ge.loss);

        if (cfg.threat.norm == Norm::kLinf) {
            for (std::size_t i = 0; i < d; ++i) {
                const double s = ge.grad[i] > 0.0 ? 1.0 : (ge.grad[i] < 0.0 ? -1.0 : 0.0);
                res.delta[i] += step * s;
            }
        } else {
            const double n = l2_norm(ge.grad);
            if (n > 0.0) {
                const double s = step / n;
                for (std::size_t i = 0; i < d; ++i) res.delta[i] += s * ge.grad[i];
            }
        }
        project(std::span<double>(res.delta), cfg.threat);
        if (cfg.box) {
            for (std::size_t i = 0; i < d; ++i) {
                double v = x[i] + res.delta[i];
                v = std::min(std::max(v, (*cfg.box)[0]), (*cfg.box)[1]);
                res.delta[i] = v - x[i];
            }
        }
    }

    std::vector<double> x_final(d);
    for (std::size_t i = 0; i < d; ++i) x_final[i] = x[i] + res.delta[i];
    res.success =
        pipe.predict_defended_vote(x_final, eval_seed, cfg.vote_realizations) != label;
    return res;
}

AttackResult greybox_attack(const DefendedPipeline& pipe, std::span<const double> x, int label,
                            AttackConfig cfg, std::uint64_t eval_seed) {
    cfg.gradient_mode = GradientMode::kGrey;
    return pgd(pipe, x, label, cfg, eval_seed);
}

AttackResult whitebox_eot_pgd(const DefendedPipeline& pipe, std::span<const double> x, int label,
                              AttackConfig cfg, std::uint64_t eval_seed) {
    cfg.gradient_mode = GradientMode::kWhite;
    return pgd(pipe, x, label, cfg, eval_seed);
}

AttackResult bpda_eot_attack(const DefendedPipeline& pipe, std::span<const double> x, int label,
                             AttackConfig cfg, std::uint64_t eval_seed) {
    cfg.gradient_mode = GradientMode::kBpda;
    return pgd(pipe, x, label, cfg, eval_seed);
}

AttackResult fgsm(const DefendedPipeline& pipe, std::span<const double> x, int label,
                  AttackConfig cfg, std::uint64_t eval_seed) {
    cfg.steps = 1;
    cfg.step_size = cfg.threat.epsilon;
    cfg.threat.norm = Norm::kLinf;
    return pgd(pipe, x, label, cfg, eval_seed);
}

}  // namespace purify
