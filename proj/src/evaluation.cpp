// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace purify {

namespace {

constexpr std::uint64_t kEvalTag = 0xe7a1;
constexpr std::uint64_t kAttackTag = 0xa77a;
constexpr std::uint64_t kGridTag = 0x96fd;

AttackResult run_attack(const DefendedPipeline& pipe, AttackKind kind,
                        std::span<const double> x, int label, AttackConfig cfg,
                        std::uint64_t eval_seed) {
    switch (kind) {
        case AttackKind::kGrey: return greybox_attack(pipe, x, label, cfg, eval_seed);
        case AttackKind::kBpda: return bpda_eot_attack(pipe, x, label, cfg, eval_seed);
        case AttackKind::kWhite: return whitebox_eot_pgd(pipe, x, label, cfg, eval_seed);
    }
    throw std::invalid_argument("run_attack: unknown attack kind");
}

std::string fmt_acc(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

const char* attack_kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::kGrey: return "grey";
        case AttackKind::kBpda: return "bpda+eot";
        case AttackKind::kWhite: return "white+eot";
    }
    return "?";
}

void EvalReport::finalize() {
    if (rows.empty()) {
        awt = aoa = 0.0;
        return;
    }
    double total = 0.0, unseen = 0.0;
    std::size_t unseen_n = 0;
    for (const EvalRow& r : rows) {
        total += r.adv_def;
        if (!r.trained_on) {
            unseen += r.adv_def;
            ++unseen_n;
        }
    }
    aoa = total / static_cast<double>(rows.size());
    awt = unseen_n ? unseen / static_cast<double>(unseen_n) : aoa;
}

double average_of_all(std::span<const double> accuracies) {
    if (accuracies.empty()) return 0.0;
    double s = 0.0;
    for (double a : accuracies) s += a;
    return s / static_cast<double>(accuracies.size());
}

RobustAccuracy robust_accuracy(const DefendedPipeline& pipe, const Dataset& test,
                               AttackKind kind, const AttackConfig& cfg, std::uint64_t base_seed,
                               std::size_t n_points, std::vector<AttackResult>* per_point,
                               std::vector<unsigned char>* correct_bits) {
    pipe.validate();
    cfg.validate();
    test.validate();
    const std::size_t n = n_points == 0 ? test.size() : std::min(n_points, test.size());
    if (n == 0) throw std::invalid_argument("robust_accuracy: no points");

    std::vector<unsigned char> clean_def_ok(n), adv_def_ok(n), clean_base_ok(n), adv_base_ok(n);
    if (per_point) per_point->resize(n);

#pragma omp parallel for schedule(dynamic, 4)
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> x = test.point(i);
        const int label = test.labels[i];
        const std::uint64_t eval_seed = seed_mix(base_seed, i, kEvalTag);

        clean_base_ok[i] = predict_class(*pipe.classifier, x) == label;
        clean_def_ok[i] =
            pipe.predict_defended_vote(x, eval_seed, cfg.vote_realizations) == label;

        AttackConfig point_cfg = cfg;
        point_cfg.seed = seed_mix(base_seed, i, kAttackTag);
        AttackResult res = run_attack(pipe, kind, x, label, point_cfg, eval_seed);

        std::vector<double> x_adv(x.begin(), x.end());
        for (std::size_t j = 0; j < x_adv.size(); ++j) x_adv[j] += res.delta[j];
        adv_base_ok[i] = predict_class(*pipe.classifier, x_adv) == label;
        adv_def_ok[i] = !res.success;

        if (per_point) (*per_point)[i] = std::move(res);
    }

    RobustAccuracy out;
    out.n = n;
    for (std::size_t i = 0; i < n; ++i) {
        out.clean_def += clean_def_ok[i];
        out.robust_def += adv_def_ok[i];
        out.clean_base += clean_base_ok[i];
        out.adv_base += adv_base_ok[i];
    }
    out.clean_def /= static_cast<double>(n);
    out.robust_def /= static_cast<double>(n);
    out.clean_base /= static_cast<double>(n);
    out.adv_base /= static_cast<double>(n);
    if (correct_bits) *correct_bits = std::move(adv_def_ok);
    return out;
}

std::vector<SweepPoint> depth_sweep(const DefendedPipeline& base, std::span<const int> t_stars,
                                    int tau_stride, const Dataset& test, AttackKind kind,
                                    const AttackConfig& cfg, std::uint64_t base_seed,
                                    std::size_t n_points) {
    std::vector<SweepPoint> curve;
    curve.reserve(t_stars.size());
    for (int t_star : t_stars) {
        DefendedPipeline pipe = base;
        pipe.purifier.t_star = t_star;
        pipe.purifier.tau = make_tau(t_star, tau_stride);
        const RobustAccuracy acc =
            robust_accuracy(pipe, test, kind, cfg, base_seed, n_points);
        curve.push_back({t_star, acc.clean_def, acc.robust_def, acc.n});
    }
    return curve;
}

BoundaryGrid boundary_grid(const DefendedPipeline& pipe, double lo, double hi, int resolution,
                           int realizations, std::uint64_t seed) {
    pipe.validate();
    if (resolution < 32) throw std::invalid_argument("boundary_grid: resolution must be >= 32");
    if (!(hi > lo)) throw std::invalid_argument("boundary_grid: empty bounds");
    if (realizations < 1) throw std::invalid_argument("boundary_grid: realizations must be >= 1");

    BoundaryGrid grid;
    grid.resolution = resolution;
    grid.lo = lo;
    grid.hi = hi;
    grid.realizations = realizations;
    const std::size_t cells = static_cast<std::size_t>(resolution) * resolution;
    const int classes = pipe.classifier->num_classes;

    std::vector<double> centers(cells * 2);
    for (int iy = 0; iy < resolution; ++iy)
        for (int ix = 0; ix < resolution; ++ix) {
            const std::size_t c = static_cast<std::size_t>(iy) * resolution + ix;
            centers[2 * c] = grid.cell_coord(ix);
            centers[2 * c + 1] = grid.cell_coord(iy);
        }

    std::vector<int> votes(cells * static_cast<std::size_t>(classes), 0);
    constexpr std::size_t kChunk = 2048;
    const std::size_t n_chunks = (cells + kChunk - 1) / kChunk;

#pragma omp parallel for schedule(dynamic)
    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
        const std::size_t begin = chunk * kChunk;
        const std::size_t count = std::min(kChunk, cells - begin);
        std::vector<double> purified(count * 2);
        std::vector<RandomStream> rngs;
        rngs.reserve(count);
        for (int r = 0; r < realizations; ++r) {
            rngs.clear();
            for (std::size_t c = 0; c < count; ++c)
                rngs.emplace_back(seed_mix(seed, kGridTag, begin + c, static_cast<std::uint64_t>(r)));
            purify_batch(centers.data() + 2 * begin, count, pipe.purifier, *pipe.denoiser,
                         rngs, purified.data());
            const std::vector<double> logits =
                logits_batch(*pipe.classifier, purified.data(), count);
            for (std::size_t c = 0; c < count; ++c) {
                const std::span<const double> row(logits.data() + c * classes,
                                                  static_cast<std::size_t>(classes));
                votes[(begin + c) * classes + argmax(row)]++;
            }
        }
    }

    grid.majority.resize(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        int best = 0;
        for (int k = 1; k < classes; ++k)
            if (votes[c * classes + k] > votes[c * classes + best]) best = k;
        grid.majority[c] = best;
    }
    return grid;
}

double grid_margin(const BoundaryGrid& grid, const Dataset& train) {
    train.validate();
    const int res = grid.resolution;
    // Cell centers of each label, gathered once.
    std::vector<std::vector<double>> label_cells(
        static_cast<std::size_t>(*std::max_element(grid.majority.begin(), grid.majority.end())) + 1);
    for (int iy = 0; iy < res; ++iy)
        for (int ix = 0; ix < res; ++ix) {
            const int lab = grid.majority[static_cast<std::size_t>(iy) * res + ix];
            label_cells[static_cast<std::size_t>(lab)].push_back(grid.cell_coord(ix));
            label_cells[static_cast<std::size_t>(lab)].push_back(grid.cell_coord(iy));
        }

    const std::size_t n = train.size();
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
        const double px = train.points[2 * i];
        const double py = train.points[2 * i + 1];
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t lab = 0; lab < label_cells.size(); ++lab) {
            if (static_cast<int>(lab) == train.labels[i]) continue;
            const std::vector<double>& cells = label_cells[lab];
            for (std::size_t c = 0; c + 1 < cells.size(); c += 2) {
                const double dx = px - cells[c];
                const double dy = py - cells[c + 1];
                const double d2 = dx * dx + dy * dy;
                if (d2 < b) b = d2;
            }
        }
        best[i] = b;
    }
    double min_d2 = std::numeric_limits<double>::infinity();
    for (double b : best) min_d2 = std::min(min_d2, b);
    return std::sqrt(min_d2);
}

PairedComparison subsequence_comparison(const DefendedPipeline& base, const Dataset& test,
                                        AttackKind kind, const AttackConfig& cfg,
                                        std::span<const int> tau_full,
                                        std::span<const int> tau_skipped,
                                        std::uint64_t base_seed, std::size_t n_points) {
    if (tau_full.empty() || tau_skipped.empty() || tau_full.front() != tau_skipped.front())
        throw std::invalid_argument("subsequence_comparison: both tau must start at the same T*");

    auto run = [&](std::span<const int> tau, std::vector<unsigned char>* bits) {
        DefendedPipeline pipe = base;
        pipe.purifier.t_star = tau.front();
        pipe.purifier.tau.assign(tau.begin(), tau.end());
        return robust_accuracy(pipe, test, kind, cfg, base_seed, n_points, nullptr, bits);
    };

    std::vector<unsigned char> bits_full, bits_skip;
    const RobustAccuracy full = run(tau_full, &bits_full);
    const RobustAccuracy skip = run(tau_skipped, &bits_skip);

    PairedComparison out;
    out.n = full.n;
    out.acc_full = full.robust_def;
    out.acc_skipped = skip.robust_def;
    out.diff = out.acc_full - out.acc_skipped;
    double mean_d = 0.0;
    for (std::size_t i = 0; i < out.n; ++i)
        mean_d += static_cast<double>(bits_full[i]) - static_cast<double>(bits_skip[i]);
    mean_d /= static_cast<double>(out.n);
    double var = 0.0;
    for (std::size_t i = 0; i < out.n; ++i) {
        const double d = static_cast<double>(bits_full[i]) - static_cast<double>(bits_skip[i]) - mean_d;
        var += d * d;
    }
    var /= out.n > 1 ? static_cast<double>(out.n - 1) : 1.0;
    out.se_diff = std::sqrt(var / static_cast<double>(out.n));
    return out;
}

std::string report_tsv(const EvalReport& report) {
    std::string out =
        "attack\tnorm\tepsilon\tn\tseed\tclean_base\tadv_base\tclean_defended\tadv_defended\n";
    char buf[64];
    for (const EvalRow& r : report.rows) {
        out += r.name;
        out += '\t';
        out += norm_name(r.norm);
        std::snprintf(buf, sizeof(buf), "\t%.17g\t", r.epsilon);
        out += buf;
        out += std::to_string(r.n) + "\t" + std::to_string(r.seed) + "\t";
        out += fmt_acc(r.clean_base) + "\t" + fmt_acc(r.adv_base) + "\t" +
               fmt_acc(r.clean_def) + "\t" + fmt_acc(r.adv_def) + "\n";
    }
    return out;
}

std::string report_summary(const EvalReport& report, int num_classes) {
    std::string out;
    for (const EvalRow& r : report.rows) {
        out += std::string(attack_kind_name(r.kind)) + " (" + norm_name(r.norm) +
               ", eps=" + fmt_acc(r.epsilon) + "): clean base " + fmt_acc(r.clean_base) +
               ", adv base " + fmt_acc(r.adv_base) + ", clean defended " + fmt_acc(r.clean_def) +
               ", robust defended " + fmt_acc(r.adv_def) + " (n=" + std::to_string(r.n) + ")\n";
    }
    out += "AwT " + fmt_acc(report.awt) + "  AoA " + fmt_acc(report.aoa) + "  chance " +
           fmt_acc(1.0 / std::max(num_classes, 1)) + "\n";
    return out;
}

std::string sweep_tsv(std::span<const SweepPoint> sweep) {
    std::string out = "t_star\tclean_defended\trobust_defended\tn\n";
    for (const SweepPoint& p : sweep)
        out += std::to_string(p.t_star) + "\t" + fmt_acc(p.clean_def) + "\t" +
               fmt_acc(p.robust_def) + "\t" + std::to_string(p.n) + "\n";
    return out;
}

}  // namespace purify
