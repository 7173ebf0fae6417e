// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// Robust-accuracy campaigns, the AwT/AoA aggregates, the T* depth sweep, the
// decision-boundary grid/margin, and the full-vs-skipped sampling comparison.
// Per-point seeds derive from (base seed, point index) only, so sweeps and
// comparisons are paired: curves differ only through the swept parameter.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "purify/attacks.hpp"
#include "purify/classifier.hpp"

namespace purify {

enum class AttackKind { kGrey, kBpda, kWhite };
const char* attack_kind_name(AttackKind k);

struct EvalRow {
    std::string name;
    AttackKind kind = AttackKind::kWhite;
    Norm norm = Norm::kLinf;
    double epsilon = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double clean_base = 0.0;  // bare classifier, clean points
    double adv_base = 0.0;    // bare classifier on x + delta
    double clean_def = 0.0;   // defended pipeline, clean points
    double adv_def = 0.0;     // defended pipeline on x + delta (robust accuracy)
    bool trained_on = false;  // always false: the defense trains on no threat model
};

struct SweepPoint {
    int t_star = 0;
    double clean_def = 0.0;
    double robust_def = 0.0;
    std::size_t n = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<SweepPoint> sweep;
    double awt = 0.0;
    double aoa = 0.0;
    /// AoA = unweighted mean of adv_def over rows; AwT excludes trained-on rows
    /// (an empty exclusion set makes them equal).
    void finalize();
};

/// Unweighted mean (the AoA aggregator).
double average_of_all(std::span<const double> accuracies);

struct RobustAccuracy {
    double clean_def = 0.0;
    double robust_def = 0.0;
    double clean_base = 0.0;
    double adv_base = 0.0;
    std::size_t n = 0;
};

/// Clean and attacked accuracy over the first n_points of the dataset (whole
/// dataset when n_points = 0). Per-point attack and evaluation seeds are fixed
/// functions of (base_seed, index); the clean and attacked defended
/// evaluations share the realization seed, so a zero delta reproduces the
/// clean prediction. Optional outputs: per-point attack results and
/// correctness bits (for paired statistics).
RobustAccuracy robust_accuracy(const DefendedPipeline& pipe, const Dataset& test,
                               AttackKind kind, const AttackConfig& cfg, std::uint64_t base_seed,
                               std::size_t n_points = 0,
                               std::vector<AttackResult>* per_point = nullptr,
                               std::vector<unsigned char>* correct_bits = nullptr);

/// Robust accuracy per T*, same per-point seeds across the sweep. tau is
/// rebuilt per value with the given stride.
std::vector<SweepPoint> depth_sweep(const DefendedPipeline& base, std::span<const int> t_stars,
                                    int tau_stride, const Dataset& test, AttackKind kind,
                                    const AttackConfig& cfg, std::uint64_t base_seed,
                                    std::size_t n_points = 0);

struct BoundaryGrid {
    int resolution = 0;
    double lo = 0.0, hi = 0.0;
    int realizations = 0;
    std::vector<int> majority;  // resolution^2, row-major [iy * resolution + ix]
    double cell_coord(int idx) const {
        return lo + (hi - lo) * (static_cast<double>(idx) + 0.5) / resolution;
    }
};

/// Majority predicted label per cell over `realizations` defense draws.
BoundaryGrid boundary_grid(const DefendedPipeline& pipe, double lo, double hi, int resolution,
                           int realizations, std::uint64_t seed);

/// Min Euclidean distance from any training point to (the center of) a cell of
/// opposite majority label.
double grid_margin(const BoundaryGrid& grid, const Dataset& train);

struct PairedComparison {
    double acc_full = 0.0;
    double acc_skipped = 0.0;
    double diff = 0.0;     // full - skipped
    double se_diff = 0.0;  // paired standard error
    std::size_t n = 0;
};

/// Robust accuracy under two tau samplings of the same T*, paired seeds.
PairedComparison subsequence_comparison(const DefendedPipeline& base, const Dataset& test,
                                        AttackKind kind, const AttackConfig& cfg,
                                        std::span<const int> tau_full,
                                        std::span<const int> tau_skipped,
                                        std::uint64_t base_seed, std::size_t n_points = 0);

std::string report_tsv(const EvalReport& report);
std::string report_summary(const EvalReport& report, int num_classes);
std::string sweep_tsv(std::span<const SweepPoint> sweep);

}  // namespace purify
