// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// Plain-text experiment config: '[section]' headers mirroring the modules,
// 'key = value' lines, '#' comments; the 'attack' key repeats inside
// [attacks]. The echoed canonical form lists every defaulted field, and its
// FNV-64 hash names the run directory.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "purify/attacks.hpp"
#include "purify/evaluation.hpp"

namespace purify {

struct ConfigError : std::runtime_error {
    ConfigError(std::string field_name, const std::string& message)
        : std::runtime_error(field_name + ": " + message), field(std::move(field_name)) {}
    std::string field;
};

struct AttackSpec {
    AttackKind kind = AttackKind::kWhite;
    Norm norm = Norm::kLinf;
    double epsilon = 0.25;
    int steps = 40;
    double step_size = 0.0;  // auto
    int eot = 20;
    bool resample_per_iter = true;
    int votes = 1;

    std::string name() const;
    std::string to_line() const;
    AttackConfig to_config() const;
    static AttackSpec parse(const std::string& line);
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    // [data]
    std::string data_kind = "gmm";  // gmm | csv
    std::uint64_t data_n = 10000;
    std::int64_t clusters_per_class = 4;
    double cluster_radius = 4.0;
    double cluster_sigma = 0.3;
    std::string csv_path;
    // [schedule]
    std::int64_t schedule_T = 10;
    double alpha_min = 0.1;
    double alpha_max = 1.0;
    double eta = 1.0;
    // [purifier]
    std::int64_t t_star = 10;
    std::int64_t tau_stride = 1;
    std::string denoiser_kind = "analytic";  // analytic | mlp
    std::string denoiser_checkpoint;
    // [classifier]
    std::int64_t classifier_depth = 10;
    std::int64_t classifier_width = 128;
    std::int64_t classifier_epochs = 5000;
    double classifier_lr = 0.05;
    std::int64_t classifier_batch = 0;  // 0 = full batch
    std::string classifier_checkpoint;
    // [denoiser]
    std::int64_t denoiser_depth = 4;
    std::int64_t denoiser_width = 128;
    std::int64_t denoiser_embed_dim = 16;
    std::int64_t denoiser_epochs = 3000;
    double denoiser_lr = 0.005;
    // [attacks]
    std::vector<AttackSpec> attacks;  // defaulted to the 4-threat white+EOT grid
    // [evaluation]
    std::uint64_t eval_points = 500;
    std::string sweep_t_stars;  // comma list; empty = 0..T
    double grid_lo = -6.0;
    double grid_hi = 6.0;
    std::int64_t grid_resolution = 256;
    std::int64_t grid_realizations = 11;
    std::int64_t compare_stride = 2;

    std::vector<int> sweep_values() const;
};

/// Parses config text; defaulted (untouched) fields are reported as
/// "section.key" names. Unknown sections/keys are errors.
ExperimentConfig parse_config(const std::string& text, std::vector<std::string>* defaulted);

/// Applies one "section.key=value" override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment,
                    std::vector<std::string>* defaulted);

/// Canonical echo: every field in fixed order plus the defaulted-field list.
std::string canonical_config(const ExperimentConfig& cfg,
                             const std::vector<std::string>& defaulted);

std::uint64_t fnv64_str(const std::string& text);

/// Full validation for a command (one of gen-data, train-classifier,
/// train-denoiser, purify, attack, eval, sweep-depth, boundary-grid,
/// compare-sampling); throws ConfigError naming the first failing field.
void validate_config(const ExperimentConfig& cfg, const std::string& command);

}  // namespace purify
