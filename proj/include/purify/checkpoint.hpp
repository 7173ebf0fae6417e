// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat binary checkpoint: a header (schedule hash, data dimension) followed by
// named tensors as (name, shape, raw little-endian f64 data). Reload is
// bit-exact; classifier and denoiser share the container.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "purify/classifier.hpp"
#include "purify/denoiser.hpp"
#include "purify/tensor.hpp"

namespace purify {

struct NamedTensor {
    std::string name;
    ad::Shape shape;
    std::vector<double> data;
};

struct CheckpointHeader {
    std::uint64_t schedule_hash = 0;  // 0 for models without a schedule
    std::uint64_t data_dim = 0;
};

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const std::vector<NamedTensor>& tensors);
std::pair<CheckpointHeader, std::vector<NamedTensor>> load_checkpoint(const std::string& path);

void save_classifier(const std::string& path, const MlpClassifier& model);
MlpClassifier load_classifier(const std::string& path);

void save_denoiser(const std::string& path, const DenoiserMlp& model);
DenoiserMlp load_denoiser(const std::string& path);

}  // namespace purify
