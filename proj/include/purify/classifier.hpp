// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// The two-class 2D task: data generation / ingestion, a vanilla MLP
// classifier, full-batch cross-entropy training, and prediction.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "purify/mlp.hpp"
#include "purify/rng.hpp"
#include "purify/scores.hpp"

namespace purify {

struct Dataset {
    int dim = 2;
    int num_classes = 2;
    std::vector<double> points;  // N x dim row-major
    std::vector<int> labels;     // in [0, num_classes)
    std::string source;          // "gmm" for synthetic, else the ingested path
    std::optional<GmmSpec> spec;

    std::size_t size() const { return labels.size(); }
    std::span<const double> point(std::size_t i) const {
        return {points.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    void validate() const;
};

Dataset generate_2d_dataset(const GmmSpec& spec, std::size_t n, RandomStream& rng);

/// Comma-delimited rows, last column an integer label.
Dataset load_csv_dataset(const std::string& path);
void save_csv_dataset(const Dataset& data, const std::string& path);

struct MlpClassifier {
    int in_dim = 2;
    int num_classes = 2;
    int width = 0;
    int depth = 0;  // hidden layers
    MlpParams mlp;
};

MlpClassifier init_classifier(int in_dim, int num_classes, int depth, int width,
                              RandomStream& rng);

/// Tape-recorded logits for a 1 x d row or an n x d batch.
ad::TapeTensor predict(ad::Tape& tape, const MlpClassifier& model, const ad::TapeTensor& x);

std::vector<double> logits_batch(const MlpClassifier& model, const double* x, std::size_t n);
int predict_class(const MlpClassifier& model, std::span<const double> x);
int argmax(std::span<const double> logits);

struct TrainOptions {
    int epochs = 5000;
    double lr = 0.05;
    int batch_size = 0;  // 0 = full batch
};

/// Softmax cross-entropy minimized by (full-batch by default) gradient
/// descent. Returns the per-epoch loss log; aborts naming the epoch when the
/// loss turns non-finite.
std::vector<double> train_classifier(const Dataset& data, int depth, int width,
                                     const TrainOptions& opts, RandomStream& rng,
                                     MlpClassifier* model);

double train_accuracy(const MlpClassifier& model, const Dataset& data);

}  // namespace purify
