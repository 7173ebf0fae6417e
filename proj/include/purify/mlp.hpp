// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense layer stack shared by the classifier and the denoiser.

#pragma once

#include <vector>

#include "purify/rng.hpp"
#include "purify/tape.hpp"

namespace purify {

enum class Activation { kRelu, kSoftplus };

/// Weights are stored (in x out) so batches multiply as X * W; biases are rows.
struct MlpParams {
    std::vector<ad::TapeTensor> weights;
    std::vector<ad::TapeTensor> biases;

    std::size_t layer_count() const { return weights.size(); }
};

/// He-initialized stack: in_dim -> width x hidden_layers -> out_dim.
MlpParams init_mlp(int in_dim, int out_dim, int hidden_layers, int width, RandomStream& rng);

/// Parameters interned on a tape (as variables when trainable, else constants).
struct TapedMlp {
    std::vector<ad::TapeTensor> weights;
    std::vector<ad::TapeTensor> biases;
};
TapedMlp intern_mlp(ad::Tape& tape, const MlpParams& p, bool trainable);

/// Forward through the interned stack; activation applies to hidden layers only.
ad::TapeTensor mlp_forward(ad::Tape& tape, const TapedMlp& p, const ad::TapeTensor& input,
                           Activation act);

/// Plain batch forward (n x in_dim row-major); returns n x out_dim.
std::vector<double> mlp_forward_plain(const MlpParams& p, const double* input, std::size_t n,
                                      Activation act);

/// SGD step: params -= lr * grad, reading gradients of the interned variables.
void apply_sgd(MlpParams& p, const TapedMlp& taped, const ad::GradientMap& grads, double lr);

}  // namespace purify
