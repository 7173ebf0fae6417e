// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// The trained noise estimator: an MLP on [x_t | embed(t)] with a learned
// per-step time-embedding table and softplus hidden units, fit to the
// denoising MSE over (x0, t, eps) triples drawn through the forward process.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "purify/diffusion.hpp"
#include "purify/mlp.hpp"
#include "purify/rng.hpp"
#include "purify/schedule.hpp"

namespace purify {

struct DenoiserMlp {
    int data_dim = 2;
    int embed_dim = 16;
    int width = 128;
    int depth = 4;  // hidden layers
    int T = 0;
    std::uint64_t schedule_hash = 0;
    MlpParams mlp;         // (data_dim+embed_dim) -> width^depth -> data_dim
    ad::TapeTensor embed;  // (T+1) x embed_dim learned table
};

DenoiserMlp init_denoiser(int data_dim, int T, std::uint64_t schedule_hash, int depth, int width,
                          int embed_dim, RandomStream& rng);

/// Tape-recorded eps_theta(x_t, t) for a 1 x d row. Rejects t without an embedding.
ad::TapeTensor denoiser_forward(ad::Tape& tape, const DenoiserMlp& model,
                                const ad::TapeTensor& x_t, int t);

/// Row-wise prediction for an n x d batch sharing one t.
void denoiser_forward_batch(const DenoiserMlp& model, const double* x_t, std::size_t n, int t,
                            double* out);

/// Minimizes E ||eps_theta(sqrt(a_t) x0 + sqrt(1-a_t) eps, t) - eps||^2 by
/// full-batch gradient descent, t uniform in {1..T}, fresh (t, eps) per epoch.
/// Returns the per-epoch loss log (empty for epochs = 0); aborts (naming the
/// epoch) when the loss turns non-finite.
std::vector<double> train_denoiser(std::span<const double> points, std::size_t n,
                                   const VarianceSchedule& sched, int epochs, double lr,
                                   RandomStream& rng, DenoiserMlp* model);

class MlpEstimator final : public NoiseEstimator {
public:
    explicit MlpEstimator(const DenoiserMlp* model) : model_(model) {}

    int dim() const override { return model_->data_dim; }
    ad::TapeTensor eps(ad::Tape& tape, const ad::TapeTensor& x_t, int t) const override {
        return denoiser_forward(tape, *model_, x_t, t);
    }
    void eps_batch(const double* x_t, std::size_t n, int t, double* out) const override {
        denoiser_forward_batch(*model_, x_t, n, t, out);
    }

private:
    const DenoiserMlp* model_;
};

}  // namespace purify
