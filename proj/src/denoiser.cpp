// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/denoiser.hpp"

#include <cmath>
#include <stdexcept>
#include <string>


namespace purify {

namespace {

using ad::TapeTensor;

// Column selectors: [x | e] assembled as x*Sx + e*Se keeps the whole forward
// inside the primitive set.
TapeTensor selector_x(int d, int e) {
    std::vector<double> s(static_cast<std::size_t>(d) * (d + e), 0.0);
    for (int i = 0; i < d; ++i) s[static_cast<std::size_t>(i) * (d + e) + i] = 1.0;
    return TapeTensor({(std::size_t)d, (std::size_t)(d + e)}, std::move(s));
}
TapeTensor selector_e(int d, int e) {
    std::vector<double> s(static_cast<std::size_t>(e) * (d + e), 0.0);
    for (int j = 0; j < e; ++j) s[static_cast<std::size_t>(j) * (d + e) + d + j] = 1.0;
    return TapeTensor({(std::size_t)e, (std::size_t)(d + e)}, std::move(s));
}
TapeTensor onehot_row(int t, int len) {
    std::vector<double> v(static_cast<std::size_t>(len), 0.0);
    v[static_cast<std::size_t>(t)] = 1.0;
    return TapeTensor({1, (std::size_t)len}, std::move(v));
}

void check_t(const DenoiserMlp& model, int t) {
    if (t < 0 || t > model.T)
        throw std::invalid_argument("denoiser: no embedding for step " + std::to_string(t) +
                                    " (table covers 0.." + std::to_string(model.T) + ")");
}

// Tape-recorded input assembly + stack, with params interned by the caller.
TapeTensor forward_on(ad::Tape& tape, const DenoiserMlp& model, const TapedMlp& taped,
                      const TapeTensor& embed_taped, const TapeTensor& x_rows, int t) {
    const int d = model.data_dim, e = model.embed_dim;
    TapeTensor erow = tape.matmul(tape.constant(onehot_row(t, model.T + 1)), embed_taped);
    TapeTensor in = tape.add(tape.matmul(x_rows, tape.constant(selector_x(d, e))),
                             tape.matmul(erow, tape.constant(selector_e(d, e))));
    return mlp_forward(tape, taped, in, Activation::kSoftplus);
}

}  // namespace

DenoiserMlp init_denoiser(int data_dim, int T, std::uint64_t schedule_hash, int depth, int width,
                          int embed_dim, RandomStream& rng) {
    if (T < 1) throw std::invalid_argument("init_denoiser: T must be >= 1");
    DenoiserMlp m;
    m.data_dim = data_dim;
    m.embed_dim = embed_dim;
    m.width = width;
    m.depth = depth;
    m.T = T;
    m.schedule_hash = schedule_hash;
    m.mlp = init_mlp(data_dim + embed_dim, data_dim, depth, width, rng);
    std::vector<double> table(static_cast<std::size_t>(T + 1) * embed_dim);
    for (double& v : table) v = rng.normal();
    m.embed = TapeTensor({(std::size_t)(T + 1), (std::size_t)embed_dim}, std::move(table));
    return m;
}

ad::TapeTensor denoiser_forward(ad::Tape& tape, const DenoiserMlp& model,
                                const ad::TapeTensor& x_t, int t) {
    check_t(model, t);
    if (x_t.shape.size() != 2 || x_t.shape[1] != static_cast<std::size_t>(model.data_dim))
        throw std::invalid_argument("denoiser: input shape " + ad::shape_str(x_t.shape) +
                                    " does not match data dimension " +
                                    std::to_string(model.data_dim));
    TapedMlp taped = intern_mlp(tape, model.mlp, /*trainable=*/false);
    TapeTensor embed_taped = tape.constant(model.embed);
    return forward_on(tape, model, taped, embed_taped, x_t, t);
}

void denoiser_forward_batch(const DenoiserMlp& model, const double* x_t, std::size_t n, int t,
                            double* out) {
    check_t(model, t);
    const int d = model.data_dim, e = model.embed_dim;
    // Assemble [x | embed(t)] rows, then run the plain stack.
    std::vector<double> in(n * static_cast<std::size_t>(d + e));
    const double* erow = model.embed.data() + static_cast<std::size_t>(t) * e;
    for (std::size_t i = 0; i < n; ++i) {
        double* row = in.data() + i * (d + e);
        for (int j = 0; j < d; ++j) row[j] = x_t[i * d + j];
        for (int j = 0; j < e; ++j) row[d + j] = erow[j];
    }
    std::vector<double> pred = mlp_forward_plain(model.mlp, in.data(), n, Activation::kSoftplus);
    std::copy(pred.begin(), pred.end(), out);
}

namespace {

// Adam over a flat list of parameter tensors.
class AdamState {
public:
    explicit AdamState(const std::vector<ad::TapeTensor*>& params) {
        for (const ad::TapeTensor* p : params) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }

    void step(const std::vector<ad::TapeTensor*>& params,
              const std::vector<const std::vector<double>*>& grads, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!grads[i]) continue;
            double* p = params[i]->data();
            const double* g = grads[i]->data();
            for (std::size_t j = 0; j < params[i]->size(); ++j) {
                m_[i][j] = kBeta1 * m_[i][j] + (1.0 - kBeta1) * g[j];
                v_[i][j] = kBeta2 * v_[i][j] + (1.0 - kBeta2) * g[j] * g[j];
                p[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + 1e-8);
            }
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace

std::vector<double> train_denoiser(std::span<const double> points, std::size_t n,
                                   const VarianceSchedule& sched, int epochs, double lr,
                                   RandomStream& rng, DenoiserMlp* model) {
    if (n == 0) throw std::invalid_argument("train_denoiser: empty dataset");
    if (!model) throw std::invalid_argument("train_denoiser: null model");
    if (model->schedule_hash != sched.hash())
        throw std::invalid_argument("train_denoiser: model was initialized for a different schedule");
    const int d = model->data_dim;
    const int T = sched.T;
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(std::max(epochs, 0)));

    std::vector<ad::TapeTensor*> params;
    for (std::size_t i = 0; i < model->mlp.weights.size(); ++i) {
        params.push_back(&model->mlp.weights[i]);
        params.push_back(&model->mlp.biases[i]);
    }
    params.push_back(&model->embed);
    AdamState adam(params);

    std::vector<int> ts(n);
    std::vector<double> eps(n * static_cast<std::size_t>(d));
    std::vector<double> x_t(n * static_cast<std::size_t>(d));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        // Fresh (t, eps) triples through the forward process.
        for (std::size_t i = 0; i < n; ++i) {
            ts[i] = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(T)));
            for (int j = 0; j < d; ++j) eps[i * d + j] = rng.normal();
            const double a = sched.alpha(ts[i]);
            const double cs = std::sqrt(a), ce = std::sqrt(1.0 - a);
            for (int j = 0; j < d; ++j)
                x_t[i * d + j] = cs * points[i * d + j] + ce * eps[i * d + j];
        }
        std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(T) + 1);
        for (std::size_t i = 0; i < n; ++i) groups[static_cast<std::size_t>(ts[i])].push_back(i);

        ad::Tape tape;
        TapedMlp taped = intern_mlp(tape, model->mlp, /*trainable=*/true);
        ad::TapeTensor embed_taped = tape.variable(model->embed);
        ad::TapeTensor loss;
        bool first = true;
        for (int t = 1; t <= T; ++t) {
            const auto& idx = groups[static_cast<std::size_t>(t)];
            if (idx.empty()) continue;
            std::vector<double> xs(idx.size() * d), es(idx.size() * d);
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < d; ++j) {
                    xs[r * d + j] = x_t[idx[r] * d + j];
                    es[r * d + j] = eps[idx[r] * d + j];
                }
            ad::TapeTensor x_rows =
                tape.constant(ad::TapeTensor({idx.size(), (std::size_t)d}, std::move(xs)));
            ad::TapeTensor target =
                tape.constant(ad::TapeTensor({idx.size(), (std::size_t)d}, std::move(es)));
            ad::TapeTensor pred = forward_on(tape, *model, taped, embed_taped, x_rows, t);
            ad::TapeTensor diff = tape.add(pred, tape.scale(target, -1.0));
            ad::TapeTensor sq = tape.sum(tape.mul(diff, diff));
            ad::TapeTensor contrib = tape.scale(sq, 1.0 / (static_cast<double>(n) * d));
            loss = first ? contrib : tape.add(loss, contrib);
            first = false;
        }
        const double loss_val = loss.item();
        if (!std::isfinite(loss_val))
            throw std::runtime_error("train_denoiser: diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch));
        losses.push_back(loss_val);

        ad::GradientMap grads = tape.backward(loss);
        std::vector<const std::vector<double>*> grad_ptrs;
        grad_ptrs.reserve(params.size());
        for (std::size_t i = 0; i < taped.weights.size(); ++i) {
            grad_ptrs.push_back(grads.ptr(taped.weights[i]));
            grad_ptrs.push_back(grads.ptr(taped.biases[i]));
        }
        grad_ptrs.push_back(grads.ptr(embed_taped));
        adam.step(params, grad_ptrs, lr);
    }
    return losses;
}

}  // namespace purify
