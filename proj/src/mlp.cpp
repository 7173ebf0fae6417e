// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "purify/kernels.hpp"

namespace purify {

namespace {

using ad::TapeTensor;

void softplus_plain(const double* x, double* out, std::size_t n) {
    // Mirrors the softplus tape composite op-for-op.
    std::vector<double> r(n), nr(n), a(n), e1(n), e2(n), s(n), l(n);
    kern::relu(x, r.data(), n);
    kern::scale(r.data(), -1.0, nr.data(), n);
    kern::add(x, nr.data(), a.data(), n);
    kern::vexp(a.data(), e1.data(), n);
    kern::vexp(nr.data(), e2.data(), n);
    kern::add(e1.data(), e2.data(), s.data(), n);
    kern::vlog(s.data(), l.data(), n);
    kern::add(r.data(), l.data(), out, n);
}

}  // namespace

MlpParams init_mlp(int in_dim, int out_dim, int hidden_layers, int width, RandomStream& rng) {
    if (in_dim < 1 || out_dim < 1 || hidden_layers < 0 || (hidden_layers > 0 && width < 1))
        throw std::invalid_argument("init_mlp: invalid dimensions");
    MlpParams p;
    int prev = in_dim;
    auto push_layer = [&](int next) {
        std::vector<double> w(static_cast<std::size_t>(prev) * next);
        const double std_dev = std::sqrt(2.0 / prev);
        for (double& v : w) v = std_dev * rng.normal();
        p.weights.emplace_back(ad::Shape{(std::size_t)prev, (std::size_t)next}, std::move(w));
        p.biases.emplace_back(ad::Shape{1, (std::size_t)next},
                              std::vector<double>(static_cast<std::size_t>(next), 0.0));
        prev = next;
    };
    for (int l = 0; l < hidden_layers; ++l) push_layer(width);
    push_layer(out_dim);
    return p;
}

TapedMlp intern_mlp(ad::Tape& tape, const MlpParams& p, bool trainable) {
    TapedMlp t;
    t.weights.reserve(p.weights.size());
    t.biases.reserve(p.biases.size());
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        t.weights.push_back(trainable ? tape.variable(p.weights[i]) : tape.constant(p.weights[i]));
        t.biases.push_back(trainable ? tape.variable(p.biases[i]) : tape.constant(p.biases[i]));
    }
    return t;
}

TapeTensor mlp_forward(ad::Tape& tape, const TapedMlp& p, const TapeTensor& input,
                       Activation act) {
    TapeTensor h = input;
    const std::size_t layers = p.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        TapeTensor z = tape.add(tape.matmul(h, p.weights[l]), p.biases[l]);
        if (l + 1 == layers) {
            h = z;
        } else {
            h = act == Activation::kRelu ? tape.relu(z) : softplus(tape, z);
        }
    }
    return h;
}

std::vector<double> mlp_forward_plain(const MlpParams& p, const double* input, std::size_t n,
                                      Activation act) {
    const std::size_t layers = p.weights.size();
    std::vector<double> h(input, input + n * p.weights.front().shape[0]);
    std::size_t cur_dim = p.weights.front().shape[0];
    std::vector<double> z;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t next = p.weights[l].shape[1];
        z.assign(n * next, 0.0);
        kern::matmul(h.data(), p.weights[l].data(), z.data(), n, cur_dim, next);
        kern::add_rowvec(z.data(), p.biases[l].data(), z.data(), n, next);
        if (l + 1 == layers) {
            h = z;
        } else {
            h.resize(z.size());
            if (act == Activation::kRelu)
                kern::relu(z.data(), h.data(), z.size());
            else
                softplus_plain(z.data(), h.data(), z.size());
        }
        cur_dim = next;
    }
    return h;
}

void apply_sgd(MlpParams& p, const TapedMlp& taped, const ad::GradientMap& grads, double lr) {
    auto step = [&](TapeTensor& param, const TapeTensor& var) {
        const std::vector<double>* g = grads.ptr(var);
        if (g) kern::axpy(-lr, g->data(), param.data(), param.size());
    };
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        step(p.weights[i], taped.weights[i]);
        step(p.biases[i], taped.biases[i]);
    }
}

}  // namespace purify
