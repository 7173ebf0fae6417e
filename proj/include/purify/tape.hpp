// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over a recording tape.
//
// The tape is an append-only, topologically ordered list of primitive nodes.
// Forward values are computed eagerly at record time with the kernels from
// kernels.hpp; backward() walks the list in reverse and returns a gradient per
// requested leaf. The primitive set is closed: matmul, add (with row-vector
// broadcast), scale (by a compile-time constant), mul (elementwise, scalar
// broadcast), relu, maximum, exp, log, sum, softmax-cross-entropy. Composites
// (softplus, MSE, the analytic score, ...) are expressed in these primitives so
// every backward rule stays auditable.
//
// Stochastic draws are recorded as constants: backward treats noise as data,
// which is exactly the per-realization gradient that EOT averages.
//
// A tape is single-owner and not shareable across threads; independent samples
// use independent tapes.

#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "purify/tensor.hpp"

namespace purify::ad {

enum class Op {
    kConst,
    kVar,
    kAdd,
    kScale,
    kMatmul,
    kMul,
    kRelu,
    kMaximum,
    kExp,
    kLog,
    kSum,
    kSoftmaxXent,
};

const char* op_name(Op op);

struct Node {
    Op op;
    int in0 = kNoNode;
    int in1 = kNoNode;
    double factor = 0.0;  // kScale only
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    std::shared_ptr<std::vector<double>> aux;  // kSoftmaxXent: softmax rows
    std::vector<int> labels;                   // kSoftmaxXent
    bool requires_grad = false;
};

/// Result of backward(): node id -> dense gradient array.
/// Leaves that are not on any path to the output map to zero arrays.
class GradientMap {
public:
    GradientMap(std::vector<std::shared_ptr<std::vector<double>>> grads,
                std::vector<std::size_t> sizes)
        : grads_(std::move(grads)), sizes_(std::move(sizes)) {}

    std::vector<double> at(const TapeTensor& t) const;
    bool touched(const TapeTensor& t) const;
    // Borrowing accessor for hot paths; nullptr when the node was untouched.
    const std::vector<double>* ptr(const TapeTensor& t) const;

private:
    void check(const TapeTensor& t) const;
    std::vector<std::shared_ptr<std::vector<double>>> grads_;
    std::vector<std::size_t> sizes_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf with gradient. Shares the tensor's buffer; the buffer must stay
    /// unmodified while this tape is alive.
    TapeTensor variable(const TapeTensor& t);
    /// Leaf without gradient (noise draws, data, selector matrices).
    TapeTensor constant(const TapeTensor& t);

    /// Generic entry point. `factor` is only read by kScale, `labels` only by
    /// kSoftmaxXent. Off-tape inputs are interned as constants.
    TapeTensor record(Op op, std::span<const TapeTensor> inputs, double factor = 0.0,
                      std::vector<int> labels = {});

    TapeTensor add(const TapeTensor& a, const TapeTensor& b);
    TapeTensor scale(const TapeTensor& a, double c);
    TapeTensor matmul(const TapeTensor& a, const TapeTensor& b);
    TapeTensor mul(const TapeTensor& a, const TapeTensor& b);
    TapeTensor relu(const TapeTensor& a);
    TapeTensor maximum(const TapeTensor& a, const TapeTensor& b);
    TapeTensor exp(const TapeTensor& a);
    TapeTensor log(const TapeTensor& a);
    TapeTensor sum(const TapeTensor& a);
    TapeTensor softmax_cross_entropy(const TapeTensor& logits, std::vector<int> labels);

    /// Reverse-mode gradients of a scalar-shaped output that lives on this tape.
    GradientMap backward(const TapeTensor& output) const;

    /// Re-executes every node from its recorded inputs and bit-compares with the
    /// recorded outputs.
    bool replay_matches() const;

    std::size_t size() const { return nodes_.size(); }
    const Node& node_at(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

private:
    int intern(const TapeTensor& t, bool requires_grad);
    TapeTensor push(Node n);
    void ensure_on_tape(const TapeTensor& t, const char* what) const;

    std::vector<Node> nodes_;
};

// --- composites (pure primitive compositions) ------------------------------

/// Numerically stable softplus log(1+exp(x)) = relu(x) + log(exp(x-relu(x)) + exp(-relu(x))).
TapeTensor softplus(Tape& tape, const TapeTensor& x);

/// Mean of (a-b)^2 over all entries.
TapeTensor mean_squared_error(Tape& tape, const TapeTensor& a, const TapeTensor& b);

// --- finite differences -----------------------------------------------------

/// Builds a scalar-shaped output from an interned input on the given tape.
/// Stochastic functions must derive their noise from state captured in the
/// closure so repeated evaluations replay identical draws.
using ScalarFn = std::function<TapeTensor(Tape&, const TapeTensor&)>;

/// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12),
/// numeric being the central difference with the given step. Throws (naming the
/// coordinate) when any value involved is non-finite.
double finite_difference_check(const ScalarFn& fn, const TapeTensor& x, double step);

}  // namespace purify::ad
