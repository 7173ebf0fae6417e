// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>
#include <string>

#include "purify/kernels.hpp"

namespace purify::ad {

namespace {

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// (m x n) + (1 x n) or (m x n) + (n): row broadcast.
bool row_broadcastable(const Shape& big, const Shape& row) {
    if (big.size() != 2) return false;
    const std::size_t cols = big[1];
    if (row.size() == 1) return row[0] == cols;
    return row.size() == 2 && row[0] == 1 && row[1] == cols;
}

bool is_scalar(const Shape& s) { return numel(s) == 1; }

[[noreturn]] void shape_error(Op op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string("tape: ") + op_name(op) +
                                ": incompatible shapes " + shape_str(a) + " and " +
                                shape_str(b));
}

// Node outputs churn fast (one buffer per recorded op); recycle them through a
// thread-local pool so the hot paths neither hit the allocator nor re-zero
// buffers the kernel fully overwrites.
class BufferPool {
public:
    ~BufferPool() {
        alive_ = false;
        for (auto& [size, list] : free_)
            for (std::vector<double>* p : list) delete p;
    }

    static BufferPool& local() {
        thread_local BufferPool pool;
        return pool;
    }

    std::shared_ptr<std::vector<double>> get(std::size_t n, bool zeroed) {
        std::vector<double>* raw = nullptr;
        auto it = free_.find(n);
        if (it != free_.end() && !it->second.empty()) {
            raw = it->second.back();
            it->second.pop_back();
            if (zeroed) std::fill(raw->begin(), raw->end(), 0.0);
        } else {
            raw = new std::vector<double>(n, 0.0);
        }
        return std::shared_ptr<std::vector<double>>(raw, [](std::vector<double>* p) {
            BufferPool& pool = local();
            auto& list = pool.free_[p->size()];
            if (pool.alive_ && list.size() < kMaxPerSize) list.push_back(p);
            else delete p;
        });
    }

private:
    static constexpr std::size_t kMaxPerSize = 48;
    std::unordered_map<std::size_t, std::vector<std::vector<double>*>> free_;
    bool alive_ = true;
};

// Uninitialized unless the caller accumulates into it.
std::shared_ptr<std::vector<double>> alloc(std::size_t n) {
    return BufferPool::local().get(n, /*zeroed=*/false);
}
std::shared_ptr<std::vector<double>> alloc_zeroed(std::size_t n) {
    return BufferPool::local().get(n, /*zeroed=*/true);
}

struct MatmulDims {
    std::size_t m, k, n;
    Shape out_shape;
};

MatmulDims matmul_dims(const Shape& a, const Shape& b) {
    if (a.size() == 2 && b.size() == 2 && a[1] == b[0])
        return {a[0], a[1], b[1], Shape{a[0], b[1]}};
    if (a.size() == 2 && b.size() == 1 && a[1] == b[0])
        return {a[0], a[1], 1, Shape{a[0]}};
    shape_error(Op::kMatmul, a, b);
}

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::kConst: return "const";
        case Op::kVar: return "var";
        case Op::kAdd: return "add";
        case Op::kScale: return "scale";
        case Op::kMatmul: return "matmul";
        case Op::kMul: return "mul";
        case Op::kRelu: return "relu";
        case Op::kMaximum: return "maximum";
        case Op::kExp: return "exp";
        case Op::kLog: return "log";
        case Op::kSum: return "sum";
        case Op::kSoftmaxXent: return "softmax_cross_entropy";
    }
    return "?";
}

// --- GradientMap -------------------------------------------------------------

void GradientMap::check(const TapeTensor& t) const {
    if (!t.on_tape() || static_cast<std::size_t>(t.node) >= sizes_.size())
        throw std::invalid_argument("gradient map: tensor is not on the tape");
}

std::vector<double> GradientMap::at(const TapeTensor& t) const {
    check(t);
    const auto& g = grads_[static_cast<std::size_t>(t.node)];
    if (g) return *g;
    return std::vector<double>(sizes_[static_cast<std::size_t>(t.node)], 0.0);
}

bool GradientMap::touched(const TapeTensor& t) const {
    check(t);
    return grads_[static_cast<std::size_t>(t.node)] != nullptr;
}

const std::vector<double>* GradientMap::ptr(const TapeTensor& t) const {
    check(t);
    return grads_[static_cast<std::size_t>(t.node)].get();
}

// --- Tape --------------------------------------------------------------------

int Tape::intern(const TapeTensor& t, bool requires_grad) {
    Node n;
    n.op = requires_grad ? Op::kVar : Op::kConst;
    n.shape = t.shape;
    n.values = t.values;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

TapeTensor Tape::variable(const TapeTensor& t) {
    return TapeTensor(t.shape, t.values, intern(t, true));
}

TapeTensor Tape::constant(const TapeTensor& t) {
    return TapeTensor(t.shape, t.values, intern(t, false));
}

void Tape::ensure_on_tape(const TapeTensor& t, const char* what) const {
    if (!t.on_tape() || static_cast<std::size_t>(t.node) >= nodes_.size() ||
        nodes_[static_cast<std::size_t>(t.node)].values != t.values)
        throw std::invalid_argument(std::string("tape: ") + what + " is not on this tape");
}

TapeTensor Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    const Node& stored = nodes_.back();
    return TapeTensor(stored.shape, stored.values, static_cast<int>(nodes_.size()) - 1);
}

TapeTensor Tape::record(Op op, std::span<const TapeTensor> inputs, double factor,
                        std::vector<int> labels) {
    // Intern off-tape operands as constants; verify on-tape ones belong here.
    std::array<TapeTensor, 2> in{};
    const std::size_t arity = inputs.size();
    if (arity == 0 || arity > 2)
        throw std::invalid_argument("tape: record expects 1 or 2 inputs");
    for (std::size_t i = 0; i < arity; ++i) {
        if (inputs[i].on_tape()) {
            ensure_on_tape(inputs[i], "input");
            in[i] = inputs[i];
        } else {
            in[i] = constant(inputs[i]);
        }
    }
    const TapeTensor& a = in[0];
    const TapeTensor& b = in[1];

    Node n;
    n.op = op;
    n.in0 = a.node;
    n.requires_grad = nodes_[static_cast<std::size_t>(a.node)].requires_grad;
    if (arity == 2) {
        n.in1 = b.node;
        n.requires_grad =
            n.requires_grad || nodes_[static_cast<std::size_t>(b.node)].requires_grad;
    }

    switch (op) {
        case Op::kAdd: {
            if (arity != 2) throw std::invalid_argument("tape: add expects 2 inputs");
            if (same_shape(a.shape, b.shape)) {
                n.shape = a.shape;
                n.values = alloc(a.size());
                kern::add(a.data(), b.data(), n.values->data(), a.size());
            } else if (row_broadcastable(a.shape, b.shape)) {
                n.shape = a.shape;
                n.values = alloc(a.size());
                kern::add_rowvec(a.data(), b.data(), n.values->data(), a.shape[0], a.shape[1]);
            } else if (row_broadcastable(b.shape, a.shape)) {
                n.shape = b.shape;
                n.values = alloc(b.size());
                kern::add_rowvec(b.data(), a.data(), n.values->data(), b.shape[0], b.shape[1]);
            } else {
                shape_error(op, a.shape, b.shape);
            }
            break;
        }
        case Op::kScale: {
            if (arity != 1) throw std::invalid_argument("tape: scale expects 1 input");
            n.shape = a.shape;
            n.factor = factor;
            n.values = alloc(a.size());
            kern::scale(a.data(), factor, n.values->data(), a.size());
            break;
        }
        case Op::kMatmul: {
            if (arity != 2) throw std::invalid_argument("tape: matmul expects 2 inputs");
            const MatmulDims d = matmul_dims(a.shape, b.shape);
            n.shape = d.out_shape;
            n.values = alloc(d.m * d.n);
            kern::matmul(a.data(), b.data(), n.values->data(), d.m, d.k, d.n);
            break;
        }
        case Op::kMul: {
            if (arity != 2) throw std::invalid_argument("tape: mul expects 2 inputs");
            if (same_shape(a.shape, b.shape)) {
                n.shape = a.shape;
                n.values = alloc(a.size());
                kern::mul(a.data(), b.data(), n.values->data(), a.size());
            } else if (is_scalar(a.shape)) {
                n.shape = b.shape;
                n.values = alloc(b.size());
                kern::scale(b.data(), a.item(), n.values->data(), b.size());
            } else if (is_scalar(b.shape)) {
                n.shape = a.shape;
                n.values = alloc(a.size());
                kern::scale(a.data(), b.item(), n.values->data(), a.size());
            } else {
                shape_error(op, a.shape, b.shape);
            }
            break;
        }
        case Op::kRelu:
        case Op::kExp:
        case Op::kLog: {
            if (arity != 1)
                throw std::invalid_argument(std::string("tape: ") + op_name(op) + " expects 1 input");
            n.shape = a.shape;
            n.values = alloc(a.size());
            if (op == Op::kRelu) kern::relu(a.data(), n.values->data(), a.size());
            if (op == Op::kExp) kern::vexp(a.data(), n.values->data(), a.size());
            if (op == Op::kLog) kern::vlog(a.data(), n.values->data(), a.size());
            break;
        }
        case Op::kMaximum: {
            if (arity != 2) throw std::invalid_argument("tape: maximum expects 2 inputs");
            if (!same_shape(a.shape, b.shape)) shape_error(op, a.shape, b.shape);
            n.shape = a.shape;
            n.values = alloc(a.size());
            kern::maximum(a.data(), b.data(), n.values->data(), a.size());
            break;
        }
        case Op::kSum: {
            if (arity != 1) throw std::invalid_argument("tape: sum expects 1 input");
            n.shape = Shape{1};
            n.values = alloc(1);
            (*n.values)[0] = kern::vsum(a.data(), a.size());
            break;
        }
        case Op::kSoftmaxXent: {
            if (arity != 1)
                throw std::invalid_argument("tape: softmax_cross_entropy expects 1 input");
            if (a.shape.size() != 2)
                throw std::invalid_argument(
                    "tape: softmax_cross_entropy expects rank-2 logits, got " +
                    shape_str(a.shape));
            const std::size_t rows = a.shape[0], cols = a.shape[1];
            if (labels.size() != rows)
                throw std::invalid_argument(
                    "tape: softmax_cross_entropy: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(rows) + " rows");
            for (int y : labels)
                if (y < 0 || static_cast<std::size_t>(y) >= cols)
                    throw std::invalid_argument("tape: softmax_cross_entropy: label " +
                                                std::to_string(y) + " out of range [0," +
                                                std::to_string(cols) + ")");
            n.labels = std::move(labels);
            n.aux = alloc(rows * cols);
            kern::softmax_rows(a.data(), n.aux->data(), rows, cols);
            n.shape = Shape{1};
            n.values = alloc(1);
            (*n.values)[0] = kern::xent_mean(n.aux->data(), n.labels.data(), rows, cols);
            break;
        }
        case Op::kConst:
        case Op::kVar:
            throw std::invalid_argument("tape: leaves are created via variable()/constant()");
    }
    return push(std::move(n));
}

TapeTensor Tape::add(const TapeTensor& a, const TapeTensor& b) {
    const TapeTensor in[2] = {a, b};
    return record(Op::kAdd, in);
}
TapeTensor Tape::scale(const TapeTensor& a, double c) {
    const TapeTensor in[1] = {a};
    return record(Op::kScale, in, c);
}
TapeTensor Tape::matmul(const TapeTensor& a, const TapeTensor& b) {
    const TapeTensor in[2] = {a, b};
    return record(Op::kMatmul, in);
}
TapeTensor Tape::mul(const TapeTensor& a, const TapeTensor& b) {
    const TapeTensor in[2] = {a, b};
    return record(Op::kMul, in);
}
TapeTensor Tape::relu(const TapeTensor& a) {
    const TapeTensor in[1] = {a};
    return record(Op::kRelu, in);
}
TapeTensor Tape::maximum(const TapeTensor& a, const TapeTensor& b) {
    const TapeTensor in[2] = {a, b};
    return record(Op::kMaximum, in);
}
TapeTensor Tape::exp(const TapeTensor& a) {
    const TapeTensor in[1] = {a};
    return record(Op::kExp, in);
}
TapeTensor Tape::log(const TapeTensor& a) {
    const TapeTensor in[1] = {a};
    return record(Op::kLog, in);
}
TapeTensor Tape::sum(const TapeTensor& a) {
    const TapeTensor in[1] = {a};
    return record(Op::kSum, in);
}
TapeTensor Tape::softmax_cross_entropy(const TapeTensor& logits, std::vector<int> labels) {
    const TapeTensor in[1] = {logits};
    return record(Op::kSoftmaxXent, in, 0.0, std::move(labels));
}

GradientMap Tape::backward(const TapeTensor& output) const {
    ensure_on_tape(output, "backward output");
    if (output.size() != 1)
        throw std::invalid_argument("tape: backward output must be scalar-shaped, got " +
                                    shape_str(output.shape));

    const std::size_t n_nodes = nodes_.size();
    std::vector<std::shared_ptr<std::vector<double>>> grads(n_nodes);
    std::vector<std::size_t> sizes(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) sizes[i] = nodes_[i].values->size();
    // Buffers flagged here alias a child's gradient and must be copied before
    // being accumulated into.
    std::vector<unsigned char> aliased(n_nodes, 0);

    // First contribution to a node gets an uninitialized buffer to overwrite;
    // later contributions accumulate.
    struct GradTarget {
        double* g;
        bool fresh;
    };
    auto grad_target = [&](int id) -> GradTarget {
        auto& slot = grads[static_cast<std::size_t>(id)];
        if (!slot) {
            slot = alloc(sizes[static_cast<std::size_t>(id)]);
            return {slot->data(), true};
        }
        if (aliased[static_cast<std::size_t>(id)]) {
            slot = std::make_shared<std::vector<double>>(*slot);
            aliased[static_cast<std::size_t>(id)] = 0;
        }
        return {slot->data(), false};
    };
    // Identity contribution: alias the child gradient when the slot is empty.
    auto accumulate_identity = [&](int id, const std::shared_ptr<std::vector<double>>& gy) {
        auto& slot = grads[static_cast<std::size_t>(id)];
        if (!slot) {
            slot = gy;
            aliased[static_cast<std::size_t>(id)] = 1;
        } else {
            if (aliased[static_cast<std::size_t>(id)]) {
                slot = std::make_shared<std::vector<double>>(*slot);
                aliased[static_cast<std::size_t>(id)] = 0;
            }
            kern::axpy(1.0, gy->data(), slot->data(), gy->size());
        }
    };

    grads[static_cast<std::size_t>(output.node)] = std::make_shared<std::vector<double>>(1, 1.0);

    auto needs_grad = [&](int id) {
        return id != kNoNode && nodes_[static_cast<std::size_t>(id)].requires_grad;
    };

    for (int id = output.node; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const auto& gy_ptr = grads[static_cast<std::size_t>(id)];
        if (!gy_ptr || !n.requires_grad) continue;
        const std::vector<double>& gy = *gy_ptr;

        switch (n.op) {
            case Op::kConst:
            case Op::kVar:
                break;
            case Op::kAdd: {
                const Node& a = nodes_[static_cast<std::size_t>(n.in0)];
                const Node& b = nodes_[static_cast<std::size_t>(n.in1)];
                auto contribute = [&](int id_in, const Node& in_node) {
                    if (!needs_grad(id_in)) return;
                    if (same_shape(in_node.shape, n.shape)) {
                        accumulate_identity(id_in, gy_ptr);
                    } else {
                        // Row-vector operand: column sums of gy.
                        const GradTarget t = grad_target(id_in);
                        if (t.fresh) std::fill(t.g, t.g + in_node.values->size(), 0.0);
                        kern::colsum_acc(gy.data(), t.g, n.shape[0], n.shape[1]);
                    }
                };
                contribute(n.in0, a);
                contribute(n.in1, b);
                break;
            }
            case Op::kScale: {
                if (!needs_grad(n.in0)) break;
                const GradTarget t = grad_target(n.in0);
                if (t.fresh) kern::scale(gy.data(), n.factor, t.g, gy.size());
                else kern::axpy(n.factor, gy.data(), t.g, gy.size());
                break;
            }
            case Op::kMatmul: {
                const Node& a = nodes_[static_cast<std::size_t>(n.in0)];
                const Node& b = nodes_[static_cast<std::size_t>(n.in1)];
                const MatmulDims d = matmul_dims(a.shape, b.shape);
                if (needs_grad(n.in0)) {
                    // dA (+)= gy * B^T
                    const GradTarget t = grad_target(n.in0);
                    if (t.fresh) kern::matmul_nt(gy.data(), b.values->data(), t.g, d.m, d.n, d.k);
                    else kern::matmul_nt_acc(gy.data(), b.values->data(), t.g, d.m, d.n, d.k);
                }
                if (needs_grad(n.in1)) {
                    // dB (+)= A^T * gy
                    const GradTarget t = grad_target(n.in1);
                    if (t.fresh) kern::matmul_tn(a.values->data(), gy.data(), t.g, d.k, d.m, d.n);
                    else kern::matmul_tn_acc(a.values->data(), gy.data(), t.g, d.k, d.m, d.n);
                }
                break;
            }
            case Op::kMul: {
                const Node& a = nodes_[static_cast<std::size_t>(n.in0)];
                const Node& b = nodes_[static_cast<std::size_t>(n.in1)];
                const bool a_scalar = is_scalar(a.shape) && !is_scalar(n.shape);
                const bool b_scalar = is_scalar(b.shape) && !is_scalar(n.shape);
                if (needs_grad(n.in0)) {
                    const GradTarget t = grad_target(n.in0);
                    if (a_scalar) {
                        double s = 0.0;
                        const double* bv = b.values->data();
                        for (std::size_t i = 0; i < gy.size(); ++i) s += gy[i] * bv[i];
                        if (t.fresh) t.g[0] = s;
                        else t.g[0] += s;
                    } else if (b_scalar) {
                        if (t.fresh) kern::scale(gy.data(), (*b.values)[0], t.g, gy.size());
                        else kern::axpy((*b.values)[0], gy.data(), t.g, gy.size());
                    } else {
                        const double* bv = b.values->data();
                        if (t.fresh) kern::mul(gy.data(), bv, t.g, gy.size());
                        else
                            for (std::size_t i = 0; i < gy.size(); ++i) t.g[i] += gy[i] * bv[i];
                    }
                }
                if (needs_grad(n.in1)) {
                    const GradTarget t = grad_target(n.in1);
                    if (b_scalar) {
                        double s = 0.0;
                        const double* av = a.values->data();
                        for (std::size_t i = 0; i < gy.size(); ++i) s += gy[i] * av[i];
                        if (t.fresh) t.g[0] = s;
                        else t.g[0] += s;
                    } else if (a_scalar) {
                        if (t.fresh) kern::scale(gy.data(), (*a.values)[0], t.g, gy.size());
                        else kern::axpy((*a.values)[0], gy.data(), t.g, gy.size());
                    } else {
                        const double* av = a.values->data();
                        if (t.fresh) kern::mul(gy.data(), av, t.g, gy.size());
                        else
                            for (std::size_t i = 0; i < gy.size(); ++i) t.g[i] += gy[i] * av[i];
                    }
                }
                break;
            }
            case Op::kRelu: {
                if (!needs_grad(n.in0)) break;
                const Node& a = nodes_[static_cast<std::size_t>(n.in0)];
                const GradTarget t = grad_target(n.in0);
                if (t.fresh) kern::relu_bwd(a.values->data(), gy.data(), t.g, gy.size());
                else kern::relu_bwd_acc(a.values->data(), gy.data(), t.g, gy.size());
                break;
            }
            case Op::kMaximum: {
                // Ties send the gradient to the first operand.
                const Node& a = nodes_[static_cast<std::size_t>(n.in0)];
                const Node& b = nodes_[static_cast<std::size_t>(n.in1)];
                const double* av = a.values->data();
                const double* bv = b.values->data();
                if (needs_grad(n.in0)) {
                    const GradTarget t = grad_target(n.in0);
                    for (std::size_t i = 0; i < gy.size(); ++i) {
                        const double v = av[i] >= bv[i] ? gy[i] : 0.0;
                        if (t.fresh) t.g[i] = v;
                        else t.g[i] += v;
                    }
                }
                if (needs_grad(n.in1)) {
                    const GradTarget t = grad_target(n.in1);
                    for (std::size_t i = 0; i < gy.size(); ++i) {
                        const double v = av[i] < bv[i] ? gy[i] : 0.0;
                        if (t.fresh) t.g[i] = v;
                        else t.g[i] += v;
                    }
                }
                break;
            }
            case Op::kExp: {
                if (!needs_grad(n.in0)) break;
                const GradTarget t = grad_target(n.in0);
                const double* out = n.values->data();
                if (t.fresh) kern::mul(gy.data(), out, t.g, gy.size());
                else
                    for (std::size_t i = 0; i < gy.size(); ++i) t.g[i] += gy[i] * out[i];
                break;
            }
            case Op::kLog: {
                if (!needs_grad(n.in0)) break;
                const Node& a = nodes_[static_cast<std::size_t>(n.in0)];
                const GradTarget t = grad_target(n.in0);
                const double* av = a.values->data();
                if (t.fresh)
                    for (std::size_t i = 0; i < gy.size(); ++i) t.g[i] = gy[i] / av[i];
                else
                    for (std::size_t i = 0; i < gy.size(); ++i) t.g[i] += gy[i] / av[i];
                break;
            }
            case Op::kSum: {
                if (!needs_grad(n.in0)) break;
                const GradTarget t = grad_target(n.in0);
                const double s = gy[0];
                const std::size_t len = sizes[static_cast<std::size_t>(n.in0)];
                if (t.fresh)
                    for (std::size_t i = 0; i < len; ++i) t.g[i] = s;
                else
                    for (std::size_t i = 0; i < len; ++i) t.g[i] += s;
                break;
            }
            case Op::kSoftmaxXent: {
                if (!needs_grad(n.in0)) break;
                const std::size_t rows = nodes_[static_cast<std::size_t>(n.in0)].shape[0];
                const std::size_t cols = nodes_[static_cast<std::size_t>(n.in0)].shape[1];
                const GradTarget t = grad_target(n.in0);
                const double s = gy[0] / static_cast<double>(rows);
                const double* p = n.aux->data();
                for (std::size_t i = 0; i < rows; ++i) {
                    double* grow = t.g + i * cols;
                    const double* prow = p + i * cols;
                    if (t.fresh)
                        for (std::size_t j = 0; j < cols; ++j) grow[j] = s * prow[j];
                    else
                        for (std::size_t j = 0; j < cols; ++j) grow[j] += s * prow[j];
                    grow[static_cast<std::size_t>(n.labels[i])] -= s;
                }
                break;
            }
        }
    }

    return GradientMap(std::move(grads), std::move(sizes));
}

bool Tape::replay_matches() const {
    for (const Node& n : nodes_) {
        if (n.op == Op::kConst || n.op == Op::kVar) continue;
        const Node& a = nodes_[static_cast<std::size_t>(n.in0)];
        std::vector<double> out(n.values->size(), 0.0);
        switch (n.op) {
            case Op::kAdd: {
                const Node& b = nodes_[static_cast<std::size_t>(n.in1)];
                if (same_shape(a.shape, b.shape))
                    kern::add(a.values->data(), b.values->data(), out.data(), out.size());
                else if (row_broadcastable(a.shape, b.shape))
                    kern::add_rowvec(a.values->data(), b.values->data(), out.data(), a.shape[0], a.shape[1]);
                else
                    kern::add_rowvec(b.values->data(), a.values->data(), out.data(), b.shape[0], b.shape[1]);
                break;
            }
            case Op::kScale:
                kern::scale(a.values->data(), n.factor, out.data(), out.size());
                break;
            case Op::kMatmul: {
                const Node& b = nodes_[static_cast<std::size_t>(n.in1)];
                const MatmulDims d = matmul_dims(a.shape, b.shape);
                kern::matmul(a.values->data(), b.values->data(), out.data(), d.m, d.k, d.n);
                break;
            }
            case Op::kMul: {
                const Node& b = nodes_[static_cast<std::size_t>(n.in1)];
                if (same_shape(a.shape, b.shape))
                    kern::mul(a.values->data(), b.values->data(), out.data(), out.size());
                else if (is_scalar(a.shape))
                    kern::scale(b.values->data(), (*a.values)[0], out.data(), out.size());
                else
                    kern::scale(a.values->data(), (*b.values)[0], out.data(), out.size());
                break;
            }
            case Op::kRelu:
                kern::relu(a.values->data(), out.data(), out.size());
                break;
            case Op::kMaximum: {
                const Node& b = nodes_[static_cast<std::size_t>(n.in1)];
                kern::maximum(a.values->data(), b.values->data(), out.data(), out.size());
                break;
            }
            case Op::kExp:
                kern::vexp(a.values->data(), out.data(), out.size());
                break;
            case Op::kLog:
                kern::vlog(a.values->data(), out.data(), out.size());
                break;
            case Op::kSum:
                out[0] = kern::vsum(a.values->data(), a.values->size());
                break;
            case Op::kSoftmaxXent: {
                std::vector<double> p(a.values->size());
                kern::softmax_rows(a.values->data(), p.data(), a.shape[0], a.shape[1]);
                out[0] = kern::xent_mean(p.data(), n.labels.data(), a.shape[0], a.shape[1]);
                break;
            }
            default:
                break;
        }
        if (std::memcmp(out.data(), n.values->data(), out.size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

// --- composites ---------------------------------------------------------------

TapeTensor softplus(Tape& tape, const TapeTensor& x) {
    // log(1+exp(x)) = r + log(exp(x-r) + exp(-r)) with r = relu(x); both exp
    // arguments are <= 0, so no overflow.
    TapeTensor r = tape.relu(x);
    TapeTensor a = tape.add(x, tape.scale(r, -1.0));
    TapeTensor s = tape.add(tape.exp(a), tape.exp(tape.scale(r, -1.0)));
    return tape.add(r, tape.log(s));
}

TapeTensor mean_squared_error(Tape& tape, const TapeTensor& a, const TapeTensor& b) {
    TapeTensor d = tape.add(a, tape.scale(b, -1.0));
    TapeTensor sq = tape.mul(d, d);
    return tape.scale(tape.sum(sq), 1.0 / static_cast<double>(numel(a.shape)));
}

// --- finite differences --------------------------------------------------------

double finite_difference_check(const ScalarFn& fn, const TapeTensor& x, double step) {
    std::vector<double> analytic;
    {
        Tape tape;
        TapeTensor xv = tape.variable(x);
        TapeTensor out = fn(tape, xv);
        if (out.size() != 1)
            throw std::invalid_argument("finite_difference_check: fn output is not scalar-shaped");
        if (!std::isfinite(out.item()))
            throw std::runtime_error("finite_difference_check: non-finite function value");
        analytic = tape.backward(out).at(xv);
    }

    auto eval_at = [&](const std::vector<double>& vals) {
        Tape tape;
        TapeTensor xv = tape.variable(TapeTensor(x.shape, vals));
        return fn(tape, xv).item();
    };

    double worst = 0.0;
    std::vector<double> base(*x.values);
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> hi = base, lo = base;
        hi[i] += step;
        lo[i] -= step;
        const double numeric = (eval_at(hi) - eval_at(lo)) / (2.0 * step);
        const double a = analytic[i];
        if (!std::isfinite(numeric) || !std::isfinite(a))
            throw std::runtime_error("finite_difference_check: non-finite value at coordinate " +
                                     std::to_string(i));
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-12});
        worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace purify::ad
