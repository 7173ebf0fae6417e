// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace purify::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline constexpr int kNoNode = -1;

/// A dense 64-bit float array, optionally attached to a tape node.
/// A tensor with node == kNoNode is a constant: it contributes zero gradient.
/// Value buffers are shared, not copied; a buffer must not be mutated while a
/// tape referencing it is still in use.
struct TapeTensor {
    Shape shape;
    std::shared_ptr<std::vector<double>> values;
    int node = kNoNode;

    TapeTensor() = default;
    TapeTensor(Shape s, std::vector<double> v, int node_id = kNoNode)
        : shape(std::move(s)),
          values(std::make_shared<std::vector<double>>(std::move(v))),
          node(node_id) {
        check();
    }
    TapeTensor(Shape s, std::shared_ptr<std::vector<double>> v, int node_id)
        : shape(std::move(s)), values(std::move(v)), node(node_id) {
        check();
    }

    static TapeTensor zeros(Shape s) {
        std::vector<double> v(numel(s), 0.0);
        return TapeTensor(std::move(s), std::move(v));
    }
    static TapeTensor scalar(double v) { return TapeTensor({1}, {v}); }
    static TapeTensor row(std::vector<double> v) {
        Shape s{1, v.size()};
        return TapeTensor(std::move(s), std::move(v));
    }

    std::size_t size() const { return values ? values->size() : 0; }
    bool on_tape() const { return node != kNoNode; }
    double* data() { return values->data(); }
    const double* data() const { return values->data(); }
    double item() const {
        if (size() != 1) throw std::invalid_argument("item(): tensor is not scalar-shaped, shape " + shape_str(shape));
        return (*values)[0];
    }

private:
    void check() const {
        if (!values || values->size() != numel(shape))
            throw std::invalid_argument("tensor: values length " +
                                        std::to_string(values ? values->size() : 0) +
                                        " does not match shape " + shape_str(shape));
        if (shape.size() > 2)
            throw std::invalid_argument("tensor: rank > 2 unsupported, shape " + shape_str(shape));
    }
};

}  // namespace purify::ad
