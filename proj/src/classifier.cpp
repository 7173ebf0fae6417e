// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace purify {

void Dataset::validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset: empty");
    if (points.size() != labels.size() * static_cast<std::size_t>(dim))
        throw std::invalid_argument("dataset: points/labels size mismatch");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw std::invalid_argument("dataset: label " + std::to_string(labels[i]) +
                                        " at row " + std::to_string(i) + " outside [0," +
                                        std::to_string(num_classes) + ")");
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!std::isfinite(points[i]))
            throw std::invalid_argument("dataset: non-finite coordinate at index " +
                                        std::to_string(i));
}

Dataset generate_2d_dataset(const GmmSpec& spec, std::size_t n, RandomStream& rng) {
    if (n == 0) throw std::invalid_argument("generate_2d_dataset: n must be > 0");
    spec.validate();
    Dataset d;
    d.dim = 2;
    d.num_classes = spec.num_classes();
    d.points.reserve(2 * n);
    d.labels.reserve(n);
    d.source = "gmm";
    d.spec = spec;
    for (std::size_t i = 0; i < n; ++i) {
        int comp = 0;
        const auto p = spec.sample(rng, &comp);
        d.points.push_back(p[0]);
        d.points.push_back(p[1]);
        d.labels.push_back(spec.components[static_cast<std::size_t>(comp)].cls);
    }
    d.validate();
    return d;
}

Dataset load_csv_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("dataset: cannot open " + path);
    Dataset d;
    d.dim = -1;
    d.source = path;
    std::string line;
    std::size_t line_no = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 2)
            throw std::runtime_error("dataset: " + path + ":" + std::to_string(line_no) +
                                     ": need at least one coordinate and a label");
        if (d.dim < 0) d.dim = static_cast<int>(cells.size()) - 1;
        if (static_cast<int>(cells.size()) - 1 != d.dim)
            throw std::runtime_error("dataset: " + path + ":" + std::to_string(line_no) +
                                     ": inconsistent column count");
        try {
            for (int j = 0; j < d.dim; ++j) d.points.push_back(std::stod(cells[j]));
            const int label = std::stoi(cells.back());
            d.labels.push_back(label);
            max_label = std::max(max_label, label);
        } catch (const std::exception&) {
            throw std::runtime_error("dataset: " + path + ":" + std::to_string(line_no) +
                                     ": malformed row");
        }
    }
    if (d.labels.empty()) throw std::runtime_error("dataset: " + path + " has no rows");
    d.num_classes = max_label + 1;
    d.validate();
    return d;
}

void save_csv_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("dataset: cannot write " + path);
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (int j = 0; j < data.dim; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", data.points[i * data.dim + j]);
            out << buf << ',';
        }
        out << data.labels[i] << '\n';
    }
}

MlpClassifier init_classifier(int in_dim, int num_classes, int depth, int width,
                              RandomStream& rng) {
    MlpClassifier m;
    m.in_dim = in_dim;
    m.num_classes = num_classes;
    m.depth = depth;
    m.width = width;
    m.mlp = init_mlp(in_dim, num_classes, depth, width, rng);
    return m;
}

ad::TapeTensor predict(ad::Tape& tape, const MlpClassifier& model, const ad::TapeTensor& x) {
    if (x.shape.size() != 2 || x.shape[1] != static_cast<std::size_t>(model.in_dim))
        throw std::invalid_argument("predict: input shape " + ad::shape_str(x.shape) +
                                    " does not match model input dimension " +
                                    std::to_string(model.in_dim));
    TapedMlp taped = intern_mlp(tape, model.mlp, /*trainable=*/false);
    return mlp_forward(tape, taped, x, Activation::kRelu);
}

std::vector<double> logits_batch(const MlpClassifier& model, const double* x, std::size_t n) {
    return mlp_forward_plain(model.mlp, x, n, Activation::kRelu);
}

int argmax(std::span<const double> logits) {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

int predict_class(const MlpClassifier& model, std::span<const double> x) {
    const std::vector<double> logits = mlp_forward_plain(model.mlp, x.data(), 1, Activation::kRelu);
    return argmax(logits);
}

std::vector<double> train_classifier(const Dataset& data, int depth, int width,
                                     const TrainOptions& opts, RandomStream& rng,
                                     MlpClassifier* model) {
    data.validate();
    if (std::set<int>(data.labels.begin(), data.labels.end()).size() < 2)
        throw std::invalid_argument("train_classifier: need at least 2 classes present");
    if (!model) throw std::invalid_argument("train_classifier: null model");
    *model = init_classifier(data.dim, data.num_classes, depth, width, rng);

    const std::size_t n = data.size();
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(std::max(opts.epochs, 0)));

    const ad::TapeTensor all_x(ad::Shape{n, (std::size_t)data.dim}, data.points);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        double epoch_loss = 0.0;
        if (opts.batch_size <= 0 || static_cast<std::size_t>(opts.batch_size) >= n) {
            ad::Tape tape;
            TapedMlp taped = intern_mlp(tape, model->mlp, /*trainable=*/true);
            ad::TapeTensor logits =
                mlp_forward(tape, taped, tape.constant(all_x), Activation::kRelu);
            ad::TapeTensor loss = tape.softmax_cross_entropy(logits, data.labels);
            epoch_loss = loss.item();
            if (!std::isfinite(epoch_loss))
                throw std::runtime_error("train_classifier: diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch));
            apply_sgd(model->mlp, taped, tape.backward(loss), opts.lr);
        } else {
            // Seeded shuffle, then fixed-size chunks.
            for (std::size_t i = n - 1; i > 0; --i)
                std::swap(order[i], order[rng.index(i + 1)]);
            const std::size_t bs = static_cast<std::size_t>(opts.batch_size);
            double total = 0.0;
            for (std::size_t start = 0; start < n; start += bs) {
                const std::size_t stop = std::min(start + bs, n);
                std::vector<double> xs((stop - start) * data.dim);
                std::vector<int> ys(stop - start);
                for (std::size_t r = start; r < stop; ++r) {
                    for (int j = 0; j < data.dim; ++j)
                        xs[(r - start) * data.dim + j] = data.points[order[r] * data.dim + j];
                    ys[r - start] = data.labels[order[r]];
                }
                ad::Tape tape;
                TapedMlp taped = intern_mlp(tape, model->mlp, /*trainable=*/true);
                ad::TapeTensor xb =
                    tape.constant(ad::TapeTensor({stop - start, (std::size_t)data.dim}, std::move(xs)));
                ad::TapeTensor loss =
                    tape.softmax_cross_entropy(mlp_forward(tape, taped, xb, Activation::kRelu), ys);
                const double v = loss.item();
                if (!std::isfinite(v))
                    throw std::runtime_error(
                        "train_classifier: diverged (non-finite loss) at epoch " +
                        std::to_string(epoch));
                total += v * static_cast<double>(stop - start);
                apply_sgd(model->mlp, taped, tape.backward(loss), opts.lr);
            }
            epoch_loss = total / static_cast<double>(n);
        }
        losses.push_back(epoch_loss);
    }
    return losses;
}

double train_accuracy(const MlpClassifier& model, const Dataset& data) {
    const std::vector<double> logits = logits_batch(model, data.points.data(), data.size());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::span<const double> row(logits.data() + i * model.num_classes,
                                    static_cast<std::size_t>(model.num_classes));
        if (argmax(row) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace purify
