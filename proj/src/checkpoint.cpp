// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores raw little-endian doubles");

namespace purify {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
    return v;
}

NamedTensor from_tensor(std::string name, const ad::TapeTensor& t) {
    return NamedTensor{std::move(name), t.shape, *t.values};
}

const NamedTensor& find(const std::vector<NamedTensor>& tensors, const std::string& name,
                        const std::string& path) {
    for (const NamedTensor& t : tensors)
        if (t.name == name) return t;
    throw std::runtime_error("checkpoint: " + path + " is missing tensor " + name);
}

std::size_t count_layers(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
    std::size_t n = 0;
    for (const NamedTensor& t : tensors)
        if (t.name.rfind(prefix, 0) == 0 && t.name.find(".weight") != std::string::npos) ++n;
    return n;
}

MlpParams load_mlp(const std::vector<NamedTensor>& tensors, const std::string& prefix,
                   const std::string& path) {
    const std::size_t layers = count_layers(tensors, prefix);
    if (layers == 0) throw std::runtime_error("checkpoint: " + path + " has no " + prefix + " layers");
    MlpParams p;
    for (std::size_t l = 0; l < layers; ++l) {
        const NamedTensor& w = find(tensors, prefix + std::to_string(l) + ".weight", path);
        const NamedTensor& b = find(tensors, prefix + std::to_string(l) + ".bias", path);
        p.weights.emplace_back(w.shape, w.data);
        p.biases.emplace_back(b.shape, b.data);
    }
    return p;
}

std::vector<NamedTensor> dump_mlp(const MlpParams& p, const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        out.push_back(from_tensor(prefix + std::to_string(l) + ".weight", p.weights[l]));
        out.push_back(from_tensor(prefix + std::to_string(l) + ".bias", p.biases[l]));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, header.schedule_hash);
    write_pod(out, header.data_dim);
    write_pod(out, static_cast<std::uint64_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        write_pod(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_pod(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) write_pod(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<CheckpointHeader, std::vector<NamedTensor>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: " + path + " is not a purify checkpoint");
    CheckpointHeader header;
    header.schedule_hash = read_pod<std::uint64_t>(in, path);
    header.data_dim = read_pod<std::uint64_t>(in, path);
    const std::uint64_t count = read_pod<std::uint64_t>(in, path);
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedTensor t;
        const std::uint32_t name_len = read_pod<std::uint32_t>(in, path);
        t.name.resize(name_len);
        in.read(t.name.data(), name_len);
        const std::uint32_t ndim = read_pod<std::uint32_t>(in, path);
        for (std::uint32_t d = 0; d < ndim; ++d)
            t.shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(in, path)));
        t.data.resize(ad::numel(t.shape));
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
        tensors.push_back(std::move(t));
    }
    return {header, std::move(tensors)};
}

void save_classifier(const std::string& path, const MlpClassifier& model) {
    CheckpointHeader header;
    header.schedule_hash = 0;
    header.data_dim = static_cast<std::uint64_t>(model.in_dim);
    save_checkpoint(path, header, dump_mlp(model.mlp, "classifier.layers."));
}

MlpClassifier load_classifier(const std::string& path) {
    auto [header, tensors] = load_checkpoint(path);
    MlpClassifier m;
    m.mlp = load_mlp(tensors, "classifier.layers.", path);
    m.in_dim = static_cast<int>(m.mlp.weights.front().shape[0]);
    m.num_classes = static_cast<int>(m.mlp.weights.back().shape[1]);
    m.depth = static_cast<int>(m.mlp.weights.size()) - 1;
    m.width = m.depth > 0 ? static_cast<int>(m.mlp.weights.front().shape[1]) : 0;
    if (header.data_dim != static_cast<std::uint64_t>(m.in_dim))
        throw std::runtime_error("checkpoint: " + path + " header data_dim mismatch");
    return m;
}

void save_denoiser(const std::string& path, const DenoiserMlp& model) {
    CheckpointHeader header;
    header.schedule_hash = model.schedule_hash;
    header.data_dim = static_cast<std::uint64_t>(model.data_dim);
    std::vector<NamedTensor> tensors = dump_mlp(model.mlp, "denoiser.layers.");
    tensors.push_back(from_tensor("denoiser.embed", model.embed));
    save_checkpoint(path, header, tensors);
}

DenoiserMlp load_denoiser(const std::string& path) {
    auto [header, tensors] = load_checkpoint(path);
    DenoiserMlp m;
    m.mlp = load_mlp(tensors, "denoiser.layers.", path);
    const NamedTensor& embed = find(tensors, "denoiser.embed", path);
    m.embed = ad::TapeTensor(embed.shape, embed.data);
    m.data_dim = static_cast<int>(header.data_dim);
    m.schedule_hash = header.schedule_hash;
    m.T = static_cast<int>(embed.shape[0]) - 1;
    m.embed_dim = static_cast<int>(embed.shape[1]);
    m.depth = static_cast<int>(m.mlp.weights.size()) - 1;
    m.width = m.depth > 0 ? static_cast<int>(m.mlp.weights.front().shape[1]) : 0;
    if (static_cast<int>(m.mlp.weights.front().shape[0]) != m.data_dim + m.embed_dim)
        throw std::runtime_error("checkpoint: " + path + " layer/embedding dimensions disagree");
    return m;
}

}  // namespace purify
