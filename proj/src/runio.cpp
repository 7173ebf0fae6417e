// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0

#include "purify/runio.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace purify {

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t fnv64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

RunDir RunDir::create(const std::filesystem::path& parent, const std::string& command,
                      std::uint64_t config_hash, std::uint64_t seed) {
    RunDir run;
    run.dir_ = parent / (command + "-" + hex16(config_hash).substr(0, 8) + "-s" +
                         std::to_string(seed));
    if (std::filesystem::exists(run.dir_))
        throw std::runtime_error("run directory already exists (runs are immutable): " +
                                 run.dir_.string());
    std::filesystem::create_directories(run.dir_);
    return run;
}

void RunDir::write_text(const std::string& name, const std::string& content) {
    std::ofstream out(file(name), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file(name).string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    artifacts_.emplace_back(name, fnv64_file(file(name)));
}

void RunDir::record_file(const std::string& name) {
    artifacts_.emplace_back(name, fnv64_file(file(name)));
}

void RunDir::write_manifest() {
    std::sort(artifacts_.begin(), artifacts_.end());
    std::string out;
    for (const auto& [name, hash] : artifacts_) out += hex16(hash) + "  " + name + "\n";
    std::ofstream f(file("manifest.txt"), std::ios::binary);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace purify
