// Copyright (c) 2026 The purify Authors
// SPDX-License-Identifier: Apache-2.0
//
// Immutable run directories: named by config hash + seed, never overwritten;
// every artifact lands in the manifest with a content hash.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace purify {

std::string hex16(std::uint64_t v);
std::uint64_t fnv64_file(const std::filesystem::path& path);

class RunDir {
public:
    /// Creates <parent>/<command>-<hash8>-s<seed>; refuses to reuse an
    /// existing directory.
    static RunDir create(const std::filesystem::path& parent, const std::string& command,
                         std::uint64_t config_hash, std::uint64_t seed);

    const std::filesystem::path& path() const { return dir_; }
    std::filesystem::path file(const std::string& name) const { return dir_ / name; }

    void write_text(const std::string& name, const std::string& content);
    /// Hash and register a file that was written directly (checkpoints).
    void record_file(const std::string& name);
    /// Writes manifest.txt (sorted "hash  name" lines).
    void write_manifest();

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::uint64_t>> artifacts_;
};

}  // namespace purify
