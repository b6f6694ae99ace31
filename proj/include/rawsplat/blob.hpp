// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace rawsplat {

/// Named f64 arrays plus a free-form JSON header, stored as
///   8-byte magic | u32 header length | JSON header | f64 blocks (LE, header order).
/// Used for Gaussian clouds, extractor weights, and training checkpoints.
struct Blob {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<double>>> blocks;

  void add(const std::string& name, std::vector<double> values);
  const std::vector<double>& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write_blob(const Blob& blob, const std::array<char, 8>& magic,
                const std::filesystem::path& path);
Blob read_blob(const std::array<char, 8>& magic, const std::filesystem::path& path);

}  // namespace rawsplat
