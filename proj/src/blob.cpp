// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/blob.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rawsplat/error.hpp"

namespace rawsplat {

void Blob::add(const std::string& name, std::vector<double> values) {
  blocks.emplace_back(name, std::move(values));
}

const std::vector<double>& Blob::get(const std::string& name) const {
  for (const auto& [key, values] : blocks) {
    if (key == name) return values;
  }
  fail(ErrorKind::Format, "missing block '" + name + "'");
}

bool Blob::has(const std::string& name) const {
  for (const auto& entry : blocks) {
    if (entry.first == name) return true;
  }
  return false;
}

void write_blob(const Blob& blob, const std::array<char, 8>& magic,
                const std::filesystem::path& path) {
  nlohmann::json header = blob.header;
  header["dtype"] = "f64";
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& [name, values] : blob.blocks) {
    layout.push_back({{"name", name}, {"length", values.size()}});
  }
  header["blocks"] = layout;
  const std::string text = header.dump();
  const auto length = static_cast<std::uint32_t>(text.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(magic.data(), 8);
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& entry : blob.blocks) {
    out.write(reinterpret_cast<const char*>(entry.second.data()),
              static_cast<std::streamsize>(entry.second.size() * sizeof(double)));
  }
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

Blob read_blob(const std::array<char, 8>& magic, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(buf.size() >= 12, ErrorKind::Length, "truncated container " + path.string());
  require(std::memcmp(buf.data(), magic.data(), 8) == 0, ErrorKind::Format,
          "bad magic in " + path.string());
  std::uint32_t length = 0;
  std::memcpy(&length, buf.data() + 8, sizeof(length));
  require(buf.size() >= 12 + static_cast<std::size_t>(length), ErrorKind::Length,
          "truncated header in " + path.string());

  Blob blob;
  try {
    blob.header = nlohmann::json::parse(buf.begin() + 12, buf.begin() + 12 + length);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  std::size_t offset = 12 + length;
  for (const auto& entry : blob.header.at("blocks")) {
    const auto n = entry.at("length").get<std::size_t>();
    require(buf.size() >= offset + n * sizeof(double), ErrorKind::Length,
            "truncated block in " + path.string());
    std::vector<double> values(n);
    std::memcpy(values.data(), buf.data() + offset, n * sizeof(double));
    offset += n * sizeof(double);
    blob.add(entry.at("name").get<std::string>(), std::move(values));
  }
  require(offset == buf.size(), ErrorKind::Length, "trailing bytes in " + path.string());
  return blob;
}

}  // namespace rawsplat
