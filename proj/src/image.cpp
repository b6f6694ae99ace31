// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rawsplat/error.hpp"

namespace rawsplat {

static_assert(std::endian::native == std::endian::little,
              "RAWF0001 I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::vector<char>& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.insert(buf.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t& offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

void RawImage::validate() const {
  require(width > 0 && height > 0, ErrorKind::Validation, "raw image has zero extent");
  require(data.size() == static_cast<std::size_t>(width) * height, ErrorKind::Validation,
          "raw data length does not match width*height");
  require(std::isfinite(black_level) && std::isfinite(white_level) && white_level > black_level,
          ErrorKind::Validation, "white level must exceed black level");
  for (float v : data) {
    require(std::isfinite(v), ErrorKind::Validation, "non-finite raw sample");
  }
}

void ImagePlane::validate() const {
  require(width >= 0 && height >= 0 &&
              data.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
          ErrorKind::Validation, "image data length does not match width*height");
  for (double v : data) {
    require(std::isfinite(v), ErrorKind::Validation, "non-finite image sample");
  }
}

RawImage load_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  constexpr std::size_t kHeader = 8 + 2 * 4 + 4 * 4;
  require(buf.size() >= 8, ErrorKind::Length, "file too short for magic: " + path.string());
  require(std::memcmp(buf.data(), kRawMagic, 8) == 0, ErrorKind::Format,
          "bad magic in " + path.string());
  require(buf.size() >= kHeader, ErrorKind::Length, "truncated header in " + path.string());

  RawImage raw;
  std::size_t offset = 8;
  raw.width = get<std::uint32_t>(buf, offset);
  raw.height = get<std::uint32_t>(buf, offset);
  raw.black_level = get<float>(buf, offset);
  raw.white_level = get<float>(buf, offset);
  raw.iso = get<float>(buf, offset);
  raw.exposure_s = get<float>(buf, offset);

  const std::size_t count = static_cast<std::size_t>(raw.width) * raw.height;
  require(buf.size() == kHeader + count * sizeof(float), ErrorKind::Length,
          "payload length mismatch in " + path.string());
  raw.data.resize(count);
  std::memcpy(raw.data.data(), buf.data() + kHeader, count * sizeof(float));
  raw.validate();
  return raw;
}

void save_raw(const RawImage& image, const std::filesystem::path& path) {
  image.validate();
  std::vector<char> buf;
  buf.reserve(32 + image.data.size() * sizeof(float));
  buf.insert(buf.end(), kRawMagic, kRawMagic + 8);
  put(buf, image.width);
  put(buf, image.height);
  put(buf, image.black_level);
  put(buf, image.white_level);
  put(buf, image.iso);
  put(buf, image.exposure_s);
  const auto* bytes = reinterpret_cast<const char*>(image.data.data());
  buf.insert(buf.end(), bytes, bytes + image.data.size() * sizeof(float));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

ImagePlane normalize(const RawImage& raw) {
  require(raw.white_level > raw.black_level, ErrorKind::Validation,
          "white level must exceed black level");
  require(raw.data.size() == static_cast<std::size_t>(raw.width) * raw.height,
          ErrorKind::Validation, "raw data length does not match width*height");
  ImagePlane out(static_cast<int>(raw.width), static_cast<int>(raw.height));
  const double black = raw.black_level;
  const double range = static_cast<double>(raw.white_level) - black;
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    out.data[i] = (static_cast<double>(raw.data[i]) - black) / range;
  }
  return out;
}

RawImage denormalize(const ImagePlane& plane, float black_level, float white_level, float iso,
                     float exposure_s) {
  require(white_level > black_level, ErrorKind::Validation, "white level must exceed black level");
  RawImage raw;
  raw.width = static_cast<std::uint32_t>(plane.width);
  raw.height = static_cast<std::uint32_t>(plane.height);
  raw.black_level = black_level;
  raw.white_level = white_level;
  raw.iso = iso;
  raw.exposure_s = exposure_s;
  const double range = static_cast<double>(white_level) - black_level;
  raw.data.resize(plane.data.size());
  for (std::size_t i = 0; i < plane.data.size(); ++i) {
    raw.data[i] = static_cast<float>(plane.data[i] * range + black_level);
  }
  return raw;
}

double psnr(const ImagePlane& a, const ImagePlane& b, double peak) {
  require(a.same_shape(b), ErrorKind::Validation, "psnr: dimension mismatch");
  require(peak > 0.0, ErrorKind::Validation, "psnr: peak must be positive");
  require(a.size() > 0, ErrorKind::Validation, "psnr: empty images");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(a.size());
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr_masked(const ImagePlane& a, const ImagePlane& b, std::span<const std::uint8_t> mask,
                   double peak) {
  require(a.same_shape(b) && mask.size() == a.size(), ErrorKind::Validation,
          "psnr: dimension mismatch");
  require(peak > 0.0, ErrorKind::Validation, "psnr: peak must be positive");
  double sse = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask[i]) continue;
    const double d = a.data[i] - b.data[i];
    sse += d * d;
    ++n;
  }
  require(n > 0, ErrorKind::Validation, "psnr: empty mask");
  if (sse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / (sse / static_cast<double>(n)));
}

ImagePlane tone_map(const ImagePlane& in, double gain) {
  require(gain > 0.0, ErrorKind::Validation, "tone_map: gain must be positive");
  ImagePlane out(in.width, in.height);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = std::clamp(in.data[i] * gain, 0.0, 1.0);
    out.data[i] = std::pow(v, 1.0 / 2.2);
  }
  return out;
}

void write_pgm(const ImagePlane& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image.data[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace rawsplat
