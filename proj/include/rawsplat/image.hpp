// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace rawsplat {

/// Linear single-channel sensor frame in digital numbers (DN). Samples are
/// stored as f32 so that the RAWF0001 round trip is byte-exact.
struct RawImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> data;  // row-major, width * height
  float black_level = 0.0f;
  float white_level = 1.0f;
  float iso = 100.0f;
  float exposure_s = 0.01f;

  std::size_t size() const noexcept { return data.size(); }

  /// Throws a validation error when dimensions, levels, or samples are invalid.
  void validate() const;
};

/// Image in normalized linear units (black level at 0, white level at 1).
/// Values may exceed 1 for HDR content.
struct ImagePlane {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ImagePlane() = default;
  ImagePlane(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::size_t size() const noexcept { return data.size(); }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  bool same_shape(const ImagePlane& other) const noexcept {
    return width == other.width && height == other.height;
  }

  void validate() const;
};

inline constexpr char kRawMagic[8] = {'R', 'A', 'W', 'F', '0', '0', '0', '1'};

RawImage load_raw(const std::filesystem::path& path);
void save_raw(const RawImage& image, const std::filesystem::path& path);

/// (data - black) / (white - black), no clipping.
ImagePlane normalize(const RawImage& raw);

/// Inverse of normalize for the given levels; samples rounded to f32.
RawImage denormalize(const ImagePlane& plane, float black_level, float white_level, float iso,
                     float exposure_s);

/// Returned by psnr when the two images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE). Peak defaults to 1.0 in normalized units.
double psnr(const ImagePlane& a, const ImagePlane& b, double peak = 1.0);

/// Same, restricted to pixels where mask != 0.
double psnr_masked(const ImagePlane& a, const ImagePlane& b, std::span<const std::uint8_t> mask,
                   double peak = 1.0);

/// clip(in * gain, 0, 1)^(1/2.2). Display-only stand-in for an ISP.
ImagePlane tone_map(const ImagePlane& in, double gain);

/// Writes an 8-bit binary PGM (P5); values are clipped to [0, 1] and scaled to 255.
void write_pgm(const ImagePlane& image, const std::filesystem::path& path);

}  // namespace rawsplat
