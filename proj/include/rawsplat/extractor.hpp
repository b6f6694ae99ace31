// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rawsplat/image.hpp"
#include "rawsplat/optim.hpp"

namespace rawsplat {

/// 3x3 convolution, weights laid out [out][in][ky][kx].
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }
};

/// Activations kept by forward() for backward().
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ExtractorCache {
  std::uint64_t fingerprint = 0;
  int width = 0;
  int height = 0;
  std::vector<RowMatrix> columns;  // im2col input of each layer
  std::vector<RowMatrix> outputs;  // post-activation output of each layer
};

struct ExtractorGradients {
  std::vector<double> params;  // pack() layout
  ImagePlane input;
};

/// conv(1->16) ReLU conv(16->16) ReLU conv(16->16) ReLU conv(16->1), reflection
/// padding, He-normal init with a zero final layer.
class ExtractorNet {
 public:
  static constexpr int kWidth = 16;
  static constexpr int kLayers = 4;

  ExtractorNet();
  static ExtractorNet create(std::uint64_t seed);

  std::array<ConvLayer, kLayers> layers;
  AdamState adam;
  LrSchedule schedule;

  std::size_t parameter_count() const noexcept;
  std::vector<double> pack() const;
  void unpack(std::span<const double> params);
  std::uint64_t fingerprint() const;

  /// Input must be at least 2x2. `cache` may be null.
  ImagePlane forward(const ImagePlane& input, ExtractorCache* cache = nullptr) const;

  /// Throws a validation error when the cache was produced by different weights.
  ExtractorGradients backward(const ExtractorCache& cache, const ImagePlane& grad_out) const;

  /// One Adam step at the scheduled learning rate.
  void step(std::span<const double> grads);
};

/// n_hat = F(raw - n_fp) + n_fp.
ImagePlane extract(const ImagePlane& raw, const ImagePlane& n_fp, const ExtractorNet& net,
                   ExtractorCache* cache = nullptr);

/// Magic "XNET0001", JSON header with layer shapes, f64 blocks.
void save_extractor(const ExtractorNet& net, const std::filesystem::path& path,
                    bool with_optimizer = false);
ExtractorNet load_extractor(const std::filesystem::path& path);

}  // namespace rawsplat
