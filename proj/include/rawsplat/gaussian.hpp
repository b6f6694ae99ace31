// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rawsplat/optim.hpp"

namespace rawsplat {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

inline double sigmoid(double x) noexcept {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) noexcept {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double softplus_inverse(double y) noexcept {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

inline double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

/// One 3D Gaussian in its pre-activation parameterization:
/// scale = exp(log_scale), opacity = sigmoid(opacity_logit),
/// color = softplus(color_raw) (unbounded above for HDR radiance).
struct Gaussian3D {
  std::array<double, 3> mu{0.0, 0.0, 0.0};
  std::array<double, 4> rot{1.0, 0.0, 0.0, 0.0};  // quaternion (w, x, y, z)
  std::array<double, 3> log_scale{0.0, 0.0, 0.0};
  std::vector<double> color_raw{0.0};
  double opacity_logit = 0.0;

  double opacity() const noexcept { return sigmoid(opacity_logit); }
  double color(std::size_t channel) const noexcept { return softplus(color_raw[channel]); }
  std::array<double, 3> scale() const noexcept {
    return {std::exp(log_scale[0]), std::exp(log_scale[1]), std::exp(log_scale[2])};
  }
};

/// Rotation matrix of the normalized quaternion.
Mat3 quat_to_rotation(const std::array<double, 4>& q);

/// R S S^T R^T.
Mat3 covariance3d(const std::array<double, 4>& rot, const std::array<double, 3>& log_scale);

/// Packed parameter offsets within one Gaussian's block.
struct ParamLayout {
  static constexpr int kMu = 0;
  static constexpr int kRot = 3;
  static constexpr int kLogScale = 7;
  static constexpr int kColor = 10;
  static int opacity(int channels) noexcept { return kColor + channels; }
  static int stride(int channels) noexcept { return kColor + channels + 1; }
};

struct GaussianCloud {
  int channels = 1;
  std::vector<Gaussian3D> gaussians;

  // Optimizer moments over pack() order, and densification statistics.
  AdamState adam;
  std::vector<double> screen_grad_accum;
  std::vector<std::int32_t> screen_grad_count;
  std::vector<std::array<double, 3>> position_grad_accum;

  std::size_t size() const noexcept { return gaussians.size(); }
  int stride() const noexcept { return ParamLayout::stride(channels); }

  /// Throws a validation error on non-finite parameters or mismatched statistics.
  void validate() const;

  std::vector<double> pack() const;
  void unpack(std::span<const double> packed);

  /// Sizes moments and statistics to the current Gaussian count (zeroed).
  void reset_optimizer();
  void reset_statistics();
  void renormalize_rotations();

  /// Accumulates per-view screen-space gradient norms and positional gradients.
  void accumulate_statistics(std::span<const double> screen_grad_norm,
                             std::span<const std::uint8_t> visible,
                             std::span<const double> packed_grads);
};

/// Binary container: magic "GCLD0001", u32 header length, JSON header, then
/// little-endian f64 blocks in the order listed in the header.
void save_cloud(const GaussianCloud& cloud, const std::filesystem::path& path,
                bool with_optimizer = false);
GaussianCloud load_cloud(const std::filesystem::path& path);

}  // namespace rawsplat
