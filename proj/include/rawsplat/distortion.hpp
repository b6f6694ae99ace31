// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "rawsplat/camera.hpp"
#include "rawsplat/image.hpp"

namespace rawsplat {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Forward radial-tangential model on normalized coordinates, r^2 = x^2 + y^2:
///   x_d = x (1 + k1 r^2 + k2 r^4 + k3 r^6 + k4 r^8) + 2 p1 x y + p2 (r^2 + 2 x^2)
///   y_d = y (1 + k1 r^2 + k2 r^4 + k3 r^6 + k4 r^8) + p1 (r^2 + 2 y^2) + 2 p2 x y
Point2 distort_point(double x, double y, const DistortionCoeffs& coeffs);

/// Row-major 2x2 Jacobian d(x_d, y_d) / d(x, y).
std::array<double, 4> distortion_jacobian(double x, double y, const DistortionCoeffs& coeffs);

struct UndistortResult {
  Point2 point;
  int iterations = 0;  // residual evaluations, including the converged one
  double residual = 0.0;
};

inline constexpr double kUndistortTol = 1e-10;
inline constexpr int kUndistortMaxIter = 20;

/// Newton-Raphson inversion of distort_point started at (x_d, y_d). Throws
/// ConvergenceError (with the final residual) or a singularity error.
UndistortResult undistort_point(double x_d, double y_d, const DistortionCoeffs& coeffs,
                                double tol = kUndistortTol, int max_iter = kUndistortMaxIter);

enum class MapDirection {
  Forward,  // source = distort(target), the default
  Inverse,  // source = undistort(target), solved per pixel with Newton-Raphson
};

/// Per-pixel source coordinates (continuous pixel units) of a fixed resampling.
struct DistortionMap {
  int width = 0;
  int height = 0;
  std::vector<double> src_x;
  std::vector<double> src_y;
  std::vector<std::uint8_t> mask;

  std::size_t valid_count() const noexcept;
  static DistortionMap identity(int width, int height);
};

/// Built once before training. Mask cleared where the source lies more than
/// 0.5 px outside the frame.
DistortionMap build_distortion_map(const CameraModel& camera,
                                   MapDirection direction = MapDirection::Forward);

/// Bilinear resampling with border clamp; masked pixels are 0.
ImagePlane apply_map(const ImagePlane& image, const DistortionMap& map);

/// Adjoint of apply_map: scatters grad_out through the four bilinear taps.
ImagePlane apply_map_backward(const ImagePlane& grad_out, const DistortionMap& map);

}  // namespace rawsplat
