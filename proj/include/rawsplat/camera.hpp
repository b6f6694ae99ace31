// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include <json.hpp>

namespace rawsplat {

/// Radial (k1..k4) and tangential (p1, p2) coefficients acting on normalized
/// image coordinates: x = (u - cx) / fx, y = (v - cy) / fy.
struct DistortionCoeffs {
  double k1 = 0.0, k2 = 0.0, k3 = 0.0, k4 = 0.0;
  double p1 = 0.0, p2 = 0.0;

  bool is_zero() const noexcept {
    return k1 == 0.0 && k2 == 0.0 && k3 == 0.0 && k4 == 0.0 && p1 == 0.0 && p2 == 0.0;
  }
};

/// Pinhole camera. Pixel (i, j) has its center at continuous coordinate (i, j).
struct CameraModel {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // world-to-camera, row-major
  std::array<double, 3> translation{0, 0, 0};
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  DistortionCoeffs distortion;

  void validate() const;

  /// Camera looking from `eye` towards `target`; +y of the image points along -up.
  static CameraModel look_at(const std::array<double, 3>& eye, const std::array<double, 3>& target,
                             const std::array<double, 3>& up, double fx, double fy, int width,
                             int height);
};

nlohmann::json to_json(const CameraModel& camera);
CameraModel camera_from_json(const nlohmann::json& j);

}  // namespace rawsplat
