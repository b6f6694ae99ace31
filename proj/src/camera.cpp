// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/camera.hpp"

#include <cmath>

#include "rawsplat/error.hpp"

namespace rawsplat {

void CameraModel::validate() const {
  require(fx > 0.0 && fy > 0.0, ErrorKind::Validation, "focal lengths must be positive");
  require(width > 0 && height > 0, ErrorKind::Validation, "camera has zero extent");
  for (double v : rotation) require(std::isfinite(v), ErrorKind::Validation, "non-finite rotation");
  for (double v : translation) {
    require(std::isfinite(v), ErrorKind::Validation, "non-finite translation");
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += rotation[r * 3 + k] * rotation[c * 3 + k];
      require(std::abs(dot - (r == c ? 1.0 : 0.0)) <= 1e-9, ErrorKind::Validation,
              "camera rotation is not orthonormal");
    }
  }
}

CameraModel CameraModel::look_at(const std::array<double, 3>& eye,
                                 const std::array<double, 3>& target,
                                 const std::array<double, 3>& up, double fx, double fy, int width,
                                 int height) {
  auto sub = [](const auto& a, const auto& b) {
    return std::array<double, 3>{a[0] - b[0], a[1] - b[1], a[2] - b[2]};
  };
  auto cross = [](const auto& a, const auto& b) {
    return std::array<double, 3>{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                                 a[0] * b[1] - a[1] * b[0]};
  };
  auto unit = [](std::array<double, 3> a) {
    const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    require(n > 0.0, ErrorKind::Validation, "degenerate look_at configuration");
    for (double& v : a) v /= n;
    return a;
  };
  // Camera frame: z forward, x right, y down.
  const auto z = unit(sub(target, eye));
  const auto x = unit(cross(z, up));
  const auto y = cross(z, x);

  CameraModel cam;
  cam.rotation = {x[0], x[1], x[2], y[0], y[1], y[2], z[0], z[1], z[2]};
  for (int r = 0; r < 3; ++r) {
    cam.translation[r] = -(cam.rotation[r * 3 + 0] * eye[0] + cam.rotation[r * 3 + 1] * eye[1] +
                           cam.rotation[r * 3 + 2] * eye[2]);
  }
  cam.fx = fx;
  cam.fy = fy;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  return cam;
}

nlohmann::json to_json(const CameraModel& camera) {
  nlohmann::json j;
  j["rotation"] = camera.rotation;
  j["translation"] = camera.translation;
  j["fx"] = camera.fx;
  j["fy"] = camera.fy;
  j["cx"] = camera.cx;
  j["cy"] = camera.cy;
  j["width"] = camera.width;
  j["height"] = camera.height;
  const DistortionCoeffs& d = camera.distortion;
  j["distortion"] = {{"k1", d.k1}, {"k2", d.k2}, {"k3", d.k3},
                     {"k4", d.k4}, {"p1", d.p1}, {"p2", d.p2}};
  return j;
}

CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel cam;
  try {
    cam.rotation = j.at("rotation").get<std::array<double, 9>>();
    cam.translation = j.at("translation").get<std::array<double, 3>>();
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    if (j.contains("distortion")) {
      const auto& d = j["distortion"];
      cam.distortion.k1 = d.value("k1", 0.0);
      cam.distortion.k2 = d.value("k2", 0.0);
      cam.distortion.k3 = d.value("k3", 0.0);
      cam.distortion.k4 = d.value("k4", 0.0);
      cam.distortion.p1 = d.value("p1", 0.0);
      cam.distortion.p2 = d.value("p2", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("camera json: ") + e.what());
  }
  cam.validate();
  return cam;
}

}  // namespace rawsplat
