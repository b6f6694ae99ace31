// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/distortion.hpp"

#include <algorithm>
#include <cmath>

#include "rawsplat/error.hpp"

namespace rawsplat {

namespace {

struct Radial {
  double f;  // 1 + k1 r^2 + ... + k4 r^8
  double g;  // df / d(r^2)
};

Radial radial(double r2, const DistortionCoeffs& c) {
  const double r4 = r2 * r2;
  const double r6 = r4 * r2;
  return {1.0 + c.k1 * r2 + c.k2 * r4 + c.k3 * r6 + c.k4 * r4 * r4,
          c.k1 + 2.0 * c.k2 * r2 + 3.0 * c.k3 * r4 + 4.0 * c.k4 * r6};
}

struct Tap {
  int x0, x1, y0, y1;
  double wx, wy;
};

Tap bilinear_tap(double sx, double sy, int width, int height) {
  const double fx = std::floor(sx);
  const double fy = std::floor(sy);
  Tap t;
  t.wx = sx - fx;
  t.wy = sy - fy;
  const int ix = static_cast<int>(fx);
  const int iy = static_cast<int>(fy);
  t.x0 = std::clamp(ix, 0, width - 1);
  t.x1 = std::clamp(ix + 1, 0, width - 1);
  t.y0 = std::clamp(iy, 0, height - 1);
  t.y1 = std::clamp(iy + 1, 0, height - 1);
  return t;
}

}  // namespace

Point2 distort_point(double x, double y, const DistortionCoeffs& c) {
  const double r2 = x * x + y * y;
  const double f = radial(r2, c).f;
  return {x * f + 2.0 * c.p1 * x * y + c.p2 * (r2 + 2.0 * x * x),
          y * f + c.p1 * (r2 + 2.0 * y * y) + 2.0 * c.p2 * x * y};
}

std::array<double, 4> distortion_jacobian(double x, double y, const DistortionCoeffs& c) {
  const Radial rad = radial(x * x + y * y, c);
  return {rad.f + 2.0 * x * x * rad.g + 2.0 * c.p1 * y + 6.0 * c.p2 * x,
          2.0 * x * y * rad.g + 2.0 * c.p1 * x + 2.0 * c.p2 * y,
          2.0 * x * y * rad.g + 2.0 * c.p1 * x + 2.0 * c.p2 * y,
          rad.f + 2.0 * y * y * rad.g + 6.0 * c.p1 * y + 2.0 * c.p2 * x};
}

UndistortResult undistort_point(double x_d, double y_d, const DistortionCoeffs& coeffs, double tol,
                                int max_iter) {
  require(tol > 0.0, ErrorKind::Validation, "undistort: tol must be positive");
  require(max_iter > 0, ErrorKind::Validation, "undistort: max_iter must be positive");
  double x = x_d;
  double y = y_d;
  double residual = 0.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    const Point2 d = distort_point(x, y, coeffs);
    const double ex = d.x - x_d;
    const double ey = d.y - y_d;
    residual = std::hypot(ex, ey);
    if (residual < tol) return {{x, y}, iter, residual};
    const auto j = distortion_jacobian(x, y, coeffs);
    const double det = j[0] * j[3] - j[1] * j[2];
    if (!(std::abs(det) > 1e-14)) {
      fail(ErrorKind::Singularity, "undistort: singular distortion Jacobian");
    }
    x -= (j[3] * ex - j[1] * ey) / det;
    y -= (-j[2] * ex + j[0] * ey) / det;
    if (!std::isfinite(x) || !std::isfinite(y)) break;
  }
  throw ConvergenceError("undistort: Newton-Raphson did not converge", residual, max_iter);
}

std::size_t DistortionMap::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

DistortionMap DistortionMap::identity(int width, int height) {
  DistortionMap map;
  map.width = width;
  map.height = height;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  map.src_x.resize(n);
  map.src_y.resize(n);
  map.mask.assign(n, 1);
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      map.src_x[static_cast<std::size_t>(j) * width + i] = i;
      map.src_y[static_cast<std::size_t>(j) * width + i] = j;
    }
  }
  return map;
}

DistortionMap build_distortion_map(const CameraModel& camera, MapDirection direction) {
  camera.validate();
  const DistortionCoeffs& coeffs = camera.distortion;
  DistortionMap map;
  map.width = camera.width;
  map.height = camera.height;
  const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
  map.src_x.assign(n, 0.0);
  map.src_y.assign(n, 0.0);
  map.mask.assign(n, 0);

  for (int j = 0; j < camera.height; ++j) {
    for (int i = 0; i < camera.width; ++i) {
      const double xn = (i - camera.cx) / camera.fx;
      const double yn = (j - camera.cy) / camera.fy;
      const auto jac = distortion_jacobian(xn, yn, coeffs);
      require(jac[0] * jac[3] - jac[1] * jac[2] > 0.0, ErrorKind::Validation,
              "distortion model is not injective over the image (Jacobian determinant <= 0)");
      Point2 src;
      if (direction == MapDirection::Forward) {
        src = distort_point(xn, yn, coeffs);
      } else {
        try {
          src = undistort_point(xn, yn, coeffs).point;
        } catch (const Error&) {
          continue;  // no preimage: leave masked
        }
      }
      const double sx = src.x * camera.fx + camera.cx;
      const double sy = src.y * camera.fy + camera.cy;
      const std::size_t idx = static_cast<std::size_t>(j) * camera.width + i;
      if (!std::isfinite(sx) || !std::isfinite(sy)) continue;
      map.src_x[idx] = sx;
      map.src_y[idx] = sy;
      map.mask[idx] = sx >= -0.5 && sx <= camera.width - 0.5 && sy >= -0.5 &&
                      sy <= camera.height - 0.5;
    }
  }
  return map;
}

ImagePlane apply_map(const ImagePlane& image, const DistortionMap& map) {
  require(image.width == map.width && image.height == map.height, ErrorKind::Validation,
          "apply_map: dimension mismatch");
  ImagePlane out(map.width, map.height);
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    if (!map.mask[idx]) continue;
    const Tap t = bilinear_tap(map.src_x[idx], map.src_y[idx], map.width, map.height);
    const double top = image.at(t.x0, t.y0) * (1.0 - t.wx) + image.at(t.x1, t.y0) * t.wx;
    const double bottom = image.at(t.x0, t.y1) * (1.0 - t.wx) + image.at(t.x1, t.y1) * t.wx;
    out.data[idx] = top * (1.0 - t.wy) + bottom * t.wy;
  }
  return out;
}

ImagePlane apply_map_backward(const ImagePlane& grad_out, const DistortionMap& map) {
  require(grad_out.width == map.width && grad_out.height == map.height, ErrorKind::Validation,
          "apply_map_backward: dimension mismatch");
  ImagePlane grad_in(map.width, map.height);
  for (std::size_t idx = 0; idx < grad_out.size(); ++idx) {
    if (!map.mask[idx]) continue;
    const double g = grad_out.data[idx];
    if (g == 0.0) continue;
    const Tap t = bilinear_tap(map.src_x[idx], map.src_y[idx], map.width, map.height);
    grad_in.at(t.x0, t.y0) += g * (1.0 - t.wx) * (1.0 - t.wy);
    grad_in.at(t.x1, t.y0) += g * t.wx * (1.0 - t.wy);
    grad_in.at(t.x0, t.y1) += g * (1.0 - t.wx) * t.wy;
    grad_in.at(t.x1, t.y1) += g * t.wx * t.wy;
  }
  return grad_in;
}

}  // namespace rawsplat
