// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "rawsplat/camera.hpp"
#include "rawsplat/gaussian.hpp"
#include "rawsplat/image.hpp"

namespace rawsplat {

struct RenderOptions {
  double near_plane = 0.01;
  double dilation = 0.3;             // px^2 added to the projected covariance
  double mahalanobis_cutoff = 3.0;   // infinity disables truncation
  double alpha_max = 0.999;
  double transmittance_floor = 1e-4;
  int tile_size = 16;

  static RenderOptions exact() {
    RenderOptions o;
    o.mahalanobis_cutoff = std::numeric_limits<double>::infinity();
    return o;
  }
};

/// Screen-space footprint of one Gaussian.
struct Projection {
  std::array<double, 2> mean2d{};
  std::array<double, 3> cov2d{};  // xx, xy, yy (dilation included)
  double depth = 0.0;
};

/// EWA projection: cov2d = J W Sigma W^T J^T + dilation * I, with J the
/// perspective Jacobian at the camera-space mean. Empty when culled by the
/// near plane.
std::optional<Projection> project(const Gaussian3D& gaussian, const CameraModel& camera,
                                  const RenderOptions& options = {});

/// Row-major 2x3 perspective Jacobian at camera-space point t.
std::array<double, 6> perspective_jacobian(const CameraModel& camera,
                                           const std::array<double, 3>& t_cam);

/// Everything render_backward needs to replay the forward pass.
struct RenderTrace {
  std::uint64_t fingerprint = 0;
  RenderOptions options;
  int width = 0;
  int height = 0;
  int channels = 0;
  int tiles_x = 0;
  int tiles_y = 0;

  struct Splat {
    bool visible = false;
    double depth = 0.0;
    double mean[2]{};
    double conic[3]{};  // inverse covariance: xx, xy, yy
    double opacity = 0.0;
    int bbox[4]{};  // x0, y0, x1, y1 inclusive pixel bounds
  };
  std::vector<Splat> splats;
  std::vector<double> colors;          // activated, size * channels
  std::vector<int> order;              // visible gaussians front to back
  std::vector<std::vector<int>> tile_lists;
  std::vector<int> processed;          // per pixel: entries of its tile list consumed
};

struct RenderResult {
  std::vector<ImagePlane> image;  // one plane per channel
  ImagePlane alpha;               // 1 - final transmittance
  RenderTrace trace;
};

/// Front-to-back alpha compositing of depth-sorted splats over a zero background.
RenderResult render(const GaussianCloud& cloud, const CameraModel& camera,
                    const RenderOptions& options = {});

struct RenderGradients {
  std::vector<double> params;             // pack() layout
  std::vector<double> screen_grad_norm;   // |dL/d mean2d| per gaussian, pixels
  std::vector<std::uint8_t> visible;
};

/// Reverse-mode derivative of render. `dl_dalpha` may be empty. Throws a
/// validation error when the trace does not belong to (cloud, camera).
RenderGradients render_backward(const GaussianCloud& cloud, const CameraModel& camera,
                                const RenderTrace& trace, std::span<const ImagePlane> dl_dimage,
                                const ImagePlane* dl_dalpha = nullptr);

std::uint64_t render_fingerprint(const GaussianCloud& cloud, const CameraModel& camera,
                                 const RenderOptions& options);

}  // namespace rawsplat
