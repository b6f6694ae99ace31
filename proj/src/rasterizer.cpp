// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/rasterizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "rawsplat/error.hpp"
#include "rawsplat/rng.hpp"

namespace rawsplat {

namespace {

using Mat2 = Eigen::Matrix2d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

Mat3 world_to_camera(const CameraModel& camera) {
  Mat3 w;
  w << camera.rotation[0], camera.rotation[1], camera.rotation[2], camera.rotation[3],
      camera.rotation[4], camera.rotation[5], camera.rotation[6], camera.rotation[7],
      camera.rotation[8];
  return w;
}

struct ProjectionDetail {
  Vec3 t;
  Mat23 jac;
  Mat3 view_cov;  // W Sigma W^T
  Mat2 cov;
  Mat2 conic;
};

ProjectionDetail project_detail(const Gaussian3D& g, const CameraModel& camera, const Mat3& w,
                                const RenderOptions& options) {
  ProjectionDetail d;
  const Vec3 mu(g.mu[0], g.mu[1], g.mu[2]);
  d.t = w * mu + Vec3(camera.translation[0], camera.translation[1], camera.translation[2]);
  const double tz = d.t.z();
  d.jac << camera.fx / tz, 0.0, -camera.fx * d.t.x() / (tz * tz), 0.0, camera.fy / tz,
      -camera.fy * d.t.y() / (tz * tz);
  d.view_cov = w * covariance3d(g.rot, g.log_scale) * w.transpose();
  d.cov = d.jac * d.view_cov * d.jac.transpose();
  d.cov(0, 0) += options.dilation;
  d.cov(1, 1) += options.dilation;
  d.cov(0, 1) = d.cov(1, 0) = 0.5 * (d.cov(0, 1) + d.cov(1, 0));
  const double det = d.cov(0, 0) * d.cov(1, 1) - d.cov(0, 1) * d.cov(1, 0);
  d.conic << d.cov(1, 1) / det, -d.cov(0, 1) / det, -d.cov(1, 0) / det, d.cov(0, 0) / det;
  return d;
}

std::uint64_t hash_double(std::uint64_t h, double v) {
  return mix64(h ^ std::bit_cast<std::uint64_t>(v));
}

}  // namespace

std::array<double, 6> perspective_jacobian(const CameraModel& camera,
                                           const std::array<double, 3>& t) {
  const double tz = t[2];
  return {camera.fx / tz, 0.0, -camera.fx * t[0] / (tz * tz),
          0.0, camera.fy / tz, -camera.fy * t[1] / (tz * tz)};
}

std::optional<Projection> project(const Gaussian3D& gaussian, const CameraModel& camera,
                                  const RenderOptions& options) {
  const Mat3 w = world_to_camera(camera);
  const Vec3 mu(gaussian.mu[0], gaussian.mu[1], gaussian.mu[2]);
  const Vec3 t = w * mu + Vec3(camera.translation[0], camera.translation[1], camera.translation[2]);
  if (t.z() <= options.near_plane) return std::nullopt;
  const ProjectionDetail d = project_detail(gaussian, camera, w, options);
  Projection p;
  p.mean2d = {camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy};
  p.cov2d = {d.cov(0, 0), d.cov(0, 1), d.cov(1, 1)};
  p.depth = t.z();
  return p;
}

std::uint64_t render_fingerprint(const GaussianCloud& cloud, const CameraModel& camera,
                                 const RenderOptions& options) {
  std::uint64_t h = mix64(cloud.size() * 31 + static_cast<std::uint64_t>(cloud.channels));
  for (const Gaussian3D& g : cloud.gaussians) {
    for (double v : g.mu) h = hash_double(h, v);
    for (double v : g.rot) h = hash_double(h, v);
    for (double v : g.log_scale) h = hash_double(h, v);
    for (double v : g.color_raw) h = hash_double(h, v);
    h = hash_double(h, g.opacity_logit);
  }
  for (double v : camera.rotation) h = hash_double(h, v);
  for (double v : camera.translation) h = hash_double(h, v);
  for (double v : {camera.fx, camera.fy, camera.cx, camera.cy}) h = hash_double(h, v);
  h = mix64(h ^ (static_cast<std::uint64_t>(camera.width) << 32 |
                 static_cast<std::uint64_t>(camera.height)));
  for (double v : {options.near_plane, options.dilation, options.mahalanobis_cutoff,
                   options.alpha_max, options.transmittance_floor}) {
    h = hash_double(h, v);
  }
  return mix64(h ^ static_cast<std::uint64_t>(options.tile_size));
}

RenderResult render(const GaussianCloud& cloud, const CameraModel& camera,
                    const RenderOptions& options) {
  cloud.validate();
  camera.validate();
  require(options.tile_size > 0, ErrorKind::Validation, "tile size must be positive");
  const int width = camera.width;
  const int height = camera.height;
  const int channels = cloud.channels;
  const std::size_t n = cloud.size();

  RenderResult result;
  RenderTrace& trace = result.trace;
  trace.fingerprint = render_fingerprint(cloud, camera, options);
  trace.options = options;
  trace.width = width;
  trace.height = height;
  trace.channels = channels;
  trace.tiles_x = (width + options.tile_size - 1) / options.tile_size;
  trace.tiles_y = (height + options.tile_size - 1) / options.tile_size;
  trace.splats.assign(n, {});
  trace.colors.assign(n * channels, 0.0);

  const Mat3 w = world_to_camera(camera);
  const bool truncate = std::isfinite(options.mahalanobis_cutoff);
  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian3D& g = cloud.gaussians[i];
    RenderTrace::Splat& s = trace.splats[i];
    const Vec3 mu(g.mu[0], g.mu[1], g.mu[2]);
    const double tz = w.row(2).dot(mu) + camera.translation[2];
    if (tz <= options.near_plane) continue;
    const ProjectionDetail d = project_detail(g, camera, w, options);
    s.depth = tz;
    s.mean[0] = camera.fx * d.t.x() / tz + camera.cx;
    s.mean[1] = camera.fy * d.t.y() / tz + camera.cy;
    s.conic[0] = d.conic(0, 0);
    s.conic[1] = d.conic(0, 1);
    s.conic[2] = d.conic(1, 1);
    s.opacity = g.opacity();
    for (int c = 0; c < channels; ++c) trace.colors[i * channels + c] = g.color(c);
    if (truncate) {
      const double mid = 0.5 * (d.cov(0, 0) + d.cov(1, 1));
      const double det = d.cov(0, 0) * d.cov(1, 1) - d.cov(0, 1) * d.cov(0, 1);
      const double lambda = mid + std::sqrt(std::max(mid * mid - det, 0.0));
      const double radius = options.mahalanobis_cutoff * std::sqrt(lambda);
      if (!std::isfinite(s.mean[0]) || !std::isfinite(s.mean[1])) continue;
      const double x0 = std::ceil(s.mean[0] - radius);
      const double x1 = std::floor(s.mean[0] + radius);
      const double y0 = std::ceil(s.mean[1] - radius);
      const double y1 = std::floor(s.mean[1] + radius);
      if (x1 < 0 || y1 < 0 || x0 > width - 1 || y0 > height - 1) continue;
      s.bbox[0] = static_cast<int>(std::max(x0, 0.0));
      s.bbox[1] = static_cast<int>(std::max(y0, 0.0));
      s.bbox[2] = static_cast<int>(std::min(x1, width - 1.0));
      s.bbox[3] = static_cast<int>(std::min(y1, height - 1.0));
    } else {
      s.bbox[0] = 0;
      s.bbox[1] = 0;
      s.bbox[2] = width - 1;
      s.bbox[3] = height - 1;
    }
    s.visible = true;
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (trace.splats[i].visible) trace.order.push_back(static_cast<int>(i));
  }
  std::stable_sort(trace.order.begin(), trace.order.end(), [&](int a, int b) {
    return trace.splats[a].depth < trace.splats[b].depth;
  });

  const int ts = options.tile_size;
  trace.tile_lists.assign(static_cast<std::size_t>(trace.tiles_x) * trace.tiles_y, {});
  for (int id : trace.order) {
    const auto& s = trace.splats[id];
    for (int ty = s.bbox[1] / ts; ty <= s.bbox[3] / ts; ++ty) {
      for (int tx = s.bbox[0] / ts; tx <= s.bbox[2] / ts; ++tx) {
        trace.tile_lists[static_cast<std::size_t>(ty) * trace.tiles_x + tx].push_back(id);
      }
    }
  }

  result.image.assign(channels, ImagePlane(width, height));
  result.alpha = ImagePlane(width, height);
  trace.processed.assign(static_cast<std::size_t>(width) * height, 0);
  const double cutoff2 = options.mahalanobis_cutoff * options.mahalanobis_cutoff;
  std::vector<double> accum(channels);

  for (int ty = 0; ty < trace.tiles_y; ++ty) {
    for (int tx = 0; tx < trace.tiles_x; ++tx) {
      const auto& list = trace.tile_lists[static_cast<std::size_t>(ty) * trace.tiles_x + tx];
      for (int py = ty * ts; py < std::min((ty + 1) * ts, height); ++py) {
        for (int px = tx * ts; px < std::min((tx + 1) * ts, width); ++px) {
          double transmittance = 1.0;
          std::fill(accum.begin(), accum.end(), 0.0);
          int k = 0;
          for (; k < static_cast<int>(list.size()); ++k) {
            const int id = list[k];
            const auto& s = trace.splats[id];
            const double dx = px - s.mean[0];
            const double dy = py - s.mean[1];
            const double q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy +
                             s.conic[2] * dy * dy;
            if (q > cutoff2) continue;
            const double alpha = std::min(s.opacity * std::exp(-0.5 * q), options.alpha_max);
            const double next = transmittance * (1.0 - alpha);
            if (next < options.transmittance_floor) break;
            const double weight = alpha * transmittance;
            for (int c = 0; c < channels; ++c) accum[c] += trace.colors[id * channels + c] * weight;
            transmittance = next;
          }
          const std::size_t pix = static_cast<std::size_t>(py) * width + px;
          trace.processed[pix] = k;
          for (int c = 0; c < channels; ++c) result.image[c].data[pix] = accum[c];
          result.alpha.data[pix] = 1.0 - transmittance;
        }
      }
    }
  }
  return result;
}

RenderGradients render_backward(const GaussianCloud& cloud, const CameraModel& camera,
                                const RenderTrace& trace, std::span<const ImagePlane> dl_dimage,
                                const ImagePlane* dl_dalpha) {
  require(trace.fingerprint == render_fingerprint(cloud, camera, trace.options),
          ErrorKind::Validation, "render trace is stale for this cloud/camera");
  const int width = trace.width;
  const int height = trace.height;
  const int channels = trace.channels;
  require(static_cast<int>(dl_dimage.size()) == channels, ErrorKind::Validation,
          "gradient channel count mismatch");
  for (const ImagePlane& g : dl_dimage) {
    require(g.width == width && g.height == height, ErrorKind::Validation,
            "image gradient has wrong dimensions");
  }
  if (dl_dalpha) {
    require(dl_dalpha->width == width && dl_dalpha->height == height, ErrorKind::Validation,
            "alpha gradient has wrong dimensions");
  }

  const std::size_t n = cloud.size();
  // Screen-space accumulators: mean(2), conic as a full symmetric matrix (xx, xy, yy), opacity.
  std::vector<std::array<double, 6>> screen(n, {0, 0, 0, 0, 0, 0});
  std::vector<double> color_grad(n * channels, 0.0);

  const double cutoff2 = trace.options.mahalanobis_cutoff * trace.options.mahalanobis_cutoff;
  const int ts = trace.options.tile_size;

  struct Contribution {
    int id;
    double alpha;
    double gauss;
    double dx, dy;
    double transmittance;
    bool clamped;
  };
  std::vector<Contribution> contribs;
  std::vector<double> acc_color(channels);

  for (int ty = 0; ty < trace.tiles_y; ++ty) {
    for (int tx = 0; tx < trace.tiles_x; ++tx) {
      const auto& list = trace.tile_lists[static_cast<std::size_t>(ty) * trace.tiles_x + tx];
      for (int py = ty * ts; py < std::min((ty + 1) * ts, height); ++py) {
        for (int px = tx * ts; px < std::min((tx + 1) * ts, width); ++px) {
          const std::size_t pix = static_cast<std::size_t>(py) * width + px;
          const double ga = dl_dalpha ? dl_dalpha->data[pix] : 0.0;
          bool any = ga != 0.0;
          for (int c = 0; c < channels; ++c) any = any || dl_dimage[c].data[pix] != 0.0;
          if (!any) continue;

          contribs.clear();
          double transmittance = 1.0;
          for (int k = 0; k < trace.processed[pix]; ++k) {
            const int id = list[k];
            const auto& s = trace.splats[id];
            const double dx = px - s.mean[0];
            const double dy = py - s.mean[1];
            const double q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy +
                             s.conic[2] * dy * dy;
            if (q > cutoff2) continue;
            const double gauss = std::exp(-0.5 * q);
            const double raw_alpha = s.opacity * gauss;
            const bool clamped = raw_alpha > trace.options.alpha_max;
            const double alpha = clamped ? trace.options.alpha_max : raw_alpha;
            contribs.push_back({id, alpha, gauss, dx, dy, transmittance, clamped});
            transmittance *= 1.0 - alpha;
          }

          std::fill(acc_color.begin(), acc_color.end(), 0.0);
          double acc_alpha = 0.0;
          for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
            const Contribution& cb = *it;
            double d_alpha = ga * cb.transmittance * (1.0 - acc_alpha);
            for (int c = 0; c < channels; ++c) {
              const double gc = dl_dimage[c].data[pix];
              const double col = trace.colors[cb.id * channels + c];
              d_alpha += gc * cb.transmittance * (col - acc_color[c]);
              color_grad[cb.id * channels + c] += gc * cb.alpha * cb.transmittance;
              acc_color[c] = col * cb.alpha + (1.0 - cb.alpha) * acc_color[c];
            }
            acc_alpha = cb.alpha + (1.0 - cb.alpha) * acc_alpha;
            if (cb.clamped) continue;

            const auto& s = trace.splats[cb.id];
            auto& acc = screen[cb.id];
            acc[5] += d_alpha * cb.gauss;
            const double d_q = -0.5 * cb.alpha * d_alpha;
            // q = d^T C d with d = p - mean.
            acc[0] += -2.0 * d_q * (s.conic[0] * cb.dx + s.conic[1] * cb.dy);
            acc[1] += -2.0 * d_q * (s.conic[1] * cb.dx + s.conic[2] * cb.dy);
            acc[2] += d_q * cb.dx * cb.dx;
            acc[3] += d_q * cb.dx * cb.dy;
            acc[4] += d_q * cb.dy * cb.dy;
          }
        }
      }
    }
  }

  RenderGradients out;
  const int stride = cloud.stride();
  out.params.assign(n * static_cast<std::size_t>(stride), 0.0);
  out.screen_grad_norm.assign(n, 0.0);
  out.visible.assign(n, 0);
  const Mat3 w = world_to_camera(camera);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = trace.splats[i];
    if (!s.visible) continue;
    out.visible[i] = 1;
    const Gaussian3D& g = cloud.gaussians[i];
    double* gp = out.params.data() + i * stride;
    const auto& acc = screen[i];

    for (int c = 0; c < channels; ++c) {
      gp[ParamLayout::kColor + c] = color_grad[i * channels + c] * sigmoid(g.color_raw[c]);
    }
    const double o = s.opacity;
    gp[ParamLayout::opacity(channels)] = acc[5] * o * (1.0 - o);
    out.screen_grad_norm[i] = std::hypot(acc[0], acc[1]);

    const ProjectionDetail d = project_detail(g, camera, w, trace.options);
    const double tx = d.t.x(), ty = d.t.y(), tz = d.t.z();
    const double fx = camera.fx, fy = camera.fy;

    Mat2 g_conic;
    g_conic << acc[2], acc[3], acc[3], acc[4];
    const Mat2 g_cov = -d.conic * g_conic * d.conic;
    const Mat23 g_jac = 2.0 * g_cov * d.jac * d.view_cov;
    const Mat3 g_view = d.jac.transpose() * g_cov * d.jac;
    Mat3 g_sigma = w.transpose() * g_view * w;
    g_sigma = 0.5 * (g_sigma + g_sigma.transpose()).eval();

    Vec3 g_t(acc[0] * fx / tz, acc[1] * fy / tz,
             -acc[0] * fx * tx / (tz * tz) - acc[1] * fy * ty / (tz * tz));
    g_t.z() += g_jac(0, 0) * (-fx / (tz * tz));
    g_t.x() += g_jac(0, 2) * (-fx / (tz * tz));
    g_t.z() += g_jac(0, 2) * (2.0 * fx * tx / (tz * tz * tz));
    g_t.z() += g_jac(1, 1) * (-fy / (tz * tz));
    g_t.y() += g_jac(1, 2) * (-fy / (tz * tz));
    g_t.z() += g_jac(1, 2) * (2.0 * fy * ty / (tz * tz * tz));
    const Vec3 g_mu = w.transpose() * g_t;
    for (int k = 0; k < 3; ++k) gp[ParamLayout::kMu + k] = g_mu[k];

    const Mat3 r = quat_to_rotation(g.rot);
    const Vec3 sc(std::exp(g.log_scale[0]), std::exp(g.log_scale[1]), std::exp(g.log_scale[2]));
    const Mat3 m = r * sc.asDiagonal();
    const Mat3 g_m = 2.0 * g_sigma * m;
    for (int j = 0; j < 3; ++j) {
      double g_s = 0.0;
      for (int row = 0; row < 3; ++row) g_s += g_m(row, j) * r(row, j);
      gp[ParamLayout::kLogScale + j] = g_s * sc[j];
    }
    const Mat3 g_r = g_m * sc.asDiagonal();

    const double qn = std::sqrt(g.rot[0] * g.rot[0] + g.rot[1] * g.rot[1] + g.rot[2] * g.rot[2] +
                                g.rot[3] * g.rot[3]);
    const double qw = g.rot[0] / qn, qx = g.rot[1] / qn, qy = g.rot[2] / qn, qz = g.rot[3] / qn;
    const double gw = 2.0 * (-qz * g_r(0, 1) + qy * g_r(0, 2) + qz * g_r(1, 0) - qx * g_r(1, 2) -
                             qy * g_r(2, 0) + qx * g_r(2, 1));
    const double gx = 2.0 * (qy * g_r(0, 1) + qz * g_r(0, 2) + qy * g_r(1, 0) -
                             2.0 * qx * g_r(1, 1) - qw * g_r(1, 2) + qz * g_r(2, 0) +
                             qw * g_r(2, 1) - 2.0 * qx * g_r(2, 2));
    const double gy = 2.0 * (-2.0 * qy * g_r(0, 0) + qx * g_r(0, 1) + qw * g_r(0, 2) +
                             qx * g_r(1, 0) + qz * g_r(1, 2) - qw * g_r(2, 0) + qz * g_r(2, 1) -
                             2.0 * qy * g_r(2, 2));
    const double gz = 2.0 * (-2.0 * qz * g_r(0, 0) - qw * g_r(0, 1) + qx * g_r(0, 2) +
                             qw * g_r(1, 0) - 2.0 * qz * g_r(1, 1) + qy * g_r(1, 2) +
                             qx * g_r(2, 0) + qy * g_r(2, 1));
    const double dot = qw * gw + qx * gx + qy * gy + qz * gz;
    gp[ParamLayout::kRot + 0] = (gw - qw * dot) / qn;
    gp[ParamLayout::kRot + 1] = (gx - qx * dot) / qn;
    gp[ParamLayout::kRot + 2] = (gy - qy * dot) / qn;
    gp[ParamLayout::kRot + 3] = (gz - qz * dot) / qn;
  }
  return out;
}

}  // namespace rawsplat
