// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/gaussian.hpp"

#include "rawsplat/blob.hpp"
#include "rawsplat/error.hpp"

namespace rawsplat {

namespace {
constexpr std::array<char, 8> kCloudMagic{'G', 'C', 'L', 'D', '0', '0', '0', '1'};
}

Mat3 quat_to_rotation(const std::array<double, 4>& q) {
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Mat3 covariance3d(const std::array<double, 4>& rot, const std::array<double, 3>& log_scale) {
  const Mat3 r = quat_to_rotation(rot);
  const Vec3 s(std::exp(log_scale[0]), std::exp(log_scale[1]), std::exp(log_scale[2]));
  const Mat3 m = r * s.asDiagonal();
  return m * m.transpose();
}

void GaussianCloud::validate() const {
  require(channels >= 1, ErrorKind::Validation, "cloud needs at least one color channel");
  for (const Gaussian3D& g : gaussians) {
    require(g.color_raw.size() == static_cast<std::size_t>(channels), ErrorKind::Validation,
            "gaussian color has wrong channel count");
    bool finite = std::isfinite(g.opacity_logit);
    for (double v : g.mu) finite = finite && std::isfinite(v);
    for (double v : g.rot) finite = finite && std::isfinite(v);
    for (double v : g.log_scale) finite = finite && std::isfinite(v);
    for (double v : g.color_raw) finite = finite && std::isfinite(v);
    require(finite, ErrorKind::Validation, "non-finite gaussian parameter");
    const double qn = g.rot[0] * g.rot[0] + g.rot[1] * g.rot[1] + g.rot[2] * g.rot[2] +
                      g.rot[3] * g.rot[3];
    require(qn > 0.0, ErrorKind::Validation, "zero quaternion");
  }
  if (!screen_grad_accum.empty()) {
    require(screen_grad_accum.size() == size() && screen_grad_count.size() == size() &&
                position_grad_accum.size() == size(),
            ErrorKind::Validation, "statistics length does not match gaussian count");
  }
}

std::vector<double> GaussianCloud::pack() const {
  const int s = stride();
  std::vector<double> out(size() * static_cast<std::size_t>(s));
  for (std::size_t i = 0; i < size(); ++i) {
    const Gaussian3D& g = gaussians[i];
    double* p = out.data() + i * s;
    for (int k = 0; k < 3; ++k) p[ParamLayout::kMu + k] = g.mu[k];
    for (int k = 0; k < 4; ++k) p[ParamLayout::kRot + k] = g.rot[k];
    for (int k = 0; k < 3; ++k) p[ParamLayout::kLogScale + k] = g.log_scale[k];
    for (int c = 0; c < channels; ++c) p[ParamLayout::kColor + c] = g.color_raw[c];
    p[ParamLayout::opacity(channels)] = g.opacity_logit;
  }
  return out;
}

void GaussianCloud::unpack(std::span<const double> packed) {
  const int s = stride();
  require(packed.size() % s == 0, ErrorKind::Validation, "packed length not a multiple of stride");
  gaussians.resize(packed.size() / s);
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    Gaussian3D& g = gaussians[i];
    const double* p = packed.data() + i * s;
    for (int k = 0; k < 3; ++k) g.mu[k] = p[ParamLayout::kMu + k];
    for (int k = 0; k < 4; ++k) g.rot[k] = p[ParamLayout::kRot + k];
    for (int k = 0; k < 3; ++k) g.log_scale[k] = p[ParamLayout::kLogScale + k];
    g.color_raw.assign(p + ParamLayout::kColor, p + ParamLayout::kColor + channels);
    g.opacity_logit = p[ParamLayout::opacity(channels)];
  }
}

void GaussianCloud::reset_optimizer() {
  adam.resize(size() * static_cast<std::size_t>(stride()));
  adam.step = 0;
  reset_statistics();
}

void GaussianCloud::reset_statistics() {
  screen_grad_accum.assign(size(), 0.0);
  screen_grad_count.assign(size(), 0);
  position_grad_accum.assign(size(), {0.0, 0.0, 0.0});
}

void GaussianCloud::renormalize_rotations() {
  for (Gaussian3D& g : gaussians) {
    const double n = std::sqrt(g.rot[0] * g.rot[0] + g.rot[1] * g.rot[1] + g.rot[2] * g.rot[2] +
                               g.rot[3] * g.rot[3]);
    for (double& v : g.rot) v /= n;
  }
}

void GaussianCloud::accumulate_statistics(std::span<const double> screen_grad_norm,
                                          std::span<const std::uint8_t> visible,
                                          std::span<const double> packed_grads) {
  if (screen_grad_accum.size() != size()) reset_statistics();
  require(screen_grad_norm.size() == size() && visible.size() == size() &&
              packed_grads.size() == size() * static_cast<std::size_t>(stride()),
          ErrorKind::Validation, "statistics input length mismatch");
  const int s = stride();
  for (std::size_t i = 0; i < size(); ++i) {
    if (!visible[i]) continue;
    screen_grad_accum[i] += screen_grad_norm[i];
    screen_grad_count[i] += 1;
    for (int k = 0; k < 3; ++k) position_grad_accum[i][k] += packed_grads[i * s + k];
  }
}

void save_cloud(const GaussianCloud& cloud, const std::filesystem::path& path,
                bool with_optimizer) {
  cloud.validate();
  Blob blob;
  blob.header["kind"] = "gaussian_cloud";
  blob.header["count"] = cloud.size();
  blob.header["channels"] = cloud.channels;
  blob.header["layout"] = {"mu[3]", "rot[4] (w,x,y,z)", "log_scale[3]", "color_raw[C]",
                           "opacity_logit"};
  blob.add("params", cloud.pack());
  if (with_optimizer) {
    blob.header["adam_step"] = cloud.adam.step;
    blob.add("adam_m", cloud.adam.m);
    blob.add("adam_v", cloud.adam.v);
    blob.add("screen_grad_accum", cloud.screen_grad_accum);
    std::vector<double> counts(cloud.screen_grad_count.begin(), cloud.screen_grad_count.end());
    blob.add("screen_grad_count", std::move(counts));
    std::vector<double> pos;
    for (const auto& p : cloud.position_grad_accum) pos.insert(pos.end(), p.begin(), p.end());
    blob.add("position_grad_accum", std::move(pos));
  }
  write_blob(blob, kCloudMagic, path);
}

GaussianCloud load_cloud(const std::filesystem::path& path) {
  const Blob blob = read_blob(kCloudMagic, path);
  GaussianCloud cloud;
  cloud.channels = blob.header.at("channels").get<int>();
  cloud.unpack(blob.get("params"));
  require(cloud.size() == blob.header.at("count").get<std::size_t>(), ErrorKind::Format,
          "cloud count does not match header");
  if (blob.has("adam_m")) {
    cloud.adam.m = blob.get("adam_m");
    cloud.adam.v = blob.get("adam_v");
    cloud.adam.step = blob.header.at("adam_step").get<std::int64_t>();
    cloud.screen_grad_accum = blob.get("screen_grad_accum");
    const auto& counts = blob.get("screen_grad_count");
    cloud.screen_grad_count.assign(counts.begin(), counts.end());
    const auto& pos = blob.get("position_grad_accum");
    cloud.position_grad_accum.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int k = 0; k < 3; ++k) cloud.position_grad_accum[i][k] = pos[i * 3 + k];
    }
  }
  cloud.validate();
  return cloud;
}

}  // namespace rawsplat
