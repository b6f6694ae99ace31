// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "rawsplat/camera.hpp"
#include "rawsplat/gaussian.hpp"
#include "rawsplat/image.hpp"

namespace rawsplat::test {

// Fresh directory under the system temp dir, removed on scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("rawsplat_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Worst per-element |a - n| / max(|a|, |n|, floor), floor = 1e-3 * max|n|.
inline double max_relative_error(std::span<const double> analytic,
                                 std::span<const double> numeric) {
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-3 * scale, 1e-300);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

// Central differences of f over every entry of x.
inline std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline ImagePlane random_plane(int w, int h, std::mt19937_64& rng, double lo = 0.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ImagePlane p(w, h);
  for (double& v : p.data) v = u(rng);
  return p;
}

inline CameraModel small_camera(int size = 16) {
  return CameraModel::look_at({0.3, -0.2, -4.0}, {0.0, 0.0, 0.0}, {0.0, -1.0, 0.0}, 1.3 * size,
                              1.3 * size, size, size);
}

inline GaussianCloud random_cloud(std::size_t count, int channels, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-0.6, 0.6);
  std::uniform_real_distribution<double> logs(std::log(0.12), std::log(0.45));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> op(-1.5, 1.0);
  GaussianCloud cloud;
  cloud.channels = channels;
  for (std::size_t i = 0; i < count; ++i) {
    Gaussian3D g;
    g.mu = {pos(rng), pos(rng), pos(rng)};
    g.rot = {1.0 + 0.5 * unit(rng), unit(rng), unit(rng), unit(rng)};
    g.log_scale = {logs(rng), logs(rng), logs(rng)};
    g.color_raw.resize(channels);
    for (double& c : g.color_raw) c = unit(rng);
    g.opacity_logit = op(rng);
    cloud.gaussians.push_back(g);
  }
  return cloud;
}

}  // namespace rawsplat::test
