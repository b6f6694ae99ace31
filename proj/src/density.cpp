// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/density.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rawsplat/error.hpp"
#include "rawsplat/rng.hpp"

namespace rawsplat {

namespace {

double max_scale(const Gaussian3D& g) {
  return std::exp(*std::max_element(g.log_scale.begin(), g.log_scale.end()));
}

}  // namespace

DensifyReport densify_and_prune(GaussianCloud& cloud, const DensifyThresholds& thresholds,
                                std::uint64_t seed) {
  cloud.validate();
  const std::size_t n = cloud.size();
  const int stride = cloud.stride();
  const bool have_stats = cloud.screen_grad_accum.size() == n;
  const bool have_adam = cloud.adam.m.size() == n * static_cast<std::size_t>(stride);

  DensifyReport report;
  std::vector<Gaussian3D> out;
  std::vector<double> m_out;
  std::vector<double> v_out;
  out.reserve(n);

  auto keep_moments = [&](std::size_t i) {
    if (!have_adam) return;
    m_out.insert(m_out.end(), cloud.adam.m.begin() + i * stride,
                 cloud.adam.m.begin() + (i + 1) * stride);
    v_out.insert(v_out.end(), cloud.adam.v.begin() + i * stride,
                 cloud.adam.v.begin() + (i + 1) * stride);
  };
  auto zero_moments = [&]() {
    if (!have_adam) return;
    m_out.insert(m_out.end(), stride, 0.0);
    v_out.insert(v_out.end(), stride, 0.0);
  };

  std::vector<Gaussian3D> appended;
  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian3D& g = cloud.gaussians[i];
    if (g.opacity() < thresholds.opacity_prune) {
      ++report.pruned;
      continue;
    }
    double mean_grad = 0.0;
    if (have_stats && cloud.screen_grad_count[i] > 0) {
      mean_grad = cloud.screen_grad_accum[i] / cloud.screen_grad_count[i];
    }
    const bool hot = mean_grad >= thresholds.grad && mean_grad > 0.0;
    if (!hot) {
      out.push_back(g);
      keep_moments(i);
      continue;
    }
    const double smax = max_scale(g);
    if (smax <= thresholds.scale_split) {
      out.push_back(g);
      keep_moments(i);
      Gaussian3D clone = g;
      const auto& pg = cloud.position_grad_accum[i];
      const double norm = std::sqrt(pg[0] * pg[0] + pg[1] * pg[1] + pg[2] * pg[2]);
      if (norm > 0.0) {
        for (int k = 0; k < 3; ++k) clone.mu[k] -= 0.5 * smax * pg[k] / norm;
      }
      appended.push_back(std::move(clone));
      ++report.cloned;
    } else {
      const Mat3 r = quat_to_rotation(g.rot);
      const auto s = g.scale();
      for (int child = 0; child < 2; ++child) {
        CounterRng rng(stream_key(seed, i, static_cast<std::uint64_t>(child)));
        std::normal_distribution<double> normal(0.0, 1.0);
        const Vec3 z(normal(rng) * s[0], normal(rng) * s[1], normal(rng) * s[2]);
        const Vec3 offset = r * z;
        Gaussian3D c = g;
        for (int k = 0; k < 3; ++k) {
          c.mu[k] += offset[k];
          c.log_scale[k] -= std::log(kSplitScaleFactor);
        }
        appended.push_back(std::move(c));
      }
      ++report.split;
    }
  }
  for (Gaussian3D& g : appended) {
    out.push_back(std::move(g));
    zero_moments();
  }

  cloud.gaussians = std::move(out);
  if (have_adam) {
    cloud.adam.m = std::move(m_out);
    cloud.adam.v = std::move(v_out);
  } else if (!cloud.adam.m.empty()) {
    cloud.reset_optimizer();
  }
  cloud.reset_statistics();
  return report;
}

double nearest_rank(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::Validation, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

AnisotropyStats anisotropy_stats(const GaussianCloud& cloud) {
  require(cloud.size() > 0, ErrorKind::Validation, "anisotropy of an empty cloud");
  std::vector<double> ratios;
  ratios.reserve(cloud.size());
  for (const Gaussian3D& g : cloud.gaussians) {
    const auto s = g.scale();
    ratios.push_back(*std::max_element(s.begin(), s.end()) / *std::min_element(s.begin(), s.end()));
  }
  AnisotropyStats st;
  st.count = cloud.size();
  st.median = nearest_rank(ratios, 0.5);
  st.p95 = nearest_rank(ratios, 0.95);
  return st;
}

}  // namespace rawsplat
