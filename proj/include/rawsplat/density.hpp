// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "rawsplat/gaussian.hpp"

namespace rawsplat {

struct DensifyThresholds {
  double grad = 2e-4;        // mean screen-space positional gradient, pixels
  double scale_split = 0.05; // max activated scale separating clone from split
  double opacity_prune = 0.005;
};

struct DensifyReport {
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
};

/// Scale divisor applied to split children.
inline constexpr double kSplitScaleFactor = 1.6;

/// Clones small high-gradient gaussians (nudged along the descent direction of
/// the accumulated positional gradient), replaces large high-gradient ones by
/// two children drawn from the parent, and removes gaussians whose opacity is
/// below the prune threshold. New entries get zeroed optimizer moments; all
/// statistics are reset.
DensifyReport densify_and_prune(GaussianCloud& cloud, const DensifyThresholds& thresholds,
                                std::uint64_t seed);

struct AnisotropyStats {
  double median = 0.0;
  double p95 = 0.0;
  std::size_t count = 0;
};

/// max/min activated scale per gaussian; nearest-rank percentiles.
AnisotropyStats anisotropy_stats(const GaussianCloud& cloud);

/// sorted[ceil(q * n) - 1], q in (0, 1].
double nearest_rank(std::vector<double> values, double q);

}  // namespace rawsplat
