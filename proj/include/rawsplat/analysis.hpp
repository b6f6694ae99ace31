// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "rawsplat/camera.hpp"
#include "rawsplat/gaussian.hpp"
#include "rawsplat/image.hpp"

namespace rawsplat {

struct VarianceStudyConfig {
  double sigma = 1.0;
  std::vector<int> view_counts{2, 4, 8, 16, 32};
  int trials = 100;
  int pixels = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct VarianceRow {
  int n = 0;
  double var_empirical = 0.0;
  double var_sigma2_over_n = 0.0;
  double var_sigma2_over_n2 = 0.0;  // sigma^2 / N^2, reported alongside for comparison
};

/// For each N: per pixel, the mean of N iid N(0, sigma^2) draws (the L2
/// minimizer over N noisy observations); spatial variance across pixels,
/// averaged over trials.
std::vector<VarianceRow> optimal_target_variance(const VarianceStudyConfig& config);

/// OLS slope of log(var_empirical) against log(N).
double loglog_slope(const std::vector<VarianceRow>& rows);

/// Columns: N, var_empirical, var_sigma2_over_N, var_sigma2_over_N2.
void write_variance_csv(const std::vector<VarianceRow>& rows, const std::filesystem::path& path);

struct SnapshotView {
  std::string name;
  CameraModel camera;
  ImagePlane clean;  // reference in the render's geometry
};

/// Writes tone-mapped PGMs of the given views plus a row per view in
/// snapshots.csv whenever the training loop reaches a listed iteration.
class SnapshotExporter {
 public:
  SnapshotExporter(std::set<std::int64_t> iterations, std::filesystem::path dir, double gain);

  bool wants(std::int64_t iteration) const { return iterations_.count(iteration) > 0; }

  /// Returns the number of images written (0 when the iteration is not listed).
  std::size_t capture(std::int64_t iteration, const GaussianCloud& cloud,
                      const std::vector<SnapshotView>& views);

 private:
  std::set<std::int64_t> iterations_;
  std::filesystem::path dir_;
  double gain_;
};

}  // namespace rawsplat
