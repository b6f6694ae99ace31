// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "rawsplat/calibration.hpp"
#include "rawsplat/density.hpp"
#include "rawsplat/error.hpp"
#include "rawsplat/rasterizer.hpp"
#include "rawsplat/rng.hpp"

namespace rawsplat {

void VarianceStudyConfig::validate() const {
  require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::Validation, "sigma must be >= 0");
  require(trials >= 2 && pixels >= 2, ErrorKind::Validation, "trials and pixels must be >= 2");
  require(!view_counts.empty(), ErrorKind::Validation, "no view counts");
  for (int n : view_counts) require(n >= 1, ErrorKind::Validation, "view counts must be >= 1");
}

std::vector<VarianceRow> optimal_target_variance(const VarianceStudyConfig& config) {
  config.validate();
  std::vector<VarianceRow> rows;
  std::vector<double> means(config.pixels);
  for (int n : config.view_counts) {
    double acc = 0.0;
    for (int t = 0; t < config.trials; ++t) {
      double total = 0.0;
      for (int p = 0; p < config.pixels; ++p) {
        CounterRng rng(stream_key(config.seed, static_cast<std::uint64_t>(n),
                                  static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(p)));
        std::normal_distribution<double> normal(0.0, 1.0);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += config.sigma * normal(rng);
        means[p] = s / n;
        total += means[p];
      }
      const double mu = total / config.pixels;
      double ss = 0.0;
      for (double m : means) ss += (m - mu) * (m - mu);
      acc += ss / (config.pixels - 1);
    }
    const double s2 = config.sigma * config.sigma;
    rows.push_back({n, acc / config.trials, s2 / n, s2 / (static_cast<double>(n) * n)});
  }
  return rows;
}

double loglog_slope(const std::vector<VarianceRow>& rows) {
  std::vector<double> x, y;
  for (const VarianceRow& r : rows) {
    require(r.var_empirical > 0.0, ErrorKind::Domain, "log of a non-positive variance");
    x.push_back(std::log(static_cast<double>(r.n)));
    y.push_back(std::log(r.var_empirical));
  }
  return ols_line(x, y).slope;
}

void write_variance_csv(const std::vector<VarianceRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "N,var_empirical,var_sigma2_over_N,var_sigma2_over_N2\n";
  char buf[160];
  for (const VarianceRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g\n", r.n, r.var_empirical,
                  r.var_sigma2_over_n, r.var_sigma2_over_n2);
    out << buf;
  }
}

SnapshotExporter::SnapshotExporter(std::set<std::int64_t> iterations, std::filesystem::path dir,
                                   double gain)
    : iterations_(std::move(iterations)), dir_(std::move(dir)), gain_(gain) {}

std::size_t SnapshotExporter::capture(std::int64_t iteration, const GaussianCloud& cloud,
                                      const std::vector<SnapshotView>& views) {
  if (!wants(iteration)) return 0;
  std::filesystem::create_directories(dir_);
  const auto csv_path = dir_ / "snapshots.csv";
  const bool fresh = !std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  require(static_cast<bool>(csv), ErrorKind::Io, "cannot write " + csv_path.string());
  if (fresh) csv << "iteration,view,raw_psnr,gaussians,aniso_median,aniso_p95\n";
  const AnisotropyStats an = cloud.size() > 0 ? anisotropy_stats(cloud) : AnisotropyStats{};
  std::size_t written = 0;
  char buf[256];
  for (const SnapshotView& v : views) {
    const RenderResult r = render(cloud, v.camera);
    const auto name = "iter" + std::to_string(iteration) + "_" + v.name + ".pgm";
    write_pgm(tone_map(r.image[0], gain_), dir_ / name);
    ++written;
    std::snprintf(buf, sizeof buf, "%lld,%s,%.17g,%zu,%.17g,%.17g\n",
                  static_cast<long long>(iteration), v.name.c_str(), psnr(r.image[0], v.clean),
                  cloud.size(), an.median, an.p95);
    csv << buf;
  }
  return written;
}

}  // namespace rawsplat
