// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rawsplat {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
};

/// Piecewise-constant learning rate: `initial` for steps 1..milestone, then `decayed`.
struct LrSchedule {
  double initial = 1e-4;
  double decayed = 1e-5;
  std::int64_t milestone = 25000;

  double at(std::int64_t step) const noexcept { return step <= milestone ? initial : decayed; }
};

/// One bias-corrected Adam update with a per-parameter learning rate.
/// Throws a training error (with the offending index) on a non-finite gradient.
void adam_step(std::span<double> params, std::span<const double> grads,
               std::span<const double> lr, AdamState& state, const AdamHyper& hyper = {});

void adam_step(std::span<double> params, std::span<const double> grads, double lr,
               AdamState& state, const AdamHyper& hyper = {});

}  // namespace rawsplat
