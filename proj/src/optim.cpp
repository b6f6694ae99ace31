// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/optim.hpp"

#include <cmath>
#include <string>

#include "rawsplat/error.hpp"

namespace rawsplat {

namespace {

template <typename LrAt>
void adam_impl(std::span<double> params, std::span<const double> grads, LrAt lr_at,
               AdamState& state, const AdamHyper& hyper) {
  require(params.size() == grads.size(), ErrorKind::Validation, "adam: gradient length mismatch");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    require(state.m.empty() && state.v.empty(), ErrorKind::Validation,
            "adam: moment length does not match parameters");
    state.resize(params.size());
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      fail(ErrorKind::Training,
           "non-finite gradient at parameter " + std::to_string(i) + " (step " +
               std::to_string(state.step + 1) + ")");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr_at(i) * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads,
               std::span<const double> lr, AdamState& state, const AdamHyper& hyper) {
  require(lr.size() == params.size(), ErrorKind::Validation, "adam: lr length mismatch");
  adam_impl(params, grads, [&](std::size_t i) { return lr[i]; }, state, hyper);
}

void adam_step(std::span<double> params, std::span<const double> grads, double lr,
               AdamState& state, const AdamHyper& hyper) {
  adam_impl(params, grads, [lr](std::size_t) { return lr; }, state, hyper);
}

}  // namespace rawsplat
