// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>

#include "rawsplat/distortion.hpp"
#include "rawsplat/image.hpp"
#include "rawsplat/noise_model.hpp"

namespace rawsplat {

struct LossWeights {
  double lambda_dssim = 0.2;
  double lambda_nd = 5.0;
  double lambda_cov = 20.0;
  double epsilon = 1e-3;
  int cov_patch = 4;

  void validate() const;
};

/// Which gradient paths of the noise-robust loss are live.
struct GradientRouting {
  bool recon_to_noise = true;        // target (raw - n_hat) carries gradient to n_hat
  bool nll_sigma_to_render = true;   // sigma_hg(D(render)) in the NLL feeds the render
  bool cov_sigma_to_render = false;  // sigma_hg inside the cov normalization feeds the render
};

struct ScalarLoss {
  double value = 0.0;
  ImagePlane grad;
};

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5, zero padding),
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2. Gradient is with respect to `a`.
ScalarLoss ssim(const ImagePlane& a, const ImagePlane& b, double peak = 1.0);

/// (1 - lambda) * mean|x_hat - x| + lambda * (1 - SSIM) / 2.
ScalarLoss loss_3dgs(const ImagePlane& x_hat, const ImagePlane& x, double lambda_dssim);

struct RawNerfLoss {
  double value = 0.0;
  ImagePlane grad_pred;
  ImagePlane grad_target;
};

/// Mean over masked pixels of ((x_hat - target) / (sg(x_hat) + eps))^2. An
/// empty mask span selects every pixel.
RawNerfLoss loss_rawnerf(const ImagePlane& x_hat, const ImagePlane& target, double epsilon,
                         std::span<const std::uint8_t> mask = {});

/// Non-overlapping PxP patches as samples; ||I - M||_F^2 / P^4 with
/// M = (1/S) sum z_s z_s^T. Trailing rows/columns that do not fill a patch are ignored.
ScalarLoss loss_cov(const ImagePlane& z_hat, int patch = 4);

struct LossReport {
  double total = 0.0;
  double recon = 0.0;
  double nll = 0.0;
  double cov = 0.0;
  ImagePlane grad_render;
  ImagePlane grad_noise;
};

/// recon(D(render), raw - n_hat) + lambda_nd * NLL(n_hat | D(render)) +
/// lambda_cov * cov(normalize_noise(n_hat, D(render))).
/// The recon and NLL terms average over map-valid pixels; cov uses the whole frame.
LossReport loss_nrr(const ImagePlane& render, const ImagePlane& raw, const ImagePlane& n_hat,
                    const IsoNoiseParams& params, const LossWeights& weights,
                    const DistortionMap& map, const GradientRouting& routing = {});

}  // namespace rawsplat
