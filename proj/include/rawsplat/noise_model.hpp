// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "rawsplat/image.hpp"

namespace rawsplat {

/// Camera-level noise calibration. All quantities are in normalized units
/// (after black-level subtraction and division by white - black).
///
///   k              = a_k * ISO + b_k
///   ln(sigma_read) = a_read * ln(k) + b_read
///   n_fp           = ISO * n_fp_k + n_fp_b          (per pixel)
struct NoiseModelParams {
  double a_k = 0.0;
  double b_k = 0.0;
  double a_read = 0.0;
  double b_read = 0.0;
  double iso_min = 0.0;
  double iso_max = 0.0;
  ImagePlane n_fp_k;
  ImagePlane n_fp_b;

  void validate() const;
};

/// Noise parameters evaluated at one ISO setting.
struct IsoNoiseParams {
  double iso = 0.0;
  double k = 0.0;
  double sigma_read = 0.0;
  ImagePlane n_fp;
};

enum class NoiseMode { Poisson, HeteroscedasticGaussian };

IsoNoiseParams params_at_iso(const NoiseModelParams& model, double iso);

/// Per-pixel sqrt(sigma_read^2 + max(signal, 0) * k).
ImagePlane hg_sigma(const ImagePlane& signal, const IsoNoiseParams& params);

/// Draws n = n_shot + n_read + n_fp. Each pixel uses its own counter stream
/// keyed by (seed, pixel index), so the field does not depend on traversal order.
ImagePlane sample_noise(const ImagePlane& clean, const IsoNoiseParams& params, std::uint64_t seed,
                        NoiseMode mode);

struct NllResult {
  ImagePlane per_pixel;
  double mean = 0.0;
};

/// Gaussian negative log-likelihood of n_hat under N(n_fp, sigma_hg^2(signal)),
/// natural log.
NllResult nll(const ImagePlane& n_hat, const ImagePlane& signal, const IsoNoiseParams& params);

/// (n_hat - n_fp) / sigma_hg(signal).
ImagePlane normalize_noise(const ImagePlane& n_hat, const ImagePlane& signal,
                           const IsoNoiseParams& params);

/// JSON with scalar fields inline and the two fixed-pattern maps as RAWF0001
/// sidecars next to the JSON file (`<stem>_fp_k.rawf`, `<stem>_fp_b.rawf`).
void save_noise_model(const NoiseModelParams& model, const std::filesystem::path& json_path);
NoiseModelParams load_noise_model(const std::filesystem::path& json_path);

}  // namespace rawsplat
