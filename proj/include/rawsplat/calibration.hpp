// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "rawsplat/image.hpp"
#include "rawsplat/noise_model.hpp"

namespace rawsplat {

enum class StackKind { Flat, Dark };

/// Frames captured with identical dimensions, levels, ISO and exposure.
struct FrameStack {
  std::vector<RawImage> frames;
  StackKind kind = StackKind::Flat;

  void validate() const;
};

struct MeanVarPoint {
  double mean = 0.0;
  double variance = 0.0;
  int block_id = 0;
};

struct GainFit {
  double k = 0.0;
  double intercept = 0.0;
  std::size_t points_used = 0;
  std::size_t points_excluded = 0;
};

/// One row of per-ISO calibration results, the input to fit_iso_model.
struct IsoCalibration {
  double iso = 0.0;
  double k = 0.0;
  double sigma_read = 0.0;
  ImagePlane n_fp;
};

/// Mean and unbiased variance of every block of a rows x cols grid, pooled
/// over all pixels and frames of the block. Trailing pixels that do not fill a
/// whole block are dropped.
std::vector<MeanVarPoint> block_statistics(const FrameStack& stack, int rows, int cols);

/// OLS of variance on mean using points with mean <= saturation / 4.
GainFit fit_gain(const std::vector<MeanVarPoint>& points, double saturation);

/// Per-pixel temporal mean of a dark stack.
ImagePlane fit_fixed_pattern(const FrameStack& dark);

/// sqrt of the unbiased variance of (frame - n_fp), pooled over pixels and frames.
double fit_read_sigma(const FrameStack& dark, const ImagePlane& n_fp);

/// Fits the ISO lines: k vs ISO, ln(sigma_read) vs ln(k), and per pixel n_fp vs ISO.
NoiseModelParams fit_iso_model(const std::vector<IsoCalibration>& samples);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LineFit ols_line(const std::vector<double>& x, const std::vector<double>& y);

/// Flats for one ISO: one stack per exposure time.
struct IsoCaptureSet {
  double iso = 0.0;
  std::vector<FrameStack> flats;
  FrameStack darks;
};

struct CalibrationOptions {
  int block_rows = 4;
  int block_cols = 6;
  double saturation = 1.0;  // normalized units
};

struct CalibrationReport {
  NoiseModelParams model;
  std::vector<IsoCalibration> per_iso;
  std::vector<GainFit> gain_fits;
};

/// The full three-step protocol: gain from flats, fixed pattern and read noise
/// from darks, then the ISO-line fit.
CalibrationReport calibrate(const std::vector<IsoCaptureSet>& captures,
                            const CalibrationOptions& options);

/// Reads a manifest of the form
///   {"block_grid": [rows, cols], "saturation": 1.0,
///    "groups": [{"iso": 800, "exposure": 0.01, "kind": "flat", "frames": ["a.rawf", ...]}, ...]}
/// with frame paths relative to the manifest.
/// Layout of a synthetic calibration capture. Block b of a flat frame is lit
/// at level_min * (level_max / level_min)^(b / (blocks - 1)) times the
/// exposure scale; values above the white level clip.
struct CaptureSynthesis {
  int width = 192;
  int height = 128;
  int block_rows = 4;
  int block_cols = 6;
  int flats_per_exposure = 25;
  std::vector<double> exposure_scales{1.0, 2.0, 4.0};
  int darks = 100;
  double level_min = 0.01;
  double level_max = 0.4;
  float black_level = 512.0f;
  float white_level = 16383.0f;
  NoiseMode mode = NoiseMode::Poisson;
};

std::vector<IsoCaptureSet> synthesize_captures(const NoiseModelParams& truth,
                                               const std::vector<double>& isos,
                                               const CaptureSynthesis& layout, std::uint64_t seed);

/// Writes frames as RAWF files plus a manifest readable by calibrate_from_manifest.
void write_capture_manifest(const std::vector<IsoCaptureSet>& captures,
                            const CalibrationOptions& options, const std::filesystem::path& dir);

CalibrationReport calibrate_from_manifest(const std::filesystem::path& manifest);

/// Ground-truth camera used by the synthetic experiments: ISO lines plus
/// Gaussian fixed-pattern maps with the given per-pixel spreads.
struct NoiseTruthSpec {
  double a_k = 1e-5;
  double b_k = 1e-3;
  double a_read = 0.5;
  double b_read = -1.6094379124341003;  // ln 0.2
  double iso_min = 100.0;
  double iso_max = 800.0;
  double fp_k_sigma = 1e-6;
  double fp_b_sigma = 1e-3;
  int width = 192;
  int height = 128;
  std::uint64_t seed = 11;
};

NoiseTruthSpec noise_truth_from_json(const nlohmann::json& j);
NoiseModelParams make_noise_truth(const NoiseTruthSpec& spec);

}  // namespace rawsplat
