// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rawsplat/camera.hpp"
#include "rawsplat/distortion.hpp"
#include "rawsplat/extractor.hpp"
#include "rawsplat/gaussian.hpp"
#include "rawsplat/losses.hpp"
#include "rawsplat/noise_model.hpp"
#include "rawsplat/rasterizer.hpp"

namespace rawsplat {

// ---------------------------------------------------------------------------
// Scenes and datasets

struct SceneSpec {
  int width = 64;
  int height = 64;
  int train_views = 24;
  int test_views = 6;
  int backdrop_grid = 7;  // backdrop_grid^2 flat gaussians
  int blobs = 12;
  double focal = 70.0;
  double iso = 800.0;
  double exposure = 1.0;  // multiplies every radiance
  double tonemap_gain = 4.0;
  bool zero_noise = false;
  NoiseMode noise_mode = NoiseMode::Poisson;
  DistortionCoeffs distortion;
  float black_level = 512.0f;
  float white_level = 16383.0f;
  std::string noise_model;  // path, relative to the config file
  std::uint64_t seed = 1;

  void validate() const;
};

SceneSpec scene_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneSpec& spec);

/// Ground-truth cloud of the reference scene: a textured backdrop of flat
/// gaussians behind a set of ellipsoidal blobs.
GaussianCloud reference_cloud(const SceneSpec& spec);

/// Forward-facing camera rig: a grid of eye positions looking at the scene
/// centre. Training views come first, ordered so every prefix is spread out.
std::vector<CameraModel> reference_cameras(const SceneSpec& spec);

/// Same sensor crop of the fixed-pattern maps (centred) so a model calibrated
/// on a larger frame can drive a smaller scene.
NoiseModelParams crop_noise_model(const NoiseModelParams& model, int width, int height);

struct DatasetView {
  std::string name;
  CameraModel camera;
  ImagePlane clean;  // normalized, distorted geometry
  ImagePlane noisy;
};

struct Dataset {
  std::filesystem::path dir;
  int width = 0;
  int height = 0;
  double iso = 0.0;
  double tonemap_gain = 4.0;
  float black_level = 0.0f;
  float white_level = 1.0f;
  bool zero_noise = false;
  NoiseModelParams noise;
  std::vector<DatasetView> train;
  std::vector<DatasetView> test;
  std::optional<GaussianCloud> ground_truth;

  IsoNoiseParams iso_params() const { return params_at_iso(noise, iso); }
};

/// Renders, distorts, corrupts and writes a dataset: dataset.json, per-view
/// clean/noisy RAWF files, the noise model and the ground-truth cloud.
Dataset synthesize_scene(const SceneSpec& spec, const NoiseModelParams& noise,
                         const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& dir);

/// Round-trips a normalized plane through the RAWF sample type.
ImagePlane quantize_like_raw(const ImagePlane& plane, float black_level, float white_level);

// ---------------------------------------------------------------------------
// Training

enum class TrainMode { Ldr, HdrRawnerf, Nrr };
std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct LearningRates {
  double position_initial = 1.6e-4;  // multiplied by the scene extent
  double position_final = 1.6e-6;
  double rotation = 1e-3;
  double scale = 5e-3;
  double color = 1e-2;
  double opacity = 5e-2;
};

struct DensifySchedule {
  int interval = 100;
  int from_iter = 500;
  int until_iter = 2500;
  double grad_threshold = 2e-4;
  double scale_split = 0.05;  // fraction of the scene extent
  double opacity_prune = 0.005;
  int opacity_reset_interval = 0;  // 0 disables
};

struct ExtractorSchedule {
  std::string init;  // optional pretrained weights, relative to the config file
  double lr_initial = 1e-4;
  double lr_decayed = 1e-5;
  std::int64_t milestone = 25000;
  int start_iter = 1;  // first iteration whose gradient updates the extractor
};

struct InitSpec {
  int points = 400;
  double opacity = 0.1;
  double color = 0.1;
};

struct TrainConfig {
  TrainMode mode = TrainMode::HdrRawnerf;
  std::filesystem::path dataset;
  std::filesystem::path noise_model;  // empty: the dataset's own model
  int iterations = 5000;
  int view_count = 0;  // 0: every training view
  int eval_interval = 500;
  bool checkpoints = true;
  std::uint64_t seed = 0;
  LossWeights weights;
  GradientRouting routing;
  LearningRates lr;
  DensifySchedule densify;
  ExtractorSchedule extractor;
  InitSpec init;
  RenderOptions render;
  std::vector<std::int64_t> snapshots;
  int halt_after = 0;  // stop (after checkpointing) at this iteration; 0 runs to the end

  void validate() const;
};

/// Relative paths in the JSON resolve against `base_dir`.
TrainConfig train_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
TrainConfig load_train_config(const std::filesystem::path& path);
nlohmann::json to_json(const TrainConfig& config);

struct MetricsRow {
  std::int64_t iteration = 0;
  double raw_psnr = 0.0;
  double tonemapped_psnr = 0.0;
  std::size_t gaussians = 0;
  double aniso_median = 0.0;
  double aniso_p95 = 0.0;
  double loss_total = 0.0;
  double loss_recon = 0.0;
  double loss_nll = 0.0;
  double loss_cov = 0.0;
  double wall_ms_per_render = 0.0;  // kept out of metrics.csv so reruns compare bit-exactly
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

struct TrainResult {
  GaussianCloud cloud;
  std::optional<ExtractorNet> extractor;
  std::vector<MetricsRow> metrics;
};

/// Runs (or resumes, when out_dir/checkpoint holds a compatible state) a
/// training session. Writes metrics.csv, timing.csv, cloud.gcld and, for nrr,
/// extractor.xnet into out_dir.
TrainResult train(const TrainConfig& config, const std::filesystem::path& out_dir,
                  bool resume = false);

/// Same as train() but with an already loaded dataset (no checkpoint resume).
TrainResult train_on(const TrainConfig& config, const Dataset& dataset,
                     const std::filesystem::path& out_dir, bool resume = false);

/// Raw and tone-mapped PSNR (mean over test views, distortion-valid pixels),
/// gaussian count and anisotropy. `ldr` marks clouds that render tone-mapped values.
MetricsRow evaluate(const GaussianCloud& cloud, const Dataset& dataset, bool ldr = false,
                    const RenderOptions& options = {});

// ---------------------------------------------------------------------------
// Extractor pretraining

struct PretrainConfig {
  SceneSpec scene;  // geometry and exposure of the synthetic pairs
  std::filesystem::path noise_model;
  int steps = 3000;
  int scenes = 16;
  double lr = 1e-3;
  std::uint64_t seed = 7;
};

PretrainConfig pretrain_config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir);

struct PretrainReport {
  double initial_mse = 0.0;
  double final_mse = 0.0;
};

/// Supervised fit of F(raw - n_fp) to (noise - n_fp) on pairs rendered from
/// reference-style scenes with seeds disjoint from the evaluation scene.
PretrainReport pretrain_extractor(const PretrainConfig& config, const NoiseModelParams& noise,
                                  ExtractorNet& net);

// ---------------------------------------------------------------------------
// Experiments

struct SweepConfig {
  TrainConfig base;
  std::vector<int> view_counts{4, 8, 16};
  std::vector<TrainMode> modes{TrainMode::HdrRawnerf, TrainMode::Nrr};
  double lambda_nd_full = 5.0;
  double lambda_cov_full = 20.0;
  double lambda_nd_limited = 3.0;
  double lambda_cov_limited = 20.0;
};

SweepConfig sweep_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

struct SweepRow {
  TrainMode mode = TrainMode::HdrRawnerf;
  int views = 0;
  MetricsRow metrics;
};

/// Trains every (N, mode) pair on the first N training views and evaluates on
/// the shared test set. Writes sweep.csv into out_dir.
std::vector<SweepRow> experiment_views_sweep(const SweepConfig& config,
                                             const std::filesystem::path& out_dir);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace rawsplat
