// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
// Command-line front end: every subcommand takes a JSON config plus --out/--seed.
#include <cstdio>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "rawsplat/analysis.hpp"
#include "rawsplat/calibration.hpp"
#include "rawsplat/error.hpp"
#include "rawsplat/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rawsplat;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

fs::path relative_to(const fs::path& config, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : config.parent_path() / path;
}

json metrics_json(const MetricsRow& r) {
  return {{"iteration", r.iteration},           {"raw_psnr", r.raw_psnr},
          {"tonemapped_psnr", r.tonemapped_psnr}, {"gaussians", r.gaussians},
          {"aniso_median", r.aniso_median},     {"aniso_p95", r.aniso_p95},
          {"wall_ms_per_render", r.wall_ms_per_render}};
}

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("config", c.config, "JSON configuration")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
}

// synth: {"kind": "scene", "scene": {...}, "noise_model": path | "noise_truth": {...}}
//     or {"kind": "calibration", "noise_truth": {...}, "isos": [...], "layout": {...}}
int cmd_synth(const Common& c) {
  const fs::path cfg_path(c.config);
  const json j = read_json(cfg_path);
  const std::string kind = j.value("kind", "scene");
  const fs::path out(c.out);

  if (kind == "scene") {
    SceneSpec spec = scene_spec_from_json(j.value("scene", json::object()));
    if (c.seed) spec.seed = *c.seed;
    NoiseModelParams noise;
    if (j.contains("noise_model")) {
      noise = load_noise_model(relative_to(cfg_path, j.at("noise_model")));
    } else {
      NoiseTruthSpec truth = noise_truth_from_json(j.value("noise_truth", json::object()));
      truth.width = std::max(truth.width, spec.width);
      truth.height = std::max(truth.height, spec.height);
      noise = make_noise_truth(truth);
    }
    const Dataset ds = synthesize_scene(spec, noise, out);
    std::printf("wrote %zu train + %zu test views to %s\n", ds.train.size(), ds.test.size(),
                out.string().c_str());
    return 0;
  }
  if (kind == "calibration") {
    const NoiseTruthSpec truth_spec = noise_truth_from_json(j.value("noise_truth", json::object()));
    CaptureSynthesis layout;
    const json l = j.value("layout", json::object());
    layout.width = truth_spec.width;
    layout.height = truth_spec.height;
    layout.block_rows = l.value("block_rows", layout.block_rows);
    layout.block_cols = l.value("block_cols", layout.block_cols);
    layout.flats_per_exposure = l.value("flats_per_exposure", layout.flats_per_exposure);
    layout.exposure_scales = l.value("exposure_scales", layout.exposure_scales);
    layout.darks = l.value("darks", layout.darks);
    layout.level_min = l.value("level_min", layout.level_min);
    layout.level_max = l.value("level_max", layout.level_max);
    const std::vector<double> isos = j.value("isos", std::vector<double>{100, 200, 400, 800});
    const std::uint64_t seed = c.seed.value_or(j.value("seed", std::uint64_t{3}));

    const NoiseModelParams truth = make_noise_truth(truth_spec);
    const auto captures = synthesize_captures(truth, isos, layout, seed);
    CalibrationOptions options;
    options.block_rows = layout.block_rows;
    options.block_cols = layout.block_cols;
    options.saturation = j.value("saturation", options.saturation);
    write_capture_manifest(captures, options, out);
    save_noise_model(truth, out / "truth" / "noise_model.json");
    std::printf("wrote calibration captures for %zu ISO levels to %s\n", isos.size(),
                out.string().c_str());
    return 0;
  }
  fail(ErrorKind::Validation, "unknown synth kind '" + kind + "'");
}

int cmd_calibrate(const Common& c) {
  const CalibrationReport report = calibrate_from_manifest(c.config);
  const fs::path out(c.out);
  save_noise_model(report.model, out / "noise_model.json");
  json per_iso = json::array();
  for (std::size_t i = 0; i < report.per_iso.size(); ++i) {
    const auto& s = report.per_iso[i];
    json row = {{"iso", s.iso}, {"k", s.k}, {"sigma_read", s.sigma_read}};
    if (i < report.gain_fits.size()) {
      row["points_used"] = report.gain_fits[i].points_used;
      row["points_excluded"] = report.gain_fits[i].points_excluded;
    }
    per_iso.push_back(row);
  }
  write_json(out / "calibration_report.json",
             {{"a_k", report.model.a_k},
              {"b_k", report.model.b_k},
              {"a_read", report.model.a_read},
              {"b_read", report.model.b_read},
              {"per_iso", per_iso}});
  std::printf("a_k=%.6g b_k=%.6g a_read=%.6g b_read=%.6g\n", report.model.a_k, report.model.b_k,
              report.model.a_read, report.model.b_read);
  return 0;
}

int cmd_pretrain(const Common& c) {
  const fs::path cfg_path(c.config);
  PretrainConfig cfg = pretrain_config_from_json(read_json(cfg_path), cfg_path.parent_path());
  if (c.seed) cfg.seed = *c.seed;
  require(!cfg.noise_model.empty(), ErrorKind::Validation, "pretrain config needs noise_model");
  ExtractorNet net = ExtractorNet::create(cfg.seed);
  const PretrainReport r = pretrain_extractor(cfg, load_noise_model(cfg.noise_model), net);
  const fs::path out(c.out);
  fs::create_directories(out);
  save_extractor(net, out / "extractor.xnet");
  write_json(out / "pretrain_report.json",
             {{"initial_mse", r.initial_mse}, {"final_mse", r.final_mse}, {"steps", cfg.steps}});
  std::printf("held-out mse %.6g -> %.6g\n", r.initial_mse, r.final_mse);
  return 0;
}

int cmd_train(const Common& c, bool resume) {
  TrainConfig cfg = load_train_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  const TrainResult r = train(cfg, c.out, resume);
  const MetricsRow& last = r.metrics.back();
  std::printf("iteration %lld: raw PSNR %.4f dB, tone-mapped PSNR %.4f dB, %zu gaussians\n",
              static_cast<long long>(last.iteration), last.raw_psnr, last.tonemapped_psnr,
              last.gaussians);
  return 0;
}

// eval: {"cloud": path, "dataset": dir, "ldr": false}
int cmd_eval(const Common& c) {
  const fs::path cfg_path(c.config);
  const json j = read_json(cfg_path);
  const GaussianCloud cloud = load_cloud(relative_to(cfg_path, j.at("cloud")));
  const Dataset ds = load_dataset(relative_to(cfg_path, j.at("dataset")));
  const MetricsRow row = evaluate(cloud, ds, j.value("ldr", false));
  write_json(fs::path(c.out) / "eval.json", metrics_json(row));
  std::printf("raw PSNR %.4f dB, tone-mapped PSNR %.4f dB, %zu gaussians\n", row.raw_psnr,
              row.tonemapped_psnr, row.gaussians);
  return 0;
}

int cmd_sweep(const Common& c) {
  const fs::path cfg_path(c.config);
  SweepConfig cfg = sweep_config_from_json(read_json(cfg_path), cfg_path.parent_path());
  if (c.seed) cfg.base.seed = *c.seed;
  const auto rows = experiment_views_sweep(cfg, c.out);
  for (const SweepRow& r : rows) {
    std::printf("%-12s N=%-3d raw PSNR %.4f dB, M=%zu, aniso median %.3f\n",
                to_string(r.mode).c_str(), r.views, r.metrics.raw_psnr, r.metrics.gaussians,
                r.metrics.aniso_median);
  }
  return 0;
}

int cmd_variance(const Common& c) {
  const json j = read_json(c.config);
  VarianceStudyConfig cfg;
  cfg.sigma = j.value("sigma", cfg.sigma);
  cfg.view_counts = j.value("view_counts", cfg.view_counts);
  cfg.trials = j.value("trials", cfg.trials);
  cfg.pixels = j.value("pixels", cfg.pixels);
  cfg.seed = c.seed.value_or(j.value("seed", cfg.seed));
  const auto rows = optimal_target_variance(cfg);
  write_variance_csv(rows, fs::path(c.out) / "variance.csv");
  std::printf("log-log slope %.4f\n", loglog_slope(rows));
  return 0;
}

// render: {"cloud": path, "dataset": dir, "split": "test", "ldr": false}
int cmd_render(const Common& c) {
  const fs::path cfg_path(c.config);
  const json j = read_json(cfg_path);
  const GaussianCloud cloud = load_cloud(relative_to(cfg_path, j.at("cloud")));
  const Dataset ds = load_dataset(relative_to(cfg_path, j.at("dataset")));
  const std::string split = j.value("split", "test");
  const bool ldr = j.value("ldr", false);
  const fs::path out(c.out);
  fs::create_directories(out);
  const auto& views = split == "train" ? ds.train : ds.test;
  for (const DatasetView& v : views) {
    const DistortionMap map = build_distortion_map(v.camera);
    const ImagePlane img = apply_map(render(cloud, v.camera).image[0], map);
    write_pgm(ldr ? img : tone_map(img, ds.tonemap_gain), out / (v.name + ".pgm"));
    if (!ldr) {
      save_raw(denormalize(img, ds.black_level, ds.white_level, static_cast<float>(ds.iso), 0.01f),
               out / (v.name + ".rawf"));
    }
  }
  std::printf("rendered %zu views to %s\n", views.size(), out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // The extractor churns through multi-megabyte temporaries; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"rawsplat: noise-robust splatting from raw sensor frames"};
  app.require_subcommand(1);
  Common synth, calib, pretrain, train_c, eval, sweep, variance, render_c;
  bool resume = false;
  add_common(app.add_subcommand("synth", "synthesize a scene dataset or calibration captures"), synth);
  add_common(app.add_subcommand("calibrate", "fit a noise model from a capture manifest"), calib);
  add_common(app.add_subcommand("pretrain-extractor", "supervised extractor pretraining"), pretrain);
  auto* train_cmd = app.add_subcommand("train", "train a cloud (ldr, hdr_rawnerf or nrr)");
  add_common(train_cmd, train_c);
  train_cmd->add_flag("--resume", resume, "continue from out/checkpoint when compatible");
  add_common(app.add_subcommand("eval", "evaluate a cloud on a dataset's test views"), eval);
  add_common(app.add_subcommand("sweep", "view-count sweep over training modes"), sweep);
  add_common(app.add_subcommand("variance-study", "Monte Carlo variance of the per-pixel mean"),
             variance);
  add_common(app.add_subcommand("render", "render a cloud through a dataset's cameras"), render_c);
  CLI11_PARSE(app, argc, argv);

  try {
    const CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    fs::create_directories(sub->get_option("--out")->as<std::string>());
    if (name == "synth") return cmd_synth(synth);
    if (name == "calibrate") return cmd_calibrate(calib);
    if (name == "pretrain-extractor") return cmd_pretrain(pretrain);
    if (name == "train") return cmd_train(train_c, resume);
    if (name == "eval") return cmd_eval(eval);
    if (name == "sweep") return cmd_sweep(sweep);
    if (name == "variance-study") return cmd_variance(variance);
    if (name == "render") return cmd_render(render_c);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 1;
}
