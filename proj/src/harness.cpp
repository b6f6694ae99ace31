// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "rawsplat/analysis.hpp"
#include "rawsplat/density.hpp"
#include "rawsplat/error.hpp"
#include "rawsplat/rng.hpp"

namespace rawsplat {
namespace fs = std::filesystem;
using nlohmann::json;

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

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json distortion_to_json(const DistortionCoeffs& d) {
  return {{"k1", d.k1}, {"k2", d.k2}, {"k3", d.k3}, {"k4", d.k4}, {"p1", d.p1}, {"p2", d.p2}};
}

DistortionCoeffs distortion_from_json(const json& j) {
  DistortionCoeffs d;
  get_if(j, "k1", d.k1);
  get_if(j, "k2", d.k2);
  get_if(j, "k3", d.k3);
  get_if(j, "k4", d.k4);
  get_if(j, "p1", d.p1);
  get_if(j, "p2", d.p2);
  return d;
}

NoiseMode noise_mode_from_string(const std::string& s) {
  if (s == "poisson") return NoiseMode::Poisson;
  if (s == "gaussian" || s == "hg") return NoiseMode::HeteroscedasticGaussian;
  fail(ErrorKind::Validation, "unknown noise mode '" + s + "'");
}

std::string to_string(NoiseMode mode) {
  return mode == NoiseMode::Poisson ? "poisson" : "gaussian";
}

std::array<double, 3> camera_center(const CameraModel& cam) {
  const auto& r = cam.rotation;
  const auto& t = cam.translation;
  return {-(r[0] * t[0] + r[3] * t[1] + r[6] * t[2]), -(r[1] * t[0] + r[4] * t[1] + r[7] * t[2]),
          -(r[2] * t[0] + r[5] * t[1] + r[8] * t[2])};
}

ImagePlane clamp_nonnegative(ImagePlane p) {
  for (double& v : p.data) v = std::max(v, 0.0);
  return p;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr float kExposureSeconds = 0.01f;

}  // namespace

// ---------------------------------------------------------------------------
// Scenes

void SceneSpec::validate() const {
  require(width >= 8 && height >= 8, ErrorKind::Validation, "scene must be at least 8x8");
  require(train_views >= 1 && test_views >= 1, ErrorKind::Validation,
          "scene needs at least one train and one test view");
  require(backdrop_grid >= 1 && blobs >= 0, ErrorKind::Validation, "bad scene content counts");
  require(focal > 0.0 && std::isfinite(focal), ErrorKind::Validation, "focal must be positive");
  require(iso > 0.0 && exposure > 0.0 && tonemap_gain > 0.0, ErrorKind::Validation,
          "iso, exposure and tonemap gain must be positive");
  require(white_level > black_level, ErrorKind::Validation, "white level must exceed black level");
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  get_if(j, "width", s.width);
  get_if(j, "height", s.height);
  get_if(j, "train_views", s.train_views);
  get_if(j, "test_views", s.test_views);
  get_if(j, "backdrop_grid", s.backdrop_grid);
  get_if(j, "blobs", s.blobs);
  get_if(j, "focal", s.focal);
  get_if(j, "iso", s.iso);
  get_if(j, "exposure", s.exposure);
  get_if(j, "tonemap_gain", s.tonemap_gain);
  get_if(j, "zero_noise", s.zero_noise);
  if (j.contains("noise_mode")) s.noise_mode = noise_mode_from_string(j.at("noise_mode"));
  if (j.contains("distortion")) s.distortion = distortion_from_json(j.at("distortion"));
  get_if(j, "black_level", s.black_level);
  get_if(j, "white_level", s.white_level);
  get_if(j, "noise_model", s.noise_model);
  get_if(j, "seed", s.seed);
  s.validate();
  return s;
}

json to_json(const SceneSpec& s) {
  return {{"width", s.width},
          {"height", s.height},
          {"train_views", s.train_views},
          {"test_views", s.test_views},
          {"backdrop_grid", s.backdrop_grid},
          {"blobs", s.blobs},
          {"focal", s.focal},
          {"iso", s.iso},
          {"exposure", s.exposure},
          {"tonemap_gain", s.tonemap_gain},
          {"zero_noise", s.zero_noise},
          {"noise_mode", to_string(s.noise_mode)},
          {"distortion", distortion_to_json(s.distortion)},
          {"black_level", s.black_level},
          {"white_level", s.white_level},
          {"noise_model", s.noise_model},
          {"seed", s.seed}};
}

GaussianCloud reference_cloud(const SceneSpec& spec) {
  spec.validate();
  GaussianCloud cloud;
  cloud.channels = 1;
  CounterRng rng(stream_key(spec.seed, 0x5343454e45ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };

  // Backdrop: overlapping flat gaussians on the z = 1.5 plane.
  const int g = spec.backdrop_grid;
  const double half = 3.3;
  const double spacing = g > 1 ? 2.0 * half / (g - 1) : 2.0 * half;
  for (int iy = 0; iy < g; ++iy) {
    for (int ix = 0; ix < g; ++ix) {
      Gaussian3D b;
      b.mu = {g > 1 ? -half + ix * spacing : 0.0, g > 1 ? -half + iy * spacing : 0.0, 1.5};
      const double s = std::log(0.6 * spacing);
      b.log_scale = {s, s, std::log(0.02)};
      b.color_raw = {softplus_inverse(uniform(0.04, 0.2) * spec.exposure)};
      b.opacity_logit = logit(0.98);
      cloud.gaussians.push_back(std::move(b));
    }
  }

  for (int i = 0; i < spec.blobs; ++i) {
    Gaussian3D b;
    b.mu = {uniform(-1.2, 1.2), uniform(-0.9, 0.9), uniform(-0.6, 0.9)};
    const double base = uniform(std::log(0.1), std::log(0.3));
    for (double& s : b.log_scale) s = base + uniform(-0.5, 0.5);
    double norm = 0.0;
    for (double& q : b.rot) {
      q = normal(rng);
      norm += q * q;
    }
    norm = std::sqrt(norm);
    for (double& q : b.rot) q /= norm;
    b.color_raw = {softplus_inverse(std::exp(uniform(std::log(0.06), std::log(0.9))) *
                                    spec.exposure)};
    b.opacity_logit = logit(0.95);
    cloud.gaussians.push_back(std::move(b));
  }
  cloud.reset_optimizer();
  return cloud;
}

std::vector<CameraModel> reference_cameras(const SceneSpec& spec) {
  spec.validate();
  const int total = spec.train_views + spec.test_views;

  // Sunflower layout over an ellipse of eye positions.
  std::vector<std::array<double, 3>> eyes;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < total; ++i) {
    const double r = std::sqrt((i + 0.5) / total);
    const double th = i * golden;
    eyes.push_back({1.0 * r * std::cos(th), 0.7 * r * std::sin(th), -4.0});
  }

  std::vector<bool> is_test(total, false);
  for (int j = 0; j < spec.test_views; ++j) {
    is_test[static_cast<int>((j + 0.5) * total / spec.test_views)] = true;
  }
  std::vector<int> train, test;
  for (int i = 0; i < total; ++i) (is_test[i] ? test : train).push_back(i);

  // Farthest-point order: the most central eye first, then greedily spread.
  auto dist2 = [&](int a, int b) {
    const double dx = eyes[a][0] - eyes[b][0], dy = eyes[a][1] - eyes[b][1];
    return dx * dx + dy * dy;
  };
  std::vector<int> ordered;
  {
    int first = train.front();
    for (int i : train) {
      if (eyes[i][0] * eyes[i][0] + eyes[i][1] * eyes[i][1] <
          eyes[first][0] * eyes[first][0] + eyes[first][1] * eyes[first][1]) {
        first = i;
      }
    }
    ordered.push_back(first);
    std::vector<double> best(total, std::numeric_limits<double>::infinity());
    while (ordered.size() < train.size()) {
      const int last = ordered.back();
      int pick = -1;
      for (int i : train) {
        best[i] = std::min(best[i], dist2(i, last));
        if (std::find(ordered.begin(), ordered.end(), i) != ordered.end()) continue;
        if (pick < 0 || best[i] > best[pick]) pick = i;
      }
      ordered.push_back(pick);
    }
  }

  std::vector<CameraModel> cams;
  auto make = [&](int i) {
    CameraModel c = CameraModel::look_at(eyes[i], {0.0, 0.0, 0.5}, {0.0, 1.0, 0.0}, spec.focal,
                                         spec.focal, spec.width, spec.height);
    c.distortion = spec.distortion;
    return c;
  };
  for (int i : ordered) cams.push_back(make(i));
  for (int i : test) cams.push_back(make(i));
  return cams;
}

NoiseModelParams crop_noise_model(const NoiseModelParams& model, int width, int height) {
  NoiseModelParams out = model;
  auto crop = [&](const ImagePlane& src) {
    if (src.size() == 0) return ImagePlane(width, height, 0.0);
    require(src.width >= width && src.height >= height, ErrorKind::Validation,
            "fixed-pattern map is smaller than the requested crop");
    ImagePlane dst(width, height);
    const int x0 = (src.width - width) / 2;
    const int y0 = (src.height - height) / 2;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) dst.at(x, y) = src.at(x0 + x, y0 + y);
    }
    return dst;
  };
  out.n_fp_k = crop(model.n_fp_k);
  out.n_fp_b = crop(model.n_fp_b);
  return out;
}

ImagePlane quantize_like_raw(const ImagePlane& plane, float black_level, float white_level) {
  return normalize(denormalize(plane, black_level, white_level, 100.0f, kExposureSeconds));
}

Dataset synthesize_scene(const SceneSpec& spec, const NoiseModelParams& noise,
                         const fs::path& out_dir) {
  spec.validate();
  const NoiseModelParams model = crop_noise_model(noise, spec.width, spec.height);
  model.validate();
  const IsoNoiseParams params = params_at_iso(model, spec.iso);

  const GaussianCloud gt = reference_cloud(spec);
  const std::vector<CameraModel> cams = reference_cameras(spec);
  fs::create_directories(out_dir / "clean");
  fs::create_directories(out_dir / "noisy");

  Dataset ds;
  ds.dir = out_dir;
  ds.width = spec.width;
  ds.height = spec.height;
  ds.iso = spec.iso;
  ds.tonemap_gain = spec.tonemap_gain;
  ds.black_level = spec.black_level;
  ds.white_level = spec.white_level;
  ds.zero_noise = spec.zero_noise;
  ds.noise = model;
  ds.ground_truth = gt;

  const DistortionMap map = build_distortion_map(cams.front());
  json views = json::array();
  const auto iso = static_cast<float>(spec.iso);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const bool train = static_cast<int>(i) < spec.train_views;
    const std::size_t local = train ? i : i - spec.train_views;
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03zu", train ? "train" : "test", local);

    const RenderResult r = render(gt, cams[i]);
    const RawImage clean_raw =
        denormalize(apply_map(r.image[0], map), spec.black_level, spec.white_level, iso,
                    kExposureSeconds);
    DatasetView v;
    v.name = name;
    v.camera = cams[i];
    v.clean = normalize(clean_raw);
    RawImage noisy_raw = clean_raw;
    if (!spec.zero_noise) {
      const ImagePlane n = sample_noise(clamp_nonnegative(v.clean), params,
                                        stream_key(spec.seed, 0x4e4f495345ULL, i), spec.noise_mode);
      ImagePlane noisy = v.clean;
      for (std::size_t p = 0; p < noisy.data.size(); ++p) noisy.data[p] += n.data[p];
      noisy_raw = denormalize(noisy, spec.black_level, spec.white_level, iso, kExposureSeconds);
    }
    v.noisy = normalize(noisy_raw);

    const std::string clean_rel = "clean/" + v.name + ".rawf";
    const std::string noisy_rel = "noisy/" + v.name + ".rawf";
    save_raw(clean_raw, out_dir / clean_rel);
    save_raw(noisy_raw, out_dir / noisy_rel);
    views.push_back({{"name", v.name},
                     {"split", train ? "train" : "test"},
                     {"camera", to_json(v.camera)},
                     {"clean", clean_rel},
                     {"noisy", noisy_rel}});
    (train ? ds.train : ds.test).push_back(std::move(v));
  }

  save_noise_model(model, out_dir / "noise_model.json");
  save_cloud(gt, out_dir / "ground_truth.gcld");
  const json meta = {{"format", "rawsplat-dataset"},
                     {"width", spec.width},
                     {"height", spec.height},
                     {"iso", spec.iso},
                     {"tonemap_gain", spec.tonemap_gain},
                     {"black_level", spec.black_level},
                     {"white_level", spec.white_level},
                     {"zero_noise", spec.zero_noise},
                     {"noise_model", "noise_model.json"},
                     {"ground_truth", "ground_truth.gcld"},
                     {"scene", to_json(spec)},
                     {"views", views}};
  write_text(out_dir / "dataset.json", meta.dump(2) + "\n");
  return ds;
}

Dataset load_dataset(const fs::path& dir) {
  const json j = read_json(dir / "dataset.json");
  Dataset ds;
  try {
    require(j.value("format", "") == "rawsplat-dataset", ErrorKind::Format,
            "not a rawsplat dataset: " + dir.string());
    ds.dir = dir;
    ds.width = j.at("width");
    ds.height = j.at("height");
    ds.iso = j.at("iso");
    ds.tonemap_gain = j.at("tonemap_gain");
    ds.black_level = j.at("black_level");
    ds.white_level = j.at("white_level");
    ds.zero_noise = j.at("zero_noise");
    ds.noise = load_noise_model(dir / j.at("noise_model").get<std::string>());
    if (j.contains("ground_truth") && !j.at("ground_truth").get<std::string>().empty()) {
      ds.ground_truth = load_cloud(dir / j.at("ground_truth").get<std::string>());
    }
    for (const json& v : j.at("views")) {
      DatasetView view;
      view.name = v.at("name");
      view.camera = camera_from_json(v.at("camera"));
      view.clean = normalize(load_raw(dir / v.at("clean").get<std::string>()));
      view.noisy = normalize(load_raw(dir / v.at("noisy").get<std::string>()));
      require(view.clean.width == ds.width && view.clean.height == ds.height &&
                  view.noisy.same_shape(view.clean),
              ErrorKind::Validation, "view " + view.name + " does not match the dataset size");
      const std::string split = v.at("split");
      require(split == "train" || split == "test", ErrorKind::Format, "bad split " + split);
      (split == "train" ? ds.train : ds.test).push_back(std::move(view));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, (dir / "dataset.json").string() + ": " + e.what());
  }
  require(!ds.train.empty() && !ds.test.empty(), ErrorKind::Validation,
          "dataset needs train and test views");
  return ds;
}

// ---------------------------------------------------------------------------
// Configs

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Ldr: return "ldr";
    case TrainMode::HdrRawnerf: return "hdr_rawnerf";
    case TrainMode::Nrr: return "nrr";
  }
  return "unknown";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "ldr" || s == "3dgs") return TrainMode::Ldr;
  if (s == "hdr_rawnerf" || s == "hdr" || s == "rawnerf") return TrainMode::HdrRawnerf;
  if (s == "nrr") return TrainMode::Nrr;
  fail(ErrorKind::Validation, "unknown training mode '" + s + "'");
}

void TrainConfig::validate() const {
  require(iterations >= 1, ErrorKind::Validation, "iterations must be positive");
  require(view_count >= 0, ErrorKind::Validation, "view_count must be non-negative");
  require(eval_interval >= 1, ErrorKind::Validation, "eval_interval must be positive");
  require(halt_after >= 0, ErrorKind::Validation, "halt_after must be non-negative");
  weights.validate();
  require(lr.position_initial > 0 && lr.position_final > 0 && lr.rotation >= 0 && lr.scale >= 0 &&
              lr.color >= 0 && lr.opacity >= 0,
          ErrorKind::Validation, "learning rates must be non-negative");
  require(densify.interval >= 1 && densify.grad_threshold > 0 && densify.scale_split > 0 &&
              densify.opacity_prune >= 0 && densify.opacity_prune < 1,
          ErrorKind::Validation, "bad densification schedule");
  require(extractor.lr_initial >= 0 && extractor.lr_decayed >= 0 && extractor.start_iter >= 0,
          ErrorKind::Validation, "bad extractor schedule");
  require(init.points >= 1 && init.opacity > 0 && init.opacity < 1 && init.color > 0,
          ErrorKind::Validation, "bad initialization");
  require(render.tile_size >= 1 && render.near_plane > 0, ErrorKind::Validation,
          "bad render options");
}

TrainConfig train_config_from_json(const json& j, const fs::path& base_dir) {
  TrainConfig c;
  try {
    if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode"));
    if (j.contains("dataset")) c.dataset = resolve(base_dir, j.at("dataset"));
    if (j.contains("noise_model")) c.noise_model = resolve(base_dir, j.at("noise_model"));
    get_if(j, "iterations", c.iterations);
    get_if(j, "view_count", c.view_count);
    get_if(j, "eval_interval", c.eval_interval);
    get_if(j, "checkpoints", c.checkpoints);
    get_if(j, "seed", c.seed);
    get_if(j, "halt_after", c.halt_after);
    get_if(j, "snapshots", c.snapshots);
    if (j.contains("loss")) {
      const json& l = j.at("loss");
      get_if(l, "lambda_dssim", c.weights.lambda_dssim);
      get_if(l, "lambda_nd", c.weights.lambda_nd);
      get_if(l, "lambda_cov", c.weights.lambda_cov);
      get_if(l, "epsilon", c.weights.epsilon);
      get_if(l, "cov_patch", c.weights.cov_patch);
    }
    if (j.contains("routing")) {
      const json& r = j.at("routing");
      get_if(r, "recon_to_noise", c.routing.recon_to_noise);
      get_if(r, "nll_sigma_to_render", c.routing.nll_sigma_to_render);
      get_if(r, "cov_sigma_to_render", c.routing.cov_sigma_to_render);
    }
    if (j.contains("lr")) {
      const json& l = j.at("lr");
      get_if(l, "position_initial", c.lr.position_initial);
      get_if(l, "position_final", c.lr.position_final);
      get_if(l, "rotation", c.lr.rotation);
      get_if(l, "scale", c.lr.scale);
      get_if(l, "color", c.lr.color);
      get_if(l, "opacity", c.lr.opacity);
    }
    if (j.contains("densify")) {
      const json& d = j.at("densify");
      get_if(d, "interval", c.densify.interval);
      get_if(d, "from_iter", c.densify.from_iter);
      get_if(d, "until_iter", c.densify.until_iter);
      get_if(d, "grad_threshold", c.densify.grad_threshold);
      get_if(d, "scale_split", c.densify.scale_split);
      get_if(d, "opacity_prune", c.densify.opacity_prune);
      get_if(d, "opacity_reset_interval", c.densify.opacity_reset_interval);
    }
    if (j.contains("extractor")) {
      const json& e = j.at("extractor");
      if (e.contains("init")) c.extractor.init = resolve(base_dir, e.at("init")).string();
      get_if(e, "lr_initial", c.extractor.lr_initial);
      get_if(e, "lr_decayed", c.extractor.lr_decayed);
      get_if(e, "milestone", c.extractor.milestone);
      get_if(e, "start_iter", c.extractor.start_iter);
    }
    if (j.contains("init")) {
      const json& i = j.at("init");
      get_if(i, "points", c.init.points);
      get_if(i, "opacity", c.init.opacity);
      get_if(i, "color", c.init.color);
    }
    if (j.contains("render")) {
      const json& r = j.at("render");
      get_if(r, "near_plane", c.render.near_plane);
      get_if(r, "dilation", c.render.dilation);
      get_if(r, "mahalanobis_cutoff", c.render.mahalanobis_cutoff);
      get_if(r, "alpha_max", c.render.alpha_max);
      get_if(r, "transmittance_floor", c.render.transmittance_floor);
      get_if(r, "tile_size", c.render.tile_size);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  return train_config_from_json(read_json(path), path.parent_path());
}

json to_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"dataset", c.dataset.string()},
          {"noise_model", c.noise_model.string()},
          {"iterations", c.iterations},
          {"view_count", c.view_count},
          {"eval_interval", c.eval_interval},
          {"checkpoints", c.checkpoints},
          {"seed", c.seed},
          {"halt_after", c.halt_after},
          {"snapshots", c.snapshots},
          {"loss",
           {{"lambda_dssim", c.weights.lambda_dssim},
            {"lambda_nd", c.weights.lambda_nd},
            {"lambda_cov", c.weights.lambda_cov},
            {"epsilon", c.weights.epsilon},
            {"cov_patch", c.weights.cov_patch}}},
          {"routing",
           {{"recon_to_noise", c.routing.recon_to_noise},
            {"nll_sigma_to_render", c.routing.nll_sigma_to_render},
            {"cov_sigma_to_render", c.routing.cov_sigma_to_render}}},
          {"lr",
           {{"position_initial", c.lr.position_initial},
            {"position_final", c.lr.position_final},
            {"rotation", c.lr.rotation},
            {"scale", c.lr.scale},
            {"color", c.lr.color},
            {"opacity", c.lr.opacity}}},
          {"densify",
           {{"interval", c.densify.interval},
            {"from_iter", c.densify.from_iter},
            {"until_iter", c.densify.until_iter},
            {"grad_threshold", c.densify.grad_threshold},
            {"scale_split", c.densify.scale_split},
            {"opacity_prune", c.densify.opacity_prune},
            {"opacity_reset_interval", c.densify.opacity_reset_interval}}},
          {"extractor",
           {{"init", c.extractor.init},
            {"lr_initial", c.extractor.lr_initial},
            {"lr_decayed", c.extractor.lr_decayed},
            {"milestone", c.extractor.milestone},
            {"start_iter", c.extractor.start_iter}}},
          {"init",
           {{"points", c.init.points}, {"opacity", c.init.opacity}, {"color", c.init.color}}},
          {"render",
           {{"near_plane", c.render.near_plane},
            {"dilation", c.render.dilation},
            {"mahalanobis_cutoff", c.render.mahalanobis_cutoff},
            {"alpha_max", c.render.alpha_max},
            {"transmittance_floor", c.render.transmittance_floor},
            {"tile_size", c.render.tile_size}}}};
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_csv_header() {
  return "iteration,raw_psnr,tonemapped_psnr,gaussians,aniso_median,aniso_p95,loss_total,"
         "loss_recon,loss_nll,loss_cov";
}

std::string metrics_csv_line(const MetricsRow& r) {
  return std::to_string(r.iteration) + "," + fmt(r.raw_psnr) + "," + fmt(r.tonemapped_psnr) + "," +
         std::to_string(r.gaussians) + "," + fmt(r.aniso_median) + "," + fmt(r.aniso_p95) + "," +
         fmt(r.loss_total) + "," + fmt(r.loss_recon) + "," + fmt(r.loss_nll) + "," +
         fmt(r.loss_cov);
}

namespace {

MetricsRow parse_metrics_line(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
  require(f.size() == 10, ErrorKind::Format, "bad metrics row: " + line);
  MetricsRow r;
  r.iteration = std::stoll(f[0]);
  r.raw_psnr = std::strtod(f[1].c_str(), nullptr);
  r.tonemapped_psnr = std::strtod(f[2].c_str(), nullptr);
  r.gaussians = std::stoull(f[3]);
  r.aniso_median = std::strtod(f[4].c_str(), nullptr);
  r.aniso_p95 = std::strtod(f[5].c_str(), nullptr);
  r.loss_total = std::strtod(f[6].c_str(), nullptr);
  r.loss_recon = std::strtod(f[7].c_str(), nullptr);
  r.loss_nll = std::strtod(f[8].c_str(), nullptr);
  r.loss_cov = std::strtod(f[9].c_str(), nullptr);
  return r;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& r : rows) out += metrics_csv_line(r) + "\n";
  return out;
}

std::string timing_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "iteration,wall_ms_per_render\n";
  for (const auto& r : rows) out += std::to_string(r.iteration) + "," + fmt(r.wall_ms_per_render) + "\n";
  return out;
}

// Inverse of tone_map on its unclipped range.
ImagePlane untone(const ImagePlane& ldr, double gain) {
  ImagePlane out(ldr.width, ldr.height);
  for (std::size_t i = 0; i < ldr.size(); ++i) {
    out.data[i] = std::pow(std::clamp(ldr.data[i], 0.0, 1.0), 2.2) / gain;
  }
  return out;
}

double scene_extent(const std::vector<DatasetView>& views) {
  std::array<double, 3> mean{0, 0, 0};
  std::vector<std::array<double, 3>> centers;
  for (const auto& v : views) centers.push_back(camera_center(v.camera));
  for (const auto& c : centers) {
    for (int k = 0; k < 3; ++k) mean[k] += c[k] / centers.size();
  }
  double radius = 0.0;
  for (const auto& c : centers) {
    radius = std::max(radius, std::hypot(c[0] - mean[0], c[1] - mean[1], c[2] - mean[2]));
  }
  return 1.1 * (radius > 0.0 ? radius : 1.0);
}

// Point cloud sampled from the ground-truth gaussians, standing in for a
// structure-from-motion initialization.
GaussianCloud initial_cloud(const TrainConfig& cfg, const Dataset& ds) {
  require(ds.ground_truth.has_value() && ds.ground_truth->size() > 0, ErrorKind::Validation,
          "dataset has no ground-truth cloud to seed the initial points");
  const GaussianCloud& gt = *ds.ground_truth;
  CounterRng rng(stream_key(cfg.seed, 0x494e4954ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec3> pts;
  for (int p = 0; p < cfg.init.points; ++p) {
    const auto idx = static_cast<std::size_t>(rng() % gt.size());
    const Gaussian3D& g = gt.gaussians[idx];
    const Mat3 r = quat_to_rotation(g.rot);
    const auto s = g.scale();
    const Vec3 z(normal(rng) * s[0], normal(rng) * s[1], normal(rng) * s[2]);
    pts.push_back(Vec3(g.mu[0], g.mu[1], g.mu[2]) + r * z);
  }
  double color = cfg.init.color;
  if (cfg.mode == TrainMode::Ldr) color = std::pow(std::min(color * ds.tonemap_gain, 1.0), 1 / 2.2);

  GaussianCloud cloud;
  cloud.channels = 1;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::array<double, 3> nn{1e300, 1e300, 1e300};
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      double d = (pts[i] - pts[j]).norm();
      for (double& slot : nn) {
        if (d < slot) std::swap(d, slot);
      }
    }
    double mean = 0.0;
    int count = 0;
    for (double d : nn) {
      if (d < 1e300) {
        mean += d;
        ++count;
      }
    }
    const double s = std::log(std::max(count > 0 ? mean / count : 0.1, 1e-3));
    Gaussian3D g;
    g.mu = {pts[i].x(), pts[i].y(), pts[i].z()};
    g.log_scale = {s, s, s};
    g.color_raw = {softplus_inverse(color)};
    g.opacity_logit = logit(cfg.init.opacity);
    cloud.gaussians.push_back(std::move(g));
  }
  cloud.reset_optimizer();
  cloud.reset_statistics();
  return cloud;
}

std::vector<double> learning_rates(const GaussianCloud& cloud, const TrainConfig& cfg,
                                   double extent, std::int64_t it) {
  const double t = std::clamp(static_cast<double>(it) / cfg.iterations, 0.0, 1.0);
  const double pos = extent * std::exp(std::log(cfg.lr.position_initial) * (1.0 - t) +
                                       std::log(cfg.lr.position_final) * t);
  const int s = cloud.stride();
  std::vector<double> lr(cloud.size() * s);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double* p = lr.data() + i * s;
    for (int k = 0; k < 3; ++k) p[ParamLayout::kMu + k] = pos;
    for (int k = 0; k < 4; ++k) p[ParamLayout::kRot + k] = cfg.lr.rotation;
    for (int k = 0; k < 3; ++k) p[ParamLayout::kLogScale + k] = cfg.lr.scale;
    for (int k = 0; k < cloud.channels; ++k) p[ParamLayout::kColor + k] = cfg.lr.color;
    p[ParamLayout::opacity(cloud.channels)] = cfg.lr.opacity;
  }
  return lr;
}

// Caps every opacity at 0.01 and clears the affected moments.
void reset_opacity(GaussianCloud& cloud) {
  const double cap = logit(0.01);
  const int s = cloud.stride();
  const int o = ParamLayout::opacity(cloud.channels);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto& g = cloud.gaussians[i];
    g.opacity_logit = std::min(g.opacity_logit, cap);
    if (cloud.adam.m.size() == cloud.size() * s) {
      cloud.adam.m[i * s + o] = 0.0;
      cloud.adam.v[i * s + o] = 0.0;
    }
  }
}

json config_identity(const TrainConfig& c) {
  json j = to_json(c);
  j.erase("halt_after");
  j.erase("checkpoints");
  return j;
}

struct LossAccum {
  double total = 0.0, recon = 0.0, nll = 0.0, cov = 0.0, render_ms = 0.0;
  std::int64_t count = 0;

  json to_json() const {
    return {{"total", total}, {"recon", recon}, {"nll", nll},
            {"cov", cov},     {"render_ms", render_ms}, {"count", count}};
  }
  static LossAccum from_json(const json& j) {
    LossAccum a;
    a.total = j.at("total");
    a.recon = j.at("recon");
    a.nll = j.at("nll");
    a.cov = j.at("cov");
    a.render_ms = j.at("render_ms");
    a.count = j.at("count");
    return a;
  }
};

void write_checkpoint(const fs::path& dir, std::int64_t iteration, const TrainConfig& cfg,
                      const GaussianCloud& cloud, const std::optional<ExtractorNet>& net,
                      const LossAccum& acc, const std::vector<MetricsRow>& rows) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  save_cloud(cloud, tmp / "cloud.gcld", true);
  if (net) save_extractor(*net, tmp / "extractor.xnet", true);
  write_text(tmp / "metrics.csv", metrics_csv(rows));
  write_text(tmp / "timing.csv", timing_csv(rows));
  const json state = {{"iteration", iteration},
                      {"config", config_identity(cfg)},
                      {"accumulator", acc.to_json()}};
  write_text(tmp / "state.json", state.dump(2) + "\n");
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

std::vector<MetricsRow> read_rows(const fs::path& metrics, const fs::path& timing) {
  std::vector<MetricsRow> rows;
  std::stringstream ms(read_text(metrics));
  std::string line;
  std::getline(ms, line);
  while (std::getline(ms, line)) {
    if (!line.empty()) rows.push_back(parse_metrics_line(line));
  }
  std::stringstream ts(read_text(timing));
  std::getline(ts, line);
  for (auto& r : rows) {
    if (!std::getline(ts, line)) break;
    const auto comma = line.find(',');
    if (comma != std::string::npos) r.wall_ms_per_render = std::strtod(line.c_str() + comma + 1, nullptr);
  }
  return rows;
}

}  // namespace

MetricsRow evaluate(const GaussianCloud& cloud, const Dataset& ds, bool ldr,
                    const RenderOptions& options) {
  require(!ds.test.empty(), ErrorKind::Validation, "dataset has no test views");
  MetricsRow row;
  double raw_sum = 0.0, tm_sum = 0.0;
  for (const DatasetView& v : ds.test) {
    const DistortionMap map = build_distortion_map(v.camera);
    ImagePlane pred = apply_map(render(cloud, v.camera, options).image[0], map);
    if (ldr) pred = untone(pred, ds.tonemap_gain);
    pred = quantize_like_raw(pred, ds.black_level, ds.white_level);
    raw_sum += psnr_masked(pred, v.clean, map.mask);
    tm_sum += psnr_masked(tone_map(pred, ds.tonemap_gain), tone_map(v.clean, ds.tonemap_gain),
                          map.mask);
  }
  row.raw_psnr = raw_sum / ds.test.size();
  row.tonemapped_psnr = tm_sum / ds.test.size();
  row.gaussians = cloud.size();
  if (cloud.size() > 0) {
    const AnisotropyStats a = anisotropy_stats(cloud);
    row.aniso_median = a.median;
    row.aniso_p95 = a.p95;
  }
  return row;
}

TrainResult train(const TrainConfig& config, const fs::path& out_dir, bool resume) {
  require(!config.dataset.empty(), ErrorKind::Validation, "train config has no dataset");
  return train_on(config, load_dataset(config.dataset), out_dir, resume);
}

TrainResult train_on(const TrainConfig& cfg, const Dataset& ds, const fs::path& out_dir,
                     bool resume) {
  cfg.validate();
  const std::size_t n_views = cfg.view_count == 0 ? ds.train.size() : cfg.view_count;
  require(n_views >= 1 && n_views <= ds.train.size(), ErrorKind::Validation,
          "view_count exceeds the training views in the dataset");
  fs::create_directories(out_dir);

  NoiseModelParams model = ds.noise;
  if (!cfg.noise_model.empty()) {
    model = crop_noise_model(load_noise_model(cfg.noise_model), ds.width, ds.height);
  }
  const IsoNoiseParams params = params_at_iso(model, ds.iso);
  const double extent = scene_extent(ds.train);

  std::vector<DistortionMap> maps;
  for (std::size_t i = 0; i < n_views; ++i) maps.push_back(build_distortion_map(ds.train[i].camera));
  std::vector<ImagePlane> ldr_targets;
  if (cfg.mode == TrainMode::Ldr) {
    for (std::size_t i = 0; i < n_views; ++i) {
      ldr_targets.push_back(tone_map(ds.train[i].noisy, ds.tonemap_gain));
    }
  }

  TrainResult result;
  result.cloud = initial_cloud(cfg, ds);
  std::optional<ExtractorNet>& net = result.extractor;
  if (cfg.mode == TrainMode::Nrr) {
    net = cfg.extractor.init.empty() ? ExtractorNet::create(stream_key(cfg.seed, 0x584e4554ULL))
                                     : load_extractor(cfg.extractor.init);
    net->adam = AdamState{};
    net->adam.resize(net->parameter_count());
  }

  GaussianCloud& cloud = result.cloud;
  std::int64_t start = 0;
  LossAccum acc;
  const fs::path ckpt = out_dir / "checkpoint";
  if (resume && fs::exists(ckpt / "state.json")) {
    const json state = read_json(ckpt / "state.json");
    require(state.at("config") == config_identity(cfg), ErrorKind::Validation,
            "checkpoint in " + ckpt.string() + " was written by a different configuration");
    start = state.at("iteration");
    acc = LossAccum::from_json(state.at("accumulator"));
    cloud = load_cloud(ckpt / "cloud.gcld");
    if (net) net = load_extractor(ckpt / "extractor.xnet");
    result.metrics = read_rows(ckpt / "metrics.csv", ckpt / "timing.csv");
  }
  if (net) {
    net->schedule = {cfg.extractor.lr_initial, cfg.extractor.lr_decayed, cfg.extractor.milestone};
  }

  std::optional<SnapshotExporter> snapshots;
  std::vector<SnapshotView> snapshot_views;
  if (!cfg.snapshots.empty()) {
    snapshots.emplace(std::set<std::int64_t>(cfg.snapshots.begin(), cfg.snapshots.end()),
                      out_dir / "snapshots", ds.tonemap_gain);
    for (const DatasetView& v : ds.test) {
      ImagePlane ref = ds.ground_truth ? render(*ds.ground_truth, v.camera).image[0] : v.clean;
      snapshot_views.push_back({v.name, v.camera, std::move(ref)});
    }
    if (start == 0) snapshots->capture(0, cloud, snapshot_views);
  }

  const DensifyThresholds thresholds{cfg.densify.grad_threshold, cfg.densify.scale_split * extent,
                                     cfg.densify.opacity_prune};
  const bool ldr = cfg.mode == TrainMode::Ldr;

  for (std::int64_t it = start + 1; it <= cfg.iterations; ++it) {
    const std::size_t vi = stream_key(cfg.seed, static_cast<std::uint64_t>(it)) % n_views;
    const DatasetView& view = ds.train[vi];
    const DistortionMap& map = maps[vi];

    const auto t0 = std::chrono::steady_clock::now();
    RenderResult fwd = render(cloud, view.camera, cfg.render);
    acc.render_ms +=
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    double total = 0.0, recon = 0.0, nll_v = 0.0, cov_v = 0.0;
    ImagePlane grad;
    switch (cfg.mode) {
      case TrainMode::Ldr: {
        const ScalarLoss l =
            loss_3dgs(apply_map(fwd.image[0], map), ldr_targets[vi], cfg.weights.lambda_dssim);
        total = recon = l.value;
        grad = apply_map_backward(l.grad, map);
        break;
      }
      case TrainMode::HdrRawnerf: {
        const RawNerfLoss l =
            loss_rawnerf(apply_map(fwd.image[0], map), view.noisy, cfg.weights.epsilon, map.mask);
        total = recon = l.value;
        grad = apply_map_backward(l.grad_pred, map);
        break;
      }
      case TrainMode::Nrr: {
        ExtractorCache cache;
        const ImagePlane n_hat = extract(view.noisy, params.n_fp, *net, &cache);
        const LossReport rep =
            loss_nrr(fwd.image[0], view.noisy, n_hat, params, cfg.weights, map, cfg.routing);
        total = rep.total;
        recon = rep.recon;
        nll_v = rep.nll;
        cov_v = rep.cov;
        grad = rep.grad_render;
        if (it >= cfg.extractor.start_iter && std::isfinite(total)) {
          net->step(net->backward(cache, rep.grad_noise).params);
        }
        break;
      }
    }

    if (!std::isfinite(total)) {
      const fs::path diag = out_dir / "diagnostic";
      write_checkpoint(diag, it, cfg, cloud, net, acc, result.metrics);
      fail(ErrorKind::Training, "non-finite loss at iteration " + std::to_string(it) +
                                    "; state written to " + diag.string());
    }
    acc.total += total;
    acc.recon += recon;
    acc.nll += nll_v;
    acc.cov += cov_v;
    acc.count += 1;

    const std::vector<ImagePlane> grads_img{std::move(grad)};
    const RenderGradients g = render_backward(cloud, view.camera, fwd.trace, grads_img);
    if (it <= cfg.densify.until_iter) {
      cloud.accumulate_statistics(g.screen_grad_norm, g.visible, g.params);
    }
    std::vector<double> packed = cloud.pack();
    adam_step(packed, g.params, learning_rates(cloud, cfg, extent, it), cloud.adam);
    cloud.unpack(packed);
    cloud.renormalize_rotations();

    if (it >= cfg.densify.from_iter && it <= cfg.densify.until_iter &&
        it % cfg.densify.interval == 0) {
      densify_and_prune(cloud, thresholds, stream_key(cfg.seed, static_cast<std::uint64_t>(it), 1));
    }
    if (cfg.densify.opacity_reset_interval > 0 && it <= cfg.densify.until_iter &&
        it % cfg.densify.opacity_reset_interval == 0) {
      reset_opacity(cloud);
    }
    if (snapshots) snapshots->capture(it, cloud, snapshot_views);

    if (it % cfg.eval_interval == 0 || it == cfg.iterations) {
      MetricsRow row = evaluate(cloud, ds, ldr, cfg.render);
      row.iteration = it;
      const double n = static_cast<double>(std::max<std::int64_t>(acc.count, 1));
      row.loss_total = acc.total / n;
      row.loss_recon = acc.recon / n;
      row.loss_nll = acc.nll / n;
      row.loss_cov = acc.cov / n;
      row.wall_ms_per_render = acc.render_ms / n;
      result.metrics.push_back(row);
      acc = LossAccum{};
      if (cfg.checkpoints) write_checkpoint(ckpt, it, cfg, cloud, net, acc, result.metrics);
    }
    if (cfg.halt_after > 0 && it == cfg.halt_after) {
      write_checkpoint(ckpt, it, cfg, cloud, net, acc, result.metrics);
      break;
    }
  }

  write_text(out_dir / "metrics.csv", metrics_csv(result.metrics));
  write_text(out_dir / "timing.csv", timing_csv(result.metrics));
  write_text(out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  save_cloud(cloud, out_dir / "cloud.gcld");
  if (net) save_extractor(*net, out_dir / "extractor.xnet");
  return result;
}

// ---------------------------------------------------------------------------
// Pretraining

PretrainConfig pretrain_config_from_json(const json& j, const fs::path& base_dir) {
  PretrainConfig c;
  try {
    if (j.contains("scene")) c.scene = scene_spec_from_json(j.at("scene"));
    if (j.contains("noise_model")) c.noise_model = resolve(base_dir, j.at("noise_model"));
    get_if(j, "steps", c.steps);
    get_if(j, "scenes", c.scenes);
    get_if(j, "lr", c.lr);
    get_if(j, "seed", c.seed);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("pretrain config: ") + e.what());
  }
  require(c.steps >= 0 && c.scenes >= 1 && c.lr > 0, ErrorKind::Validation,
          "bad pretraining config");
  return c;
}

PretrainReport pretrain_extractor(const PretrainConfig& config, const NoiseModelParams& noise,
                                  ExtractorNet& net) {
  const SceneSpec& base = config.scene;
  base.validate();
  const NoiseModelParams model = crop_noise_model(noise, base.width, base.height);
  const IsoNoiseParams params = params_at_iso(model, base.iso);

  // Clean distorted views of the training scenes plus two held-out scenes.
  const int eval_scenes = 2;
  std::vector<std::vector<ImagePlane>> clean;
  for (int s = 0; s < config.scenes + eval_scenes; ++s) {
    SceneSpec spec = base;
    spec.seed = stream_key(config.seed, 0x50524554ULL, static_cast<std::uint64_t>(s));
    const GaussianCloud cloud = reference_cloud(spec);
    std::vector<ImagePlane> views;
    for (const CameraModel& cam : reference_cameras(spec)) {
      const DistortionMap map = build_distortion_map(cam);
      views.push_back(quantize_like_raw(apply_map(render(cloud, cam).image[0], map),
                                        spec.black_level, spec.white_level));
    }
    clean.push_back(std::move(views));
  }

  struct Pair {
    ImagePlane input, target;
  };
  auto make_pair = [&](int scene, std::uint64_t key) {
    const auto& views = clean[scene];
    const ImagePlane& c = views[key % views.size()];
    const ImagePlane n = sample_noise(clamp_nonnegative(c), params, mix64(key), base.noise_mode);
    Pair p{ImagePlane(c.width, c.height), ImagePlane(c.width, c.height)};
    for (std::size_t i = 0; i < c.size(); ++i) {
      p.input.data[i] = c.data[i] + n.data[i] - params.n_fp.data[i];
      p.target.data[i] = n.data[i] - params.n_fp.data[i];
    }
    return p;
  };
  std::vector<Pair> held_out;
  for (int k = 0; k < 8; ++k) {
    held_out.push_back(make_pair(config.scenes + k % eval_scenes,
                                 stream_key(config.seed, 0x484f4c44ULL, static_cast<std::uint64_t>(k))));
  }
  auto held_out_mse = [&] {
    double sum = 0.0;
    std::size_t n = 0;
    for (const Pair& p : held_out) {
      const ImagePlane out = net.forward(p.input);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = out.data[i] - p.target.data[i];
        sum += d * d;
      }
      n += out.size();
    }
    return sum / static_cast<double>(n);
  };

  PretrainReport report;
  report.initial_mse = held_out_mse();
  const LrSchedule saved = net.schedule;
  net.schedule = {config.lr, config.lr, std::numeric_limits<std::int64_t>::max()};
  net.adam = AdamState{};
  net.adam.resize(net.parameter_count());
  for (int step = 0; step < config.steps; ++step) {
    const std::uint64_t key = stream_key(config.seed, 0x53544550ULL, static_cast<std::uint64_t>(step));
    const Pair p = make_pair(static_cast<int>(key % static_cast<std::uint64_t>(config.scenes)),
                             mix64(key));
    ExtractorCache cache;
    const ImagePlane out = net.forward(p.input, &cache);
    ImagePlane grad(out.width, out.height);
    const double scale = 2.0 / static_cast<double>(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      grad.data[i] = scale * (out.data[i] - p.target.data[i]);
    }
    net.step(net.backward(cache, grad).params);
  }
  report.final_mse = held_out_mse();
  net.schedule = saved;
  net.adam = AdamState{};
  net.adam.resize(net.parameter_count());
  return report;
}

// ---------------------------------------------------------------------------
// Sweep

SweepConfig sweep_config_from_json(const json& j, const fs::path& base_dir) {
  SweepConfig c;
  try {
    c.base = train_config_from_json(j.value("base", json::object()), base_dir);
    get_if(j, "view_counts", c.view_counts);
    if (j.contains("modes")) {
      c.modes.clear();
      for (const auto& m : j.at("modes")) c.modes.push_back(train_mode_from_string(m));
    }
    get_if(j, "lambda_nd_full", c.lambda_nd_full);
    get_if(j, "lambda_cov_full", c.lambda_cov_full);
    get_if(j, "lambda_nd_limited", c.lambda_nd_limited);
    get_if(j, "lambda_cov_limited", c.lambda_cov_limited);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("sweep config: ") + e.what());
  }
  require(!c.view_counts.empty() && !c.modes.empty(), ErrorKind::Validation,
          "sweep needs view counts and modes");
  for (int n : c.view_counts) {
    require(n >= 1, ErrorKind::Validation, "sweep view counts must be positive");
  }
  return c;
}

std::vector<SweepRow> experiment_views_sweep(const SweepConfig& config, const fs::path& out_dir) {
  const Dataset ds = load_dataset(config.base.dataset);
  std::vector<SweepRow> rows;
  for (int n : config.view_counts) {
    for (TrainMode mode : config.modes) {
      TrainConfig cfg = config.base;
      cfg.mode = mode;
      cfg.view_count = n;
      if (mode == TrainMode::Nrr) {
        const bool limited = static_cast<std::size_t>(n) < ds.train.size();
        cfg.weights.lambda_nd = limited ? config.lambda_nd_limited : config.lambda_nd_full;
        cfg.weights.lambda_cov = limited ? config.lambda_cov_limited : config.lambda_cov_full;
      }
      const TrainResult r =
          train_on(cfg, ds, out_dir / (to_string(mode) + "_n" + std::to_string(n)));
      rows.push_back({mode, n, r.metrics.back()});
      write_sweep_csv(rows, out_dir / "sweep.csv");
    }
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const fs::path& path) {
  std::string out = "mode,views,raw_psnr,tonemapped_psnr,gaussians,aniso_median,aniso_p95\n";
  for (const SweepRow& r : rows) {
    out += to_string(r.mode) + "," + std::to_string(r.views) + "," + fmt(r.metrics.raw_psnr) +
           "," + fmt(r.metrics.tonemapped_psnr) + "," + std::to_string(r.metrics.gaussians) + "," +
           fmt(r.metrics.aniso_median) + "," + fmt(r.metrics.aniso_p95) + "\n";
  }
  write_text(path, out);
}

}  // namespace rawsplat
