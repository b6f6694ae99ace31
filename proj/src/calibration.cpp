// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <json.hpp>

#include "rawsplat/error.hpp"
#include "rawsplat/rng.hpp"

namespace rawsplat {

void FrameStack::validate() const {
  require(frames.size() >= 2, ErrorKind::InsufficientData, "frame stack needs at least 2 frames");
  const RawImage& first = frames.front();
  for (const RawImage& f : frames) {
    f.validate();
    require(f.width == first.width && f.height == first.height, ErrorKind::Validation,
            "frame stack has mixed dimensions");
    require(f.black_level == first.black_level && f.white_level == first.white_level &&
                f.iso == first.iso && f.exposure_s == first.exposure_s,
            ErrorKind::Validation, "frame stack has mixed metadata");
  }
}

LineFit ols_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size(), ErrorKind::Validation, "ols: length mismatch");
  require(x.size() >= 2, ErrorKind::InsufficientData, "ols: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorKind::RankDeficient, "ols: all abscissae identical");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

std::vector<MeanVarPoint> block_statistics(const FrameStack& stack, int rows, int cols) {
  stack.validate();
  require(stack.kind == StackKind::Flat, ErrorKind::Validation,
          "block statistics expect a flat stack");
  require(rows > 0 && cols > 0, ErrorKind::Validation, "block grid must be positive");
  const int width = static_cast<int>(stack.frames.front().width);
  const int height = static_cast<int>(stack.frames.front().height);
  require(rows <= height && cols <= width, ErrorKind::Validation, "block grid larger than frame");

  std::vector<ImagePlane> planes;
  planes.reserve(stack.frames.size());
  for (const RawImage& f : stack.frames) planes.push_back(normalize(f));

  const int bh = height / rows;
  const int bw = width / cols;
  std::vector<MeanVarPoint> points;
  points.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const ImagePlane& p : planes) {
        for (int y = r * bh; y < (r + 1) * bh; ++y) {
          for (int x = c * bw; x < (c + 1) * bw; ++x) {
            sum += p.at(x, y);
            ++n;
          }
        }
      }
      const double mean = sum / static_cast<double>(n);
      double ss = 0.0;
      for (const ImagePlane& p : planes) {
        for (int y = r * bh; y < (r + 1) * bh; ++y) {
          for (int x = c * bw; x < (c + 1) * bw; ++x) {
            const double d = p.at(x, y) - mean;
            ss += d * d;
          }
        }
      }
      points.push_back({mean, ss / static_cast<double>(n - 1), r * cols + c});
    }
  }
  return points;
}

GainFit fit_gain(const std::vector<MeanVarPoint>& points, double saturation) {
  require(saturation > 0.0, ErrorKind::Validation, "saturation must be positive");
  const double cutoff = saturation / 4.0;
  std::vector<double> x, y;
  for (const MeanVarPoint& p : points) {
    if (p.mean > cutoff) continue;
    x.push_back(p.mean);
    y.push_back(p.variance);
  }
  require(x.size() >= 2, ErrorKind::InsufficientData,
          "fewer than 2 mean-variance points below quarter saturation");
  const LineFit line = ols_line(x, y);
  return {line.slope, line.intercept, x.size(), points.size() - x.size()};
}

ImagePlane fit_fixed_pattern(const FrameStack& dark) {
  dark.validate();
  ImagePlane mean(static_cast<int>(dark.frames.front().width),
                  static_cast<int>(dark.frames.front().height));
  for (const RawImage& f : dark.frames) {
    const ImagePlane p = normalize(f);
    for (std::size_t i = 0; i < p.size(); ++i) mean.data[i] += p.data[i];
  }
  const double n = static_cast<double>(dark.frames.size());
  for (double& v : mean.data) v /= n;
  return mean;
}

double fit_read_sigma(const FrameStack& dark, const ImagePlane& n_fp) {
  dark.validate();
  require(static_cast<int>(dark.frames.front().width) == n_fp.width &&
              static_cast<int>(dark.frames.front().height) == n_fp.height,
          ErrorKind::Validation, "fixed-pattern map does not match dark frames");
  std::vector<ImagePlane> residuals;
  double sum = 0.0;
  std::size_t n = 0;
  for (const RawImage& f : dark.frames) {
    ImagePlane p = normalize(f);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p.data[i] -= n_fp.data[i];
      sum += p.data[i];
    }
    n += p.size();
    residuals.push_back(std::move(p));
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const ImagePlane& p : residuals) {
    for (double v : p.data) ss += (v - mean) * (v - mean);
  }
  return std::sqrt(ss / static_cast<double>(n - 1));
}

NoiseModelParams fit_iso_model(const std::vector<IsoCalibration>& samples) {
  std::set<double> distinct;
  for (const IsoCalibration& s : samples) distinct.insert(s.iso);
  require(!samples.empty(), ErrorKind::InsufficientData, "no ISO samples");
  require(distinct.size() >= 2, ErrorKind::RankDeficient, "need at least 2 distinct ISO values");

  std::vector<double> iso, k, log_k, log_sigma;
  for (const IsoCalibration& s : samples) {
    require(s.k > 0.0 && s.sigma_read > 0.0, ErrorKind::Domain,
            "log fit requires positive k and sigma_read");
    require(s.n_fp.same_shape(samples.front().n_fp), ErrorKind::Validation,
            "fixed-pattern maps differ in shape");
    iso.push_back(s.iso);
    k.push_back(s.k);
    log_k.push_back(std::log(s.k));
    log_sigma.push_back(std::log(s.sigma_read));
  }

  NoiseModelParams model;
  const LineFit gain = ols_line(iso, k);
  model.a_k = gain.slope;
  model.b_k = gain.intercept;
  const LineFit read = ols_line(log_k, log_sigma);
  model.a_read = read.slope;
  model.b_read = read.intercept;
  model.iso_min = *distinct.begin();
  model.iso_max = *distinct.rbegin();

  // Per-pixel OLS shares the ISO design, so the normal equations reduce to
  // centered dot products.
  const int w = samples.front().n_fp.width;
  const int h = samples.front().n_fp.height;
  model.n_fp_k = ImagePlane(w, h);
  model.n_fp_b = ImagePlane(w, h);
  const double n = static_cast<double>(samples.size());
  double mean_iso = 0.0;
  for (double v : iso) mean_iso += v;
  mean_iso /= n;
  double sxx = 0.0;
  for (double v : iso) sxx += (v - mean_iso) * (v - mean_iso);
  for (std::size_t p = 0; p < model.n_fp_k.size(); ++p) {
    double mean_fp = 0.0;
    for (const IsoCalibration& s : samples) mean_fp += s.n_fp.data[p];
    mean_fp /= n;
    double sxy = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      sxy += (iso[i] - mean_iso) * (samples[i].n_fp.data[p] - mean_fp);
    }
    const double slope = sxy / sxx;
    model.n_fp_k.data[p] = slope;
    model.n_fp_b.data[p] = mean_fp - slope * mean_iso;
  }
  model.validate();
  return model;
}

CalibrationReport calibrate(const std::vector<IsoCaptureSet>& captures,
                            const CalibrationOptions& options) {
  CalibrationReport report;
  for (const IsoCaptureSet& set : captures) {
    // Mean-variance points are pooled across exposure times into one regression.
    std::vector<MeanVarPoint> points;
    for (const FrameStack& flats : set.flats) {
      auto block = block_statistics(flats, options.block_rows, options.block_cols);
      points.insert(points.end(), block.begin(), block.end());
    }
    const GainFit gain = fit_gain(points, options.saturation);
    IsoCalibration row;
    row.iso = set.iso;
    row.k = gain.k;
    row.n_fp = fit_fixed_pattern(set.darks);
    row.sigma_read = fit_read_sigma(set.darks, row.n_fp);
    report.gain_fits.push_back(gain);
    report.per_iso.push_back(std::move(row));
  }
  report.model = fit_iso_model(report.per_iso);
  return report;
}

std::vector<IsoCaptureSet> synthesize_captures(const NoiseModelParams& truth,
                                               const std::vector<double>& isos,
                                               const CaptureSynthesis& layout,
                                               std::uint64_t seed) {
  require(layout.width % layout.block_cols == 0 && layout.height % layout.block_rows == 0,
          ErrorKind::Validation, "frame size must be a multiple of the block grid");
  const int blocks = layout.block_rows * layout.block_cols;
  const int bw = layout.width / layout.block_cols;
  const int bh = layout.height / layout.block_rows;
  std::vector<IsoCaptureSet> out;
  for (std::size_t ii = 0; ii < isos.size(); ++ii) {
    const IsoNoiseParams params = params_at_iso(truth, isos[ii]);
    require(params.n_fp.width == layout.width && params.n_fp.height == layout.height,
            ErrorKind::Validation, "fixed-pattern maps do not match the capture size");
    IsoCaptureSet set;
    set.iso = isos[ii];
    auto emit = [&](const ImagePlane& clean, std::uint64_t stream, float exposure) {
      ImagePlane frame = sample_noise(clean, params, stream, layout.mode);
      for (std::size_t i = 0; i < frame.size(); ++i) {
        frame.data[i] = std::min(frame.data[i] + clean.data[i], 1.0);
      }
      return denormalize(frame, layout.black_level, layout.white_level,
                         static_cast<float>(isos[ii]), exposure);
    };
    for (std::size_t e = 0; e < layout.exposure_scales.size(); ++e) {
      ImagePlane clean(layout.width, layout.height);
      for (int y = 0; y < layout.height; ++y) {
        for (int x = 0; x < layout.width; ++x) {
          const int b = (y / bh) * layout.block_cols + x / bw;
          const double t = blocks > 1 ? static_cast<double>(b) / (blocks - 1) : 0.0;
          clean.at(x, y) = layout.exposure_scales[e] * layout.level_min *
                           std::pow(layout.level_max / layout.level_min, t);
        }
      }
      FrameStack stack;
      stack.kind = StackKind::Flat;
      for (int f = 0; f < layout.flats_per_exposure; ++f) {
        stack.frames.push_back(emit(clean, stream_key(seed, ii, e + 1, f),
                                    static_cast<float>(0.01 * layout.exposure_scales[e])));
      }
      set.flats.push_back(std::move(stack));
    }
    const ImagePlane dark(layout.width, layout.height);
    set.darks.kind = StackKind::Dark;
    for (int f = 0; f < layout.darks; ++f) {
      set.darks.frames.push_back(emit(dark, stream_key(seed, ii, 0, f), 0.0f));
    }
    out.push_back(std::move(set));
  }
  return out;
}

void write_capture_manifest(const std::vector<IsoCaptureSet>& captures,
                            const CalibrationOptions& options, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  nlohmann::json j;
  j["block_grid"] = {options.block_rows, options.block_cols};
  j["saturation"] = options.saturation;
  j["groups"] = nlohmann::json::array();
  auto write_group = [&](const FrameStack& stack, double iso, const std::string& tag) {
    nlohmann::json g;
    g["iso"] = iso;
    g["kind"] = stack.kind == StackKind::Flat ? "flat" : "dark";
    g["exposure"] = stack.frames.front().exposure_s;
    g["frames"] = nlohmann::json::array();
    for (std::size_t f = 0; f < stack.frames.size(); ++f) {
      const std::string name = "frames/iso" + std::to_string(static_cast<int>(iso)) + "_" + tag +
                               "_" + std::to_string(f) + ".rawf";
      save_raw(stack.frames[f], dir / name);
      g["frames"].push_back(name);
    }
    j["groups"].push_back(g);
  };
  for (const IsoCaptureSet& set : captures) {
    for (std::size_t e = 0; e < set.flats.size(); ++e) {
      write_group(set.flats[e], set.iso, "flat" + std::to_string(e));
    }
    write_group(set.darks, set.iso, "dark");
  }
  std::ofstream out(dir / "manifest.json");
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write manifest in " + dir.string());
  out << j.dump(2) << "\n";
}

CalibrationReport calibrate_from_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, manifest.string() + ": " + e.what());
  }
  const auto dir = manifest.parent_path();
  CalibrationOptions options;
  std::map<double, IsoCaptureSet> by_iso;
  try {
    if (j.contains("block_grid")) {
      options.block_rows = j["block_grid"].at(0).get<int>();
      options.block_cols = j["block_grid"].at(1).get<int>();
    }
    options.saturation = j.value("saturation", 1.0);
    for (const auto& group : j.at("groups")) {
      const double iso = group.at("iso").get<double>();
      const std::string kind = group.at("kind").get<std::string>();
      require(kind == "flat" || kind == "dark", ErrorKind::Validation,
              "group kind must be 'flat' or 'dark'");
      FrameStack stack;
      stack.kind = kind == "flat" ? StackKind::Flat : StackKind::Dark;
      for (const auto& path : group.at("frames")) {
        stack.frames.push_back(load_raw(dir / path.get<std::string>()));
      }
      IsoCaptureSet& set = by_iso[iso];
      set.iso = iso;
      if (stack.kind == StackKind::Flat) {
        set.flats.push_back(std::move(stack));
      } else {
        require(set.darks.frames.empty(), ErrorKind::Validation,
                "more than one dark group for one ISO");
        set.darks = std::move(stack);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, manifest.string() + ": " + e.what());
  }
  std::vector<IsoCaptureSet> captures;
  for (auto& [iso, set] : by_iso) {
    require(!set.flats.empty(), ErrorKind::InsufficientData, "ISO without flat frames");
    set.darks.kind = StackKind::Dark;
    captures.push_back(std::move(set));
  }
  return calibrate(captures, options);
}

NoiseTruthSpec noise_truth_from_json(const nlohmann::json& j) {
  NoiseTruthSpec t;
  try {
    t.a_k = j.value("a_k", t.a_k);
    t.b_k = j.value("b_k", t.b_k);
    t.a_read = j.value("a_read", t.a_read);
    t.b_read = j.value("b_read", t.b_read);
    t.iso_min = j.value("iso_min", t.iso_min);
    t.iso_max = j.value("iso_max", t.iso_max);
    t.fp_k_sigma = j.value("fp_k_sigma", t.fp_k_sigma);
    t.fp_b_sigma = j.value("fp_b_sigma", t.fp_b_sigma);
    t.width = j.value("width", t.width);
    t.height = j.value("height", t.height);
    t.seed = j.value("seed", t.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("noise truth: ") + e.what());
  }
  require(t.width > 0 && t.height > 0 && t.fp_k_sigma >= 0 && t.fp_b_sigma >= 0,
          ErrorKind::Validation, "bad noise truth spec");
  return t;
}

NoiseModelParams make_noise_truth(const NoiseTruthSpec& spec) {
  NoiseModelParams m;
  m.a_k = spec.a_k;
  m.b_k = spec.b_k;
  m.a_read = spec.a_read;
  m.b_read = spec.b_read;
  m.iso_min = spec.iso_min;
  m.iso_max = spec.iso_max;
  m.n_fp_k = ImagePlane(spec.width, spec.height);
  m.n_fp_b = ImagePlane(spec.width, spec.height);
  CounterRng rng(stream_key(spec.seed, 0x46504d4150ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < m.n_fp_k.size(); ++i) {
    m.n_fp_k.data[i] = spec.fp_k_sigma * normal(rng);
    m.n_fp_b.data[i] = spec.fp_b_sigma * normal(rng);
  }
  m.validate();
  return m;
}

}  // namespace rawsplat
