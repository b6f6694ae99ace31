// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/noise_model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "rawsplat/error.hpp"
#include "rawsplat/rng.hpp"

namespace rawsplat {

namespace {

void check_fp_shape(const IsoNoiseParams& params, const ImagePlane& image) {
  require(params.n_fp.same_shape(image), ErrorKind::Validation,
          "fixed-pattern map does not match image dimensions");
}

double sigma2_at(double signal, const IsoNoiseParams& params) {
  return params.sigma_read * params.sigma_read + std::max(signal, 0.0) * params.k;
}

// Maps stored with unit levels so that normalize() returns them unchanged.
RawImage plane_to_sidecar(const ImagePlane& plane) {
  return denormalize(plane, 0.0f, 1.0f, 0.0f, 0.0f);
}

}  // namespace

void NoiseModelParams::validate() const {
  require(n_fp_k.same_shape(n_fp_b), ErrorKind::Validation, "fixed-pattern maps differ in shape");
  require(iso_max >= iso_min, ErrorKind::Validation, "iso range is inverted");
  for (double iso : {iso_min, iso_max}) {
    require(a_k * iso + b_k > 0.0, ErrorKind::ModelRange,
            "system gain is non-positive inside the declared ISO range");
  }
}

IsoNoiseParams params_at_iso(const NoiseModelParams& model, double iso) {
  require(iso >= model.iso_min && iso <= model.iso_max, ErrorKind::ModelRange,
          "ISO " + std::to_string(iso) + " outside calibrated range");
  require(model.n_fp_k.same_shape(model.n_fp_b), ErrorKind::Validation,
          "fixed-pattern maps differ in shape");
  IsoNoiseParams out;
  out.iso = iso;
  out.k = model.a_k * iso + model.b_k;
  require(out.k > 0.0, ErrorKind::ModelRange, "derived system gain k <= 0");
  out.sigma_read = std::exp(model.a_read * std::log(out.k) + model.b_read);
  out.n_fp = ImagePlane(model.n_fp_k.width, model.n_fp_k.height);
  for (std::size_t i = 0; i < out.n_fp.size(); ++i) {
    out.n_fp.data[i] = iso * model.n_fp_k.data[i] + model.n_fp_b.data[i];
  }
  return out;
}

ImagePlane hg_sigma(const ImagePlane& signal, const IsoNoiseParams& params) {
  ImagePlane out(signal.width, signal.height);
  for (std::size_t i = 0; i < signal.size(); ++i) {
    out.data[i] = std::sqrt(sigma2_at(signal.data[i], params));
  }
  return out;
}

ImagePlane sample_noise(const ImagePlane& clean, const IsoNoiseParams& params, std::uint64_t seed,
                        NoiseMode mode) {
  check_fp_shape(params, clean);
  require(params.k >= 0.0 && params.sigma_read >= 0.0, ErrorKind::Validation,
          "noise parameters must be non-negative");
  if (mode == NoiseMode::Poisson) {
    require(params.k > 0.0, ErrorKind::Domain, "poisson mode requires k > 0");
  }

  ImagePlane out(clean.width, clean.height);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CounterRng rng(stream_key(seed, i));
    const double x = clean.data[i];
    double n = params.n_fp.data[i];
    if (mode == NoiseMode::Poisson) {
      require(x >= 0.0, ErrorKind::Domain, "poisson mode requires a non-negative clean signal");
      if (x > 0.0) {
        std::poisson_distribution<long long> shot(x / params.k);
        n += static_cast<double>(shot(rng)) * params.k - x;
      }
      if (params.sigma_read > 0.0) {
        std::normal_distribution<double> read(0.0, params.sigma_read);
        n += read(rng);
      }
    } else {
      const double sigma = std::sqrt(sigma2_at(x, params));
      if (sigma > 0.0) {
        std::normal_distribution<double> hg(0.0, sigma);
        n += hg(rng);
      }
    }
    out.data[i] = n;
  }
  return out;
}

NllResult nll(const ImagePlane& n_hat, const ImagePlane& signal, const IsoNoiseParams& params) {
  require(n_hat.same_shape(signal), ErrorKind::Validation, "nll: shape mismatch");
  check_fp_shape(params, n_hat);
  NllResult result{ImagePlane(n_hat.width, n_hat.height), 0.0};
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_hat.size(); ++i) {
    const double s2 = sigma2_at(signal.data[i], params);
    require(s2 > 0.0, ErrorKind::SingularVariance, "nll: sigma_hg is zero");
    const double r = n_hat.data[i] - params.n_fp.data[i];
    const double v = 0.5 * (log_2pi + std::log(s2)) + r * r / (2.0 * s2);
    result.per_pixel.data[i] = v;
    sum += v;
  }
  result.mean = n_hat.size() > 0 ? sum / static_cast<double>(n_hat.size()) : 0.0;
  return result;
}

ImagePlane normalize_noise(const ImagePlane& n_hat, const ImagePlane& signal,
                           const IsoNoiseParams& params) {
  require(n_hat.same_shape(signal), ErrorKind::Validation, "normalize_noise: shape mismatch");
  check_fp_shape(params, n_hat);
  ImagePlane z(n_hat.width, n_hat.height);
  for (std::size_t i = 0; i < n_hat.size(); ++i) {
    const double s2 = sigma2_at(signal.data[i], params);
    require(s2 > 0.0, ErrorKind::SingularVariance, "normalize_noise: sigma_hg is zero");
    z.data[i] = (n_hat.data[i] - params.n_fp.data[i]) / std::sqrt(s2);
  }
  return z;
}

void save_noise_model(const NoiseModelParams& model, const std::filesystem::path& json_path) {
  model.validate();
  if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
  const std::string stem = json_path.stem().string();
  const std::string fp_k = stem + "_fp_k.rawf";
  const std::string fp_b = stem + "_fp_b.rawf";
  const auto dir = json_path.parent_path();
  save_raw(plane_to_sidecar(model.n_fp_k), dir / fp_k);
  save_raw(plane_to_sidecar(model.n_fp_b), dir / fp_b);

  nlohmann::json j;
  j["a_k"] = model.a_k;
  j["b_k"] = model.b_k;
  j["a_read"] = model.a_read;
  j["b_read"] = model.b_read;
  j["iso_min"] = model.iso_min;
  j["iso_max"] = model.iso_max;
  j["log_base"] = "e";
  j["units"] = "normalized";
  j["n_fp_k"] = fp_k;
  j["n_fp_b"] = fp_b;
  std::ofstream out(json_path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + json_path.string());
  out << j.dump(2) << '\n';
}

NoiseModelParams load_noise_model(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + json_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, json_path.string() + ": " + e.what());
  }
  NoiseModelParams model;
  try {
    model.a_k = j.at("a_k").get<double>();
    model.b_k = j.at("b_k").get<double>();
    model.a_read = j.at("a_read").get<double>();
    model.b_read = j.at("b_read").get<double>();
    model.iso_min = j.at("iso_min").get<double>();
    model.iso_max = j.at("iso_max").get<double>();
    const auto dir = json_path.parent_path();
    model.n_fp_k = normalize(load_raw(dir / j.at("n_fp_k").get<std::string>()));
    model.n_fp_b = normalize(load_raw(dir / j.at("n_fp_b").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, json_path.string() + ": " + e.what());
  }
  model.validate();
  return model;
}

}  // namespace rawsplat
