// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rawsplat/calibration.hpp"
#include "rawsplat/error.hpp"
#include "rawsplat/rng.hpp"
#include "test_support.hpp"

using namespace rawsplat;

namespace {

RawImage constant_frame(int w, int h, float v) {
  RawImage r;
  r.width = w;
  r.height = h;
  r.black_level = 0;
  r.white_level = 1000;
  r.data.assign(static_cast<std::size_t>(w) * h, v);
  return r;
}

FrameStack stack_of(const std::vector<ImagePlane>& planes, StackKind kind) {
  FrameStack s;
  s.kind = kind;
  for (const auto& p : planes) s.frames.push_back(denormalize(p, 0.0f, 1000.0f, 400.0f, 0.01f));
  return s;
}

}  // namespace

TEST_CASE("block statistics of constant stacks") {
  FrameStack s;
  s.frames = {constant_frame(12, 8, 250), constant_frame(12, 8, 250)};
  const auto pts = block_statistics(s, 2, 3);
  REQUIRE(pts.size() == 6);
  for (const auto& p : pts) {
    CHECK(p.mean == doctest::Approx(0.25));
    CHECK(p.variance == 0.0);
  }
  RawImage split = constant_frame(4, 2, 100);
  for (int y = 0; y < 2; ++y)
    for (int x = 2; x < 4; ++x) split.data[y * 4 + x] = 600;
  s.frames = {split, split};
  const auto two = block_statistics(s, 1, 2);
  CHECK(two[0].mean == doctest::Approx(0.1));
  CHECK(two[1].mean == doctest::Approx(0.6));
  CHECK(two[1].variance == 0.0);
}

TEST_CASE("block variance tracks the hg law") {
  IsoNoiseParams p;
  p.k = 0.01;
  p.sigma_read = 0.01;
  p.n_fp = ImagePlane(32, 32);
  const ImagePlane clean(32, 32, 0.2);
  std::vector<ImagePlane> frames;
  for (int f = 0; f < 25; ++f) {
    ImagePlane n = sample_noise(clean, p, stream_key(1, f), NoiseMode::HeteroscedasticGaussian);
    for (std::size_t i = 0; i < n.size(); ++i) n.data[i] += clean.data[i];
    frames.push_back(n);
  }
  const auto pts = block_statistics(stack_of(frames, StackKind::Flat), 1, 1);
  CHECK(pts[0].variance == doctest::Approx(0.2 * 0.01 + 1e-4).epsilon(0.05));
}

TEST_CASE("fit_gain exact line and quarter-saturation exclusion") {
  std::vector<MeanVarPoint> pts;
  for (double m : {0.02, 0.05, 0.1, 0.2}) pts.push_back({m, 0.01 * m + 0.0004, 0});
  const GainFit g = fit_gain(pts, 1.0);
  CHECK(g.k == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(g.intercept == doctest::Approx(0.0004).epsilon(1e-10));
  pts.push_back({0.5, 123.0, 1});
  const GainFit g2 = fit_gain(pts, 1.0);
  CHECK(g2.points_excluded == 1);
  CHECK(g2.k == doctest::Approx(0.01).epsilon(1e-12));

  std::vector<MeanVarPoint> shifted = pts;
  for (auto& p : shifted) p.variance += 0.3;
  CHECK(fit_gain(shifted, 1.0).k == doctest::Approx(g2.k).epsilon(1e-10));
}

TEST_CASE("fixed pattern and read noise") {
  FrameStack one;
  one.frames = {constant_frame(4, 4, 7)};
  CHECK_THROWS_AS(fit_fixed_pattern(one), Error);

  std::vector<ImagePlane> equal(5, ImagePlane(6, 4, 0.013));
  const FrameStack flat_dark = stack_of(equal, StackKind::Dark);
  const ImagePlane fp = fit_fixed_pattern(flat_dark);
  for (double v : fp.data) CHECK(v == doctest::Approx(0.013).epsilon(1e-6));
  CHECK(fit_read_sigma(flat_dark, fp) == doctest::Approx(0.0).epsilon(1e-9));

  std::vector<ImagePlane> alt;
  for (int f = 0; f < 4; ++f) alt.push_back(ImagePlane(8, 8, f % 2 ? 0.03 : -0.03));
  const FrameStack alternating = stack_of(alt, StackKind::Dark);
  CHECK(fit_read_sigma(alternating, ImagePlane(8, 8)) == doctest::Approx(0.03).epsilon(1e-3));

  IsoNoiseParams p;
  p.sigma_read = 0.02;
  std::mt19937_64 rng(4);
  p.n_fp = test::random_plane(64, 64, rng, -0.05, 0.05);
  std::vector<ImagePlane> darks;
  for (int f = 0; f < 100; ++f)
    darks.push_back(sample_noise(ImagePlane(64, 64), p, stream_key(9, f),
                                 NoiseMode::HeteroscedasticGaussian));
  const FrameStack ds = stack_of(darks, StackKind::Dark);
  const ImagePlane est = fit_fixed_pattern(ds);
  std::size_t within = 0;
  for (std::size_t i = 0; i < est.size(); ++i)
    within += std::abs(est.data[i] - p.n_fp.data[i]) <= 4 * 0.02 / 10.0;
  CHECK(static_cast<double>(within) / est.size() >= 0.9999);
  CHECK(fit_read_sigma(ds, est) == doctest::Approx(0.02).epsilon(0.05));

  std::vector<ImagePlane> reversed(darks.rbegin(), darks.rend());
  const ImagePlane est_rev = fit_fixed_pattern(stack_of(reversed, StackKind::Dark));
  for (std::size_t i = 0; i < est.size(); ++i)
    CHECK(est_rev.data[i] == doctest::Approx(est.data[i]).epsilon(1e-12));
}

TEST_CASE("fit_iso_model lines") {
  std::vector<IsoCalibration> s;
  for (double iso : {200.0, 1600.0}) {
    IsoCalibration c;
    c.iso = iso;
    c.k = 0.001 * iso;
    c.sigma_read = 0.1 * std::sqrt(c.k);
    c.n_fp = ImagePlane(3, 2, -0.004);
    s.push_back(c);
  }
  const NoiseModelParams m = fit_iso_model(s);
  CHECK(m.a_k == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(std::abs(m.b_k) < 1e-14);
  CHECK(m.a_read == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.b_read == doctest::Approx(std::log(0.1)).epsilon(1e-12));
  for (double v : m.n_fp_k.data) CHECK(std::abs(v) < 1e-18);
  for (double v : m.n_fp_b.data) CHECK(v == doctest::Approx(-0.004).epsilon(1e-12));
  s.pop_back();
  CHECK_THROWS_AS(fit_iso_model(s), Error);
}

TEST_CASE("calibration round trip through a manifest") {
  NoiseModelParams truth;
  truth.a_k = 1e-5;
  truth.b_k = 1e-3;
  truth.a_read = 0.5;
  truth.b_read = std::log(0.2);
  truth.iso_min = 100;
  truth.iso_max = 800;
  CaptureSynthesis layout;
  layout.width = 48;
  layout.height = 32;
  layout.flats_per_exposure = 6;
  layout.darks = 10;
  std::mt19937_64 rng(12);
  truth.n_fp_k = test::random_plane(48, 32, rng, -2e-6, 2e-6);
  truth.n_fp_b = test::random_plane(48, 32, rng, -2e-3, 2e-3);
  const auto captures = synthesize_captures(truth, {100, 200, 400, 800}, layout, 3);
  const auto dir = std::filesystem::temp_directory_path() / "rs_calib_manifest";
  std::filesystem::remove_all(dir);
  write_capture_manifest(captures, {}, dir);
  const CalibrationReport direct = calibrate(captures, {});
  const CalibrationReport loaded = calibrate_from_manifest(dir / "manifest.json");
  CHECK(loaded.model.a_k == direct.model.a_k);
  CHECK(loaded.model.n_fp_b.data == direct.model.n_fp_b.data);
  CHECK(direct.model.a_k == doctest::Approx(truth.a_k).epsilon(0.15));
  std::filesystem::remove_all(dir);
}
