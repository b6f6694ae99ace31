// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <numbers>

#include "rawsplat/distortion.hpp"
#include "rawsplat/error.hpp"
#include "rawsplat/losses.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace rawsplat;

namespace {

ImagePlane from(int w, int h, std::span<const double> v) {
  ImagePlane p(w, h);
  p.data.assign(v.begin(), v.end());
  return p;
}

DistortionMap barrel_map(int size) {
  CameraModel cam;
  cam.width = cam.height = size;
  cam.fx = cam.fy = size;
  cam.cx = cam.cy = (size - 1) / 2.0;
  cam.distortion.k1 = 0.12;
  cam.distortion.p1 = 0.004;
  return build_distortion_map(cam);
}

IsoNoiseParams noise_params(int size, double k, double sigma_read, std::mt19937_64& rng) {
  IsoNoiseParams p;
  p.iso = 800;
  p.k = k;
  p.sigma_read = sigma_read;
  p.n_fp = test::random_plane(size, size, rng, -0.01, 0.01);
  return p;
}

}  // namespace

TEST_CASE("loss_3dgs: identity, MAE limit, gradient") {
  std::mt19937_64 rng(1);
  const ImagePlane a = test::random_plane(8, 8, rng), b = test::random_plane(8, 8, rng);
  CHECK(loss_3dgs(a, a, 0.2).value == doctest::Approx(0.0).epsilon(1e-15));

  double mae = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) mae += std::abs(a.data[i] - b.data[i]);
  mae /= a.data.size();
  CHECK(loss_3dgs(a, b, 0.0).value == doctest::Approx(mae).epsilon(1e-14));

  for (double lambda : {0.2, 1.0}) {
    const ScalarLoss l = loss_3dgs(a, b, lambda);
    auto f = [&](std::span<const double> x) { return loss_3dgs(from(8, 8, x), b, lambda).value; };
    CHECK(test::max_relative_error(l.grad.data, test::central_difference(f, a.data, 1e-6)) < 1e-3);
  }
  CHECK_THROWS_AS(loss_3dgs(a, ImagePlane(8, 7), 0.2), Error);
}

TEST_CASE("ssim of identical images is one") {
  std::mt19937_64 rng(2);
  const ImagePlane a = test::random_plane(12, 10, rng);
  CHECK(ssim(a, a).value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("loss_rawnerf values, gradient and homogeneity") {
  const ImagePlane one(1, 1, 1.0), half(1, 1, 0.5);
  CHECK(loss_rawnerf(half, half, 1e-3).value == 0.0);
  CHECK(loss_rawnerf(one, half, 1e-3).value == doctest::Approx(0.24950074900).epsilon(1e-9));

  std::mt19937_64 rng(3);
  const ImagePlane x = test::random_plane(8, 8, rng, 0.05, 1.0);
  const ImagePlane t = test::random_plane(8, 8, rng, 0.0, 1.0);
  std::vector<std::uint8_t> mask(64, 1);
  for (int i = 0; i < 64; i += 5) mask[i] = 0;
  const double eps = 1e-3;
  const RawNerfLoss l = loss_rawnerf(x, t, eps, mask);
  auto frozen = [&](std::span<const double> v) {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!mask[i]) continue;
      const double e = (v[i] - t.data[i]) / (x.data[i] + eps);
      s += e * e;
      ++n;
    }
    return s / n;
  };
  CHECK(frozen(x.data) == doctest::Approx(l.value).epsilon(1e-14));
  CHECK(test::max_relative_error(l.grad_pred.data, test::central_difference(frozen, x.data, 1e-5)) <
        1e-4);

  ImagePlane x2 = x, t2 = t;
  for (double& v : x2.data) v *= 2;
  for (double& v : t2.data) v *= 2;
  CHECK(loss_rawnerf(x2, t2, 2 * eps, mask).value == l.value);
  CHECK_THROWS_AS(loss_rawnerf(x, t, eps, std::vector<std::uint8_t>(64, 0)), Error);
}

TEST_CASE("loss_cov closed forms") {
  CHECK(loss_cov(ImagePlane(8, 8, 1.0), 4).value == doctest::Approx(0.9375).epsilon(1e-15));
  CHECK(loss_cov(ImagePlane(8, 8, 0.0), 4).value == doctest::Approx(0.0625).epsilon(1e-15));

  // Four 2x2 patches, patch s = 2 e_s, so M = I.
  ImagePlane basis(4, 4);
  basis.at(0, 0) = 2.0;
  basis.at(3, 0) = 2.0;
  basis.at(0, 3) = 2.0;
  basis.at(3, 3) = 2.0;
  CHECK(loss_cov(basis, 2).value == doctest::Approx(0.0).epsilon(1e-15));

  CHECK_THROWS_AS(loss_cov(ImagePlane(4, 4, 1.0), 4), Error);
  CHECK_THROWS_AS(loss_cov(ImagePlane(3, 8, 1.0), 4), Error);
}

TEST_CASE("loss_cov of white noise shrinks with sample count") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  double previous = 1e9;
  for (int side : {40, 128, 400}) {  // 100, 1024, 10000 patches
    ImagePlane z(side, side);
    for (double& v : z.data) v = n(rng);
    const double s = static_cast<double>(side / 4) * (side / 4);
    const double l = loss_cov(z, 4).value;
    CHECK(l < previous);
    CHECK(l < 3.0 / s * 2.0);
    previous = l;
  }
}

TEST_CASE("loss_cov gradient") {
  std::mt19937_64 rng(5);
  const ImagePlane z = test::random_plane(9, 13, rng, -2, 2);
  const ScalarLoss l = loss_cov(z, 4);
  auto f = [&](std::span<const double> x) { return loss_cov(from(9, 13, x), 4).value; };
  CHECK(test::max_relative_error(l.grad.data, test::central_difference(f, z.data, 1e-5)) < 1e-4);
}

TEST_CASE("loss_nrr composed closed form") {
  std::mt19937_64 rng(6);
  const int size = 8;
  const DistortionMap map = DistortionMap::identity(size, size);
  IsoNoiseParams p = noise_params(size, 0.0, 1.0, rng);
  const ImagePlane render = test::random_plane(size, size, rng, 0.1, 0.9);
  ImagePlane raw(size, size);
  for (std::size_t i = 0; i < raw.data.size(); ++i) raw.data[i] = render.data[i] + p.n_fp.data[i];
  const LossWeights w;
  const LossReport r = loss_nrr(render, raw, p.n_fp, p, w, map);
  CHECK(r.recon == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(r.nll == doctest::Approx(0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(r.cov == doctest::Approx(0.0625).epsilon(1e-15));
  CHECK(r.total == doctest::Approx(w.lambda_nd * 0.9189385332046727 + w.lambda_cov * 0.0625)
                       .epsilon(1e-14));
}

TEST_CASE("loss_nrr with zero weights is the scaled recon loss") {
  std::mt19937_64 rng(7);
  const int size = 8;
  const DistortionMap map = barrel_map(size);
  IsoNoiseParams p = noise_params(size, 0.01, 0.02, rng);
  const ImagePlane render = test::random_plane(size, size, rng, 0.1, 0.9);
  const ImagePlane raw = test::random_plane(size, size, rng, 0.1, 0.9);
  const ImagePlane n_hat = test::random_plane(size, size, rng, -0.05, 0.05);
  LossWeights w;
  w.lambda_nd = w.lambda_cov = 0.0;
  const LossReport r = loss_nrr(render, raw, n_hat, p, w, map);
  ImagePlane target(size, size);
  for (std::size_t i = 0; i < raw.data.size(); ++i) target.data[i] = raw.data[i] - n_hat.data[i];
  const RawNerfLoss ref = loss_rawnerf(apply_map(render, map), target, w.epsilon, map.mask);
  CHECK(r.total == ref.value);
  CHECK(r.grad_render.data == apply_map_backward(ref.grad_pred, map).data);
}

TEST_CASE("loss_nrr joint gradient against finite differences") {
  const int size = 8;
  for (bool cov_live : {false, true}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(40 + seed);
      const DistortionMap map = barrel_map(size);
      IsoNoiseParams p = noise_params(size, 0.02, 0.03, rng);
      const ImagePlane render = test::random_plane(size, size, rng, 0.1, 0.9);
      const ImagePlane raw = test::random_plane(size, size, rng, 0.1, 0.9);
      const ImagePlane n_hat = test::random_plane(size, size, rng, -0.08, 0.08);
      LossWeights w;
      w.lambda_nd = 3.0;
      GradientRouting routing;
      routing.cov_sigma_to_render = cov_live;
      const LossReport r = loss_nrr(render, raw, n_hat, p, w, map, routing);
      CHECK(r.total == doctest::Approx(r.recon + w.lambda_nd * r.nll + w.lambda_cov * r.cov)
                           .epsilon(1e-12));
      CHECK(test::nrr_oracle(render, raw, n_hat, render, p, w, map, cov_live) ==
            doctest::Approx(r.total).epsilon(1e-12));

      auto f_render = [&](std::span<const double> x) {
        return test::nrr_oracle(from(size, size, x), raw, n_hat, render, p, w, map, cov_live);
      };
      auto f_noise = [&](std::span<const double> x) {
        return test::nrr_oracle(render, raw, from(size, size, x), render, p, w, map, cov_live);
      };
      INFO("seed " << seed << " cov_live " << cov_live);
      CHECK(test::max_relative_error(r.grad_render.data,
                                     test::central_difference(f_render, render.data, 1e-6)) < 1e-3);
      CHECK(test::max_relative_error(r.grad_noise.data,
                                     test::central_difference(f_noise, n_hat.data, 1e-6)) < 1e-3);
    }
  }
}
