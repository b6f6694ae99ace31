// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "rawsplat/density.hpp"
#include "rawsplat/error.hpp"
#include "rawsplat/rasterizer.hpp"
#include "test_support.hpp"

using namespace rawsplat;

namespace {

double sum_squares(const RenderResult& r) {
  double s = 0.0;
  for (const auto& p : r.image)
    for (double v : p.data) s += v * v;
  return s;
}

GaussianCloud single(double x, double y, double z, double scale, double opacity_logit,
                     double color_raw) {
  GaussianCloud c;
  Gaussian3D g;
  g.mu = {x, y, z};
  g.log_scale = {std::log(scale), std::log(scale), std::log(scale)};
  g.opacity_logit = opacity_logit;
  g.color_raw = {color_raw};
  c.gaussians.push_back(g);
  return c;
}

CameraModel axis_camera(int size, double f) {
  return CameraModel::look_at({0, 0, -5}, {0, 0, 0}, {0, -1, 0}, f, f, size, size);
}

}  // namespace

TEST_CASE("covariance3d closed forms") {
  const Mat3 d = covariance3d({1, 0, 0, 0}, {0.0, std::log(2.0), std::log(3.0)});
  CHECK((d - Vec3(1, 4, 9).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-12);
  const Mat3 iso = covariance3d({0.3, -0.5, 0.2, 0.7}, {std::log(0.7), std::log(0.7), std::log(0.7)});
  CHECK((iso - 0.49 * Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance eigenvalues are squared scales") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::array<double, 4> q{n(rng), n(rng), n(rng), n(rng)};
    std::array<double, 3> ls{0.5 * n(rng), 0.5 * n(rng), 0.5 * n(rng)};
    Eigen::SelfAdjointEigenSolver<Mat3> es(covariance3d(q, ls));
    std::array<double, 3> expect{std::exp(2 * ls[0]), std::exp(2 * ls[1]), std::exp(2 * ls[2])};
    std::sort(expect.begin(), expect.end());
    for (int k = 0; k < 3; ++k) CHECK(es.eigenvalues()[k] == doctest::Approx(expect[k]).epsilon(1e-10));
  }
}

TEST_CASE("projection of an on-axis isotropic gaussian") {
  const CameraModel cam = axis_camera(33, 40.0);
  const auto c = single(0, 0, 0, 0.1, 0, 0);
  const RenderOptions opt;
  const auto p = project(c.gaussians[0], cam, opt);
  REQUIRE(p.has_value());
  CHECK(p->mean2d[0] == doctest::Approx(cam.cx));
  CHECK(p->mean2d[1] == doctest::Approx(cam.cy));
  const double expect = std::pow(40.0 * 0.1 / 5.0, 2) + opt.dilation;
  CHECK(p->cov2d[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(p->cov2d[2] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::abs(p->cov2d[1]) < 1e-12);
  CHECK(p->depth == doctest::Approx(5.0));

  const auto behind = single(0, 0, -6, 0.1, 0, 0);
  CHECK_FALSE(project(behind.gaussians[0], cam, opt).has_value());
}

TEST_CASE("perspective jacobian matches finite differences of the pinhole map") {
  const CameraModel cam = axis_camera(32, 37.0);
  const std::array<double, 3> t{0.4, -0.3, 3.2};
  const auto jac = perspective_jacobian(cam, t);
  const double h = 1e-6;
  std::vector<double> analytic(jac.begin(), jac.end()), numeric(6);
  for (int k = 0; k < 3; ++k) {
    auto tp = t, tm = t;
    tp[k] += h;
    tm[k] -= h;
    numeric[k] = (cam.fx * tp[0] / tp[2] - cam.fx * tm[0] / tm[2]) / (2 * h);
    numeric[3 + k] = (cam.fy * tp[1] / tp[2] - cam.fy * tm[1] / tm[2]) / (2 * h);
  }
  CHECK(test::max_relative_error(analytic, numeric) < 1e-6);
}

TEST_CASE("render single opaque gaussian at its mean") {
  const CameraModel cam = axis_camera(17, 20.0);
  const auto c = single(0, 0, 0, 0.2, 30.0, 1.3);
  const auto r = render(c, cam);
  const double expected = softplus(1.3) * 0.999;
  CHECK(r.image[0].at(8, 8) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("two gaussian compositing matches a direct evaluation") {
  const CameraModel cam = axis_camera(17, 20.0);
  GaussianCloud c = single(0.02, 0.01, 0.5, 0.3, 0.2, 0.4);
  c.gaussians.push_back(single(-0.03, 0.0, -0.5, 0.25, -0.3, 1.1).gaussians[0]);
  const RenderOptions opt = RenderOptions::exact();
  const auto r = render(c, cam, opt);
  auto alpha_at = [&](const Gaussian3D& g, double px, double py) {
    const auto p = project(g, cam, opt).value();
    const double det = p.cov2d[0] * p.cov2d[2] - p.cov2d[1] * p.cov2d[1];
    const double dx = px - p.mean2d[0], dy = py - p.mean2d[1];
    const double q = (p.cov2d[2] * dx * dx - 2 * p.cov2d[1] * dx * dy + p.cov2d[0] * dy * dy) / det;
    return g.opacity() * std::exp(-0.5 * q);
  };
  for (auto [px, py] : {std::pair{8, 8}, std::pair{6, 9}, std::pair{11, 4}}) {
    const Gaussian3D& front = c.gaussians[1];  // depth 4.5
    const Gaussian3D& back = c.gaussians[0];   // depth 5.5
    const double a1 = alpha_at(front, px, py), a2 = alpha_at(back, px, py);
    const double expect = front.color(0) * a1 + back.color(0) * a2 * (1 - a1);
    CHECK(r.image[0].at(px, py) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("render is storage-order invariant and non-negative") {
  std::mt19937_64 rng(3);
  GaussianCloud c = test::random_cloud(12, 2, rng);
  const CameraModel cam = test::small_camera();
  const auto a = render(c, cam);
  std::reverse(c.gaussians.begin(), c.gaussians.end());
  std::swap(c.gaussians[2], c.gaussians[7]);
  const auto b = render(c, cam);
  for (int ch = 0; ch < 2; ++ch) {
    CHECK(a.image[ch].data == b.image[ch].data);
    for (double v : a.image[ch].data) CHECK(v >= 0.0);
  }
  for (double v : a.alpha.data) CHECK(v <= 1.0);
}

TEST_CASE("rigid motion of scene and camera leaves the render unchanged") {
  std::mt19937_64 rng(5);
  GaussianCloud c = test::random_cloud(10, 1, rng);
  const CameraModel cam = test::small_camera();
  const auto ref = render(c, cam);
  const Mat3 rot = quat_to_rotation({0.9, 0.2, -0.3, 0.1});
  const Vec3 shift(0.4, -1.0, 2.0);
  Eigen::Quaterniond qr(rot);
  GaussianCloud moved = c;
  for (auto& g : moved.gaussians) {
    const Vec3 mu = rot * Vec3(g.mu[0], g.mu[1], g.mu[2]) + shift;
    g.mu = {mu[0], mu[1], mu[2]};
    Eigen::Quaterniond q(g.rot[0], g.rot[1], g.rot[2], g.rot[3]);
    q = qr * q.normalized();
    g.rot = {q.w(), q.x(), q.y(), q.z()};
  }
  CameraModel cam2 = cam;
  Mat3 w;
  for (int i = 0; i < 9; ++i) w(i / 3, i % 3) = cam.rotation[i];
  const Mat3 w2 = w * rot.transpose();
  const Vec3 t2 = Vec3(cam.translation[0], cam.translation[1], cam.translation[2]) - w2 * shift;
  for (int i = 0; i < 9; ++i) cam2.rotation[i] = w2(i / 3, i % 3);
  cam2.translation = {t2[0], t2[1], t2[2]};
  const auto out = render(moved, cam2);
  for (std::size_t i = 0; i < out.image[0].data.size(); ++i) {
    CHECK(std::abs(out.image[0].data[i] - ref.image[0].data[i]) < 1e-6);
  }
}

TEST_CASE("render rejects non-finite parameters") {
  GaussianCloud c = single(0, 0, 0, 0.2, 0, 0);
  c.gaussians[0].mu[1] = std::nan("");
  CHECK_THROWS_AS(render(c, axis_camera(8, 10)), Error);
}

TEST_CASE("render_backward matches central differences") {
  const CameraModel cam = test::small_camera();
  const RenderOptions opt = RenderOptions::exact();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const std::size_t count = 1 + seed % 16;
    GaussianCloud cloud = test::random_cloud(count, 1 + seed % 2, rng);
    const auto fwd = render(cloud, cam, opt);
    std::vector<ImagePlane> g;
    for (const auto& p : fwd.image) {
      ImagePlane gp = p;
      for (double& v : gp.data) v *= 2.0;
      g.push_back(gp);
    }
    const auto grads = render_backward(cloud, cam, fwd.trace, g);
    auto f = [&](std::span<const double> x) {
      GaussianCloud c = cloud;
      c.unpack(x);
      return sum_squares(render(c, cam, opt));
    };
    const auto numeric = test::central_difference(f, cloud.pack(), 1e-4);
    INFO("seed " << seed);
    CHECK(test::max_relative_error(grads.params, numeric) < 1e-3);
  }
}

TEST_CASE("render_backward alpha gradient and zero input") {
  std::mt19937_64 rng(9);
  GaussianCloud cloud = test::random_cloud(4, 1, rng);
  const CameraModel cam = test::small_camera();
  const RenderOptions opt = RenderOptions::exact();
  const auto fwd = render(cloud, cam, opt);
  std::vector<ImagePlane> zero{ImagePlane(16, 16)};
  const auto none = render_backward(cloud, cam, fwd.trace, zero);
  for (double v : none.params) CHECK(v == 0.0);

  ImagePlane ga = test::random_plane(16, 16, rng, -1, 1);
  const auto grads = render_backward(cloud, cam, fwd.trace, zero, &ga);
  auto f = [&](std::span<const double> x) {
    GaussianCloud c = cloud;
    c.unpack(x);
    const auto r = render(c, cam, opt);
    double s = 0.0;
    for (std::size_t i = 0; i < ga.data.size(); ++i) s += ga.data[i] * r.alpha.data[i];
    return s;
  };
  CHECK(test::max_relative_error(grads.params, test::central_difference(f, cloud.pack(), 1e-4)) <
        1e-3);
}

TEST_CASE("occluded gaussian gets no gradient") {
  const CameraModel cam = axis_camera(16, 20.0);
  // Two near-opaque layers drive transmittance below the termination floor.
  GaussianCloud c = single(0, 0, 1.0, 0.2, 0.0, 0.3);
  c.gaussians.push_back(single(0, 0, -1.0, 20.0, 20.0, 0.5).gaussians[0]);
  c.gaussians.push_back(single(0, 0, -0.9, 20.0, 20.0, 0.5).gaussians[0]);
  const auto fwd = render(c, cam);
  std::vector<ImagePlane> g{ImagePlane(16, 16, 1.0)};
  const auto grads = render_backward(c, cam, fwd.trace, g);
  for (int k = 0; k < c.stride(); ++k) CHECK(std::abs(grads.params[k]) < 1e-6);
}

TEST_CASE("stale trace is rejected") {
  std::mt19937_64 rng(1);
  GaussianCloud c = test::random_cloud(3, 1, rng);
  const CameraModel cam = test::small_camera();
  const auto fwd = render(c, cam);
  c.gaussians[1].mu[0] += 1e-9;
  std::vector<ImagePlane> g{ImagePlane(16, 16, 1.0)};
  CHECK_THROWS_AS(render_backward(c, cam, fwd.trace, g), Error);
}

TEST_CASE("densify_and_prune rules") {
  std::mt19937_64 rng(2);
  GaussianCloud c = test::random_cloud(5, 1, rng);
  c.reset_optimizer();
  for (std::size_t i = 0; i < c.size(); ++i) {
    c.screen_grad_accum[i] = 1.0;
    c.screen_grad_count[i] = 1;
  }
  const auto before = c.pack();
  DensifyThresholds off{std::numeric_limits<double>::infinity(), 0.05, 0.0};
  densify_and_prune(c, off, 1);
  CHECK(c.pack() == before);

  GaussianCloud one = single(0, 0, 0, 0.5, 0.0, 0.0);
  one.reset_optimizer();
  one.screen_grad_accum[0] = 1.0;
  one.screen_grad_count[0] = 1;
  const auto rep = densify_and_prune(one, {1e-3, 0.1, 0.0}, 4);
  CHECK(rep.split == 1);
  REQUIRE(one.size() == 2);
  for (const auto& g : one.gaussians) {
    for (double ls : g.log_scale) CHECK(ls == doctest::Approx(std::log(0.5) - std::log(1.6)));
  }
  CHECK(one.adam.m.size() == 2u * one.stride());

  GaussianCloud two = single(0, 0, 0, 0.1, logit(0.005), 0.0);
  two.gaussians.push_back(single(0, 0, 0, 0.1, logit(0.02), 0.0).gaussians[0]);
  densify_and_prune(two, {1.0, 0.1, 0.01}, 4);
  REQUIRE(two.size() == 1);
  CHECK(two.gaussians[0].opacity() == doctest::Approx(0.02));

  GaussianCloud small = single(0, 0, 0, 0.01, 0.0, 0.0);
  small.reset_optimizer();
  small.screen_grad_accum[0] = 1.0;
  small.screen_grad_count[0] = 1;
  small.position_grad_accum[0] = {0.0, 2.0, 0.0};
  const auto rc = densify_and_prune(small, {1e-3, 0.1, 0.0}, 4);
  CHECK(rc.cloned == 1);
  REQUIRE(small.size() == 2);
  CHECK(small.gaussians[1].mu[1] == doctest::Approx(-0.005));
  CHECK(small.screen_grad_accum == std::vector<double>{0.0, 0.0});
}

TEST_CASE("anisotropy statistics") {
  GaussianCloud iso = single(0, 0, 0, 0.3, 0, 0);
  iso.gaussians.push_back(iso.gaussians[0]);
  CHECK(anisotropy_stats(iso).median == doctest::Approx(1.0));
  GaussianCloud flat = single(0, 0, 0, 1.0, 0, 0);
  flat.gaussians[0].log_scale[2] = std::log(10.0);
  CHECK(anisotropy_stats(flat).median == doctest::Approx(10.0));
  CHECK_THROWS_AS(anisotropy_stats(GaussianCloud{}), Error);

  std::mt19937_64 rng(8);
  GaussianCloud mixed = test::random_cloud(37, 1, rng);
  std::vector<double> ratios;
  for (const auto& g : mixed.gaussians) {
    const auto s = g.scale();
    ratios.push_back(*std::max_element(s.begin(), s.end()) / *std::min_element(s.begin(), s.end()));
  }
  std::sort(ratios.begin(), ratios.end());
  const auto st = anisotropy_stats(mixed);
  CHECK(st.median == ratios[18]);   // ceil(0.5 * 37) = 19th
  CHECK(st.p95 == ratios[35]);      // ceil(0.95 * 37) = 36th
  CHECK(st.count == 37);
}

TEST_CASE("cloud save/load round trip") {
  std::mt19937_64 rng(4);
  GaussianCloud c = test::random_cloud(6, 3, rng);
  c.reset_optimizer();
  c.adam.m[3] = 0.25;
  c.adam.step = 17;
  const auto path = std::filesystem::temp_directory_path() / "rawsplat_cloud_test.gcld";
  save_cloud(c, path, true);
  const GaussianCloud back = load_cloud(path);
  CHECK(back.pack() == c.pack());
  CHECK(back.adam.m == c.adam.m);
  CHECK(back.adam.step == 17);
  std::filesystem::remove(path);
}
