// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "rawsplat/error.hpp"
#include "rawsplat/extractor.hpp"
#include "rawsplat/noise_model.hpp"
#include "rawsplat/optim.hpp"
#include "test_support.hpp"

using namespace rawsplat;

namespace {

ExtractorNet randomized(std::uint64_t seed) {
  ExtractorNet net = ExtractorNet::create(seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.2);
  for (double& w : net.layers.back().weight) w = n(rng);
  for (auto& l : net.layers)
    for (double& b : l.bias) b = 0.05 * n(rng);
  return net;
}

}  // namespace

TEST_CASE("fresh extractor returns the fixed pattern") {
  std::mt19937_64 rng(1);
  const ImagePlane raw = test::random_plane(10, 9, rng);
  const ImagePlane fp = test::random_plane(10, 9, rng, -0.1, 0.1);
  const ExtractorNet net = ExtractorNet::create(3);
  CHECK(extract(raw, fp, net).data == fp.data);
  CHECK_THROWS_AS(extract(raw, ImagePlane(9, 9), net), Error);
}

TEST_CASE("zero fixed pattern gives the bare network output") {
  std::mt19937_64 rng(2);
  const ImagePlane raw = test::random_plane(8, 8, rng);
  const ExtractorNet net = randomized(5);
  CHECK(extract(raw, ImagePlane(8, 8), net).data == net.forward(raw).data);
}

TEST_CASE("final layer is linear") {
  std::mt19937_64 rng(3);
  const ImagePlane raw = test::random_plane(8, 8, rng);
  const ImagePlane fp = test::random_plane(8, 8, rng, -0.1, 0.1);
  ExtractorNet net = randomized(7);
  const ImagePlane a = net.forward(raw);
  const ImagePlane na = extract(raw, fp, net);
  for (double& w : net.layers.back().weight) w *= 2.0;
  for (double& b : net.layers.back().bias) b *= 2.0;
  const ImagePlane b = net.forward(raw);
  const ImagePlane nb = extract(raw, fp, net);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    CHECK(b.data[i] == 2.0 * a.data[i]);
    CHECK((nb.data[i] - fp.data[i]) == doctest::Approx(2.0 * (na.data[i] - fp.data[i])).epsilon(1e-12));
  }
}

TEST_CASE("extractor backward matches central differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(10 + seed);
    const ImagePlane input = test::random_plane(8, 8, rng, -1, 1);
    const ImagePlane g = test::random_plane(8, 8, rng, -1, 1);
    ExtractorNet net = randomized(20 + seed);
    ExtractorCache cache;
    net.forward(input, &cache);
    const auto grads = net.backward(cache, g);
    auto loss_of = [&](const ExtractorNet& n, const ImagePlane& x) {
      const ImagePlane out = n.forward(x);
      double s = 0.0;
      for (std::size_t i = 0; i < out.data.size(); ++i) s += g.data[i] * out.data[i];
      return s;
    };
    auto f_params = [&](std::span<const double> p) {
      ExtractorNet n = net;
      n.unpack(p);
      return loss_of(n, input);
    };
    auto f_input = [&](std::span<const double> x) {
      ImagePlane in(8, 8);
      in.data.assign(x.begin(), x.end());
      return loss_of(net, in);
    };
    INFO("seed " << seed);
    CHECK(test::max_relative_error(grads.params, test::central_difference(f_params, net.pack(), 1e-6)) <
          1e-3);
    CHECK(test::max_relative_error(grads.input.data,
                                   test::central_difference(f_input, input.data, 1e-6)) < 1e-3);
  }
}

TEST_CASE("extractor backward edge cases") {
  std::mt19937_64 rng(4);
  const ImagePlane input = test::random_plane(8, 8, rng);
  ExtractorNet net = randomized(1);
  ExtractorCache cache;
  net.forward(input, &cache);
  const auto zero = net.backward(cache, ImagePlane(8, 8));
  for (double v : zero.params) CHECK(v == 0.0);
  net.layers[1].bias[0] += 1e-3;
  CHECK_THROWS_AS(net.backward(cache, ImagePlane(8, 8, 1.0)), Error);
}

TEST_CASE("interior translation equivariance") {
  std::mt19937_64 rng(5);
  const int w = 14, h = 12;
  const ImagePlane a = test::random_plane(w, h, rng);
  ImagePlane b(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) b.at(x, y) = a.at(x == 0 ? 0 : x - 1, y);
  const ExtractorNet net = randomized(9);
  const ImagePlane oa = net.forward(a), ob = net.forward(b);
  // Four 3x3 layers see a radius-4 neighbourhood; skip anything touching the border.
  for (int y = 4; y < h - 4; ++y)
    for (int x = 5; x < w - 4; ++x) CHECK(ob.at(x, y) == doctest::Approx(oa.at(x - 1, y)).epsilon(1e-12));
}

TEST_CASE("adam matches a reference update and the schedule milestone") {
  std::vector<double> p{0.5}, g{1.0};
  AdamState st;
  adam_step(p, g, 1e-4, st);
  // Reference: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1.
  const double m_hat = 0.1 / (1 - 0.9), v_hat = 0.001 / (1 - 0.999);
  CHECK(p[0] == doctest::Approx(0.5 - 1e-4 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-15));
  std::vector<double> q{0.25, -1.0}, z{0.0, 0.0};
  AdamState s2;
  adam_step(q, z, 1e-3, s2);
  CHECK(q == std::vector<double>{0.25, -1.0});
  const LrSchedule sched;
  CHECK(sched.at(25000) == 1e-4);
  CHECK(sched.at(25001) == 1e-5);
  std::vector<double> one{1.0}, bad{std::nan("")};
  AdamState s3;
  CHECK_THROWS_AS(adam_step(one, bad, 1e-3, s3), Error);
}

TEST_CASE("supervised training halves held-out noise error") {
  const int size = 24;
  IsoNoiseParams p;
  p.iso = 1600;
  p.k = 4e-3;
  p.sigma_read = 0.01;
  p.n_fp = ImagePlane(size, size);
  auto clean_frame = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = u(rng), bx = u(rng) * 0.3, by = u(rng) * 0.3, cx = u(rng) * size;
    ImagePlane c(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        c.at(x, y) = 0.1 + 0.4 * a + bx * std::sin(x * 0.3) + by * std::cos(y * 0.25) +
                     (x > cx ? 0.2 : 0.0);
    return c;
  };
  auto mse_on = [&](const ExtractorNet& net, std::uint64_t first, int frames) {
    double s = 0.0;
    for (int f = 0; f < frames; ++f) {
      const ImagePlane c = clean_frame(first + f);
      const ImagePlane n = sample_noise(c, p, first + f, NoiseMode::HeteroscedasticGaussian);
      ImagePlane noisy = c;
      for (std::size_t i = 0; i < c.data.size(); ++i) noisy.data[i] += n.data[i];
      const ImagePlane est = net.forward(noisy);
      for (std::size_t i = 0; i < c.data.size(); ++i) s += std::pow(est.data[i] - n.data[i], 2);
    }
    return s / (frames * size * size);
  };
  ExtractorNet net = ExtractorNet::create(1);
  net.schedule.initial = 1e-3;
  const double before = mse_on(net, 100000, 8);
  for (int it = 0; it < 2000; ++it) {
    const ImagePlane c = clean_frame(it);
    const ImagePlane n = sample_noise(c, p, it, NoiseMode::HeteroscedasticGaussian);
    ImagePlane noisy = c;
    for (std::size_t i = 0; i < c.data.size(); ++i) noisy.data[i] += n.data[i];
    ExtractorCache cache;
    const ImagePlane est = net.forward(noisy, &cache);
    ImagePlane g(size, size);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      g.data[i] = 2.0 * (est.data[i] - n.data[i]) / g.data.size();
    net.step(net.backward(cache, g).params);
  }
  const double after = mse_on(net, 100000, 8);
  INFO("before " << before << " after " << after);
  CHECK(after < 0.5 * before);
}

TEST_CASE("extractor save/load round trip") {
  ExtractorNet net = randomized(3);
  net.adam.resize(net.parameter_count());
  net.adam.v[7] = 0.5;
  net.adam.step = 42;
  const auto path = std::filesystem::temp_directory_path() / "rawsplat_net_test.xnet";
  save_extractor(net, path, true);
  const ExtractorNet back = load_extractor(path);
  CHECK(back.pack() == net.pack());
  CHECK(back.adam.v == net.adam.v);
  CHECK(back.adam.step == 42);
  std::filesystem::remove(path);
}
