// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "rawsplat/error.hpp"
#include "rawsplat/image.hpp"
#include "test_support.hpp"

using namespace rawsplat;

namespace {

std::filesystem::path tmp(const char* name) { return std::filesystem::temp_directory_path() / name; }

std::vector<char> bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RawImage frame(std::uint32_t w, std::uint32_t h) {
  RawImage r;
  r.width = w;
  r.height = h;
  r.black_level = 512;
  r.white_level = 4095;
  r.iso = 800;
  r.exposure_s = 0.02f;
  r.data.assign(static_cast<std::size_t>(w) * h, 1000.0f);
  return r;
}

}  // namespace

TEST_CASE("RAWF round trip is byte exact") {
  RawImage small = frame(2, 2);
  small.data = {512.0f, 700.25f, 4095.0f, 1234.5f};
  save_raw(small, tmp("rs_small.rawf"));
  const RawImage back = load_raw(tmp("rs_small.rawf"));
  CHECK(back.data == small.data);
  CHECK(back.iso == small.iso);
  save_raw(back, tmp("rs_small2.rawf"));
  CHECK(bytes_of(tmp("rs_small.rawf")) == bytes_of(tmp("rs_small2.rawf")));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 4095.0f);
  RawImage big = frame(16, 16);
  for (float& v : big.data) v = u(rng);
  save_raw(big, tmp("rs_big.rawf"));
  const RawImage b2 = load_raw(tmp("rs_big.rawf"));
  CHECK(std::memcmp(b2.data.data(), big.data.data(), big.data.size() * sizeof(float)) == 0);
}

TEST_CASE("RAWF error paths") {
  save_raw(frame(4, 3), tmp("rs_bad.rawf"));
  auto bytes = bytes_of(tmp("rs_bad.rawf"));
  bytes[3] = 'X';
  {
    std::ofstream out(tmp("rs_bad.rawf"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_raw(tmp("rs_bad.rawf"));
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
  bytes[3] = 'F';
  {
    std::ofstream out(tmp("rs_bad.rawf"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  }
  try {
    load_raw(tmp("rs_bad.rawf"));
    FAIL("expected a length error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Length);
  }
  RawImage nan = frame(2, 2);
  nan.data[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(save_raw(nan, tmp("rs_nan.rawf")), Error);
  CHECK_THROWS_AS(load_raw(tmp("rs_missing_file.rawf")), Error);
}

TEST_CASE("normalize") {
  RawImage r = frame(3, 1);
  r.data = {512.0f, 4095.0f, 2303.5f};
  const ImagePlane p = normalize(r);
  CHECK(p.data[0] == 0.0);
  CHECK(p.data[1] == 1.0);
  CHECK(p.data[2] == doctest::Approx(0.5).epsilon(1e-15));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10; ++t) {
    RawImage q = frame(1, 1);
    q.black_level = static_cast<float>(100 + 500 * u(rng));
    q.white_level = static_cast<float>(q.black_level + 1000 + 3000 * u(rng));
    q.data[0] = static_cast<float>(q.black_level + (q.white_level - q.black_level) * u(rng));
    const double expect = (static_cast<double>(q.data[0]) - q.black_level) /
                          (static_cast<double>(q.white_level) - q.black_level);
    CHECK(normalize(q).data[0] == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("psnr") {
  std::mt19937_64 rng(3);
  const ImagePlane a = test::random_plane(9, 7, rng), b = test::random_plane(9, 7, rng);
  CHECK(psnr(a, a) == kPsnrIdentical);
  ImagePlane c(10, 10, 0.0), d(10, 10, 0.1);
  CHECK(psnr(c, d, 1.0) == doctest::Approx(20.0).epsilon(1e-12));
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  mse /= a.size();
  CHECK(psnr(a, b, 2.0) == doctest::Approx(10.0 * std::log10(4.0 / mse)).epsilon(1e-12));
  CHECK(psnr(a, b) == psnr(b, a));
}

TEST_CASE("tone_map") {
  ImagePlane p(3, 1);
  p.data = {0.0, 0.25, 0.0625};
  const ImagePlane t = tone_map(p, 4.0);
  CHECK(t.data[0] == 0.0);
  CHECK(t.data[1] == doctest::Approx(1.0));
  CHECK(t.data[2] == doctest::Approx(0.5325).epsilon(1e-4));
}
