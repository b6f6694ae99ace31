// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/extractor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "rawsplat/blob.hpp"
#include "rawsplat/error.hpp"
#include "rawsplat/rng.hpp"

namespace rawsplat {

namespace {

constexpr std::array<char, 8> kNetMagic{'X', 'N', 'E', 'T', '0', '0', '0', '1'};

int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Copies one reflected, shifted image row: dst[x] = src[reflect(x + dx)].
void shifted_row(const double* src, double* dst, int width, int dx) {
  for (int x = 0; x < width; ++x) {
    const int sx = x + dx;
    if (sx >= 0 && sx < width) {
      const int n = std::min(width - x, width - sx);
      std::copy_n(src + sx, n, dst + x);
      x += n - 1;
    } else {
      dst[x] = src[reflect(sx, width)];
    }
  }
}

void shifted_row_add(const double* src, double* dst, int width, int dx) {
  // Adjoint of shifted_row: dst[reflect(x + dx)] += src[x].
  for (int x = 0; x < width; ++x) dst[reflect(x + dx, width)] += src[x];
}

// (C*9) x (H*W) patch matrix; row index c*9 + ky*3 + kx.
RowMatrix im2col(const RowMatrix& x, int width, int height) {
  const int channels = static_cast<int>(x.rows());
  RowMatrix cols(channels * 9, width * height);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = cols.row(c * 9 + ky * 3 + kx).data();
        for (int y = 0; y < height; ++y) {
          const int sy = reflect(y + ky - 1, height);
          shifted_row(x.row(c).data() + sy * width, dst + y * width, width, kx - 1);
        }
      }
    }
  }
  return cols;
}

RowMatrix col2im(const RowMatrix& cols, int channels, int width, int height) {
  RowMatrix x = RowMatrix::Zero(channels, width * height);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = cols.row(c * 9 + ky * 3 + kx).data();
        for (int y = 0; y < height; ++y) {
          const int sy = reflect(y + ky - 1, height);
          shifted_row_add(src + y * width, x.row(c).data() + sy * width, width, kx - 1);
        }
      }
    }
  }
  return x;
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
weight_matrix(const ConvLayer& layer) {
  return {layer.weight.data(), layer.out_channels, layer.in_channels * 9};
}

ConvLayer make_layer(int in, int out) {
  ConvLayer l;
  l.in_channels = in;
  l.out_channels = out;
  l.weight.assign(static_cast<std::size_t>(in) * out * 9, 0.0);
  l.bias.assign(out, 0.0);
  return l;
}

}  // namespace

ExtractorNet::ExtractorNet()
    : layers{make_layer(1, kWidth), make_layer(kWidth, kWidth), make_layer(kWidth, kWidth),
             make_layer(kWidth, 1)} {
  adam.resize(parameter_count());
}

ExtractorNet ExtractorNet::create(std::uint64_t seed) {
  ExtractorNet net;
  for (int li = 0; li + 1 < kLayers; ++li) {
    ConvLayer& l = net.layers[li];
    CounterRng rng(stream_key(seed, 0x6e6574, static_cast<std::uint64_t>(li)));
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (l.in_channels * 9.0)));
    for (double& w : l.weight) w = normal(rng);
  }
  return net;
}

std::size_t ExtractorNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const ConvLayer& l : layers) n += l.parameter_count();
  return n;
}

std::vector<double> ExtractorNet::pack() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const ConvLayer& l : layers) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

void ExtractorNet::unpack(std::span<const double> params) {
  require(params.size() == parameter_count(), ErrorKind::Validation,
          "extractor parameter length mismatch");
  std::size_t off = 0;
  for (ConvLayer& l : layers) {
    std::copy_n(params.begin() + off, l.weight.size(), l.weight.begin());
    off += l.weight.size();
    std::copy_n(params.begin() + off, l.bias.size(), l.bias.begin());
    off += l.bias.size();
  }
}

std::uint64_t ExtractorNet::fingerprint() const {
  std::uint64_t h = 0x786e6574ULL;
  for (const ConvLayer& l : layers) {
    for (double v : l.weight) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
    for (double v : l.bias) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

ImagePlane ExtractorNet::forward(const ImagePlane& input, ExtractorCache* cache) const {
  input.validate();
  require(input.width >= 2 && input.height >= 2, ErrorKind::Validation,
          "extractor input must be at least 2x2");
  const int w = input.width, h = input.height;
  RowMatrix x = Eigen::Map<const Eigen::RowVectorXd>(input.data.data(), w * h);
  if (cache) {
    cache->fingerprint = fingerprint();
    cache->width = w;
    cache->height = h;
    cache->columns.clear();
    cache->outputs.clear();
  }
  for (int li = 0; li < kLayers; ++li) {
    const ConvLayer& l = layers[li];
    RowMatrix cols = im2col(x, w, h);
    RowMatrix y = weight_matrix(l) * cols;
    for (int o = 0; o < l.out_channels; ++o) y.row(o).array() += l.bias[o];
    if (li + 1 < kLayers) y = y.cwiseMax(0.0);
    if (cache) {
      cache->columns.push_back(std::move(cols));
      cache->outputs.push_back(y);
    }
    x = std::move(y);
  }
  ImagePlane out(w, h);
  Eigen::Map<Eigen::RowVectorXd>(out.data.data(), w * h) = x.row(0);
  return out;
}

ExtractorGradients ExtractorNet::backward(const ExtractorCache& cache,
                                          const ImagePlane& grad_out) const {
  require(cache.fingerprint == fingerprint() && cache.columns.size() == kLayers,
          ErrorKind::Validation, "extractor cache is stale");
  require(grad_out.width == cache.width && grad_out.height == cache.height,
          ErrorKind::Validation, "extractor gradient has wrong dimensions");
  const int w = cache.width, h = cache.height;
  ExtractorGradients out;
  out.params.assign(parameter_count(), 0.0);

  std::vector<std::size_t> offsets(kLayers);
  std::size_t off = 0;
  for (int li = 0; li < kLayers; ++li) {
    offsets[li] = off;
    off += layers[li].parameter_count();
  }

  RowMatrix g = Eigen::Map<const Eigen::RowVectorXd>(grad_out.data.data(), w * h);
  for (int li = kLayers - 1; li >= 0; --li) {
    const ConvLayer& l = layers[li];
    if (li + 1 < kLayers) {
      g = (cache.outputs[li].array() > 0.0).select(g, 0.0);
    }
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
        out.params.data() + offsets[li], l.out_channels, l.in_channels * 9);
    gw = g * cache.columns[li].transpose();
    Eigen::Map<Eigen::VectorXd> gb(out.params.data() + offsets[li] + l.weight.size(),
                                   l.out_channels);
    gb = g.rowwise().sum();
    const RowMatrix gcols = weight_matrix(l).transpose() * g;
    g = col2im(gcols, l.in_channels, w, h);
  }
  out.input = ImagePlane(w, h);
  Eigen::Map<Eigen::RowVectorXd>(out.input.data.data(), w * h) = g.row(0);
  return out;
}

void ExtractorNet::step(std::span<const double> grads) {
  if (adam.m.size() != parameter_count()) adam.resize(parameter_count());
  std::vector<double> params = pack();
  adam_step(params, grads, schedule.at(adam.step + 1), adam);
  unpack(params);
}

ImagePlane extract(const ImagePlane& raw, const ImagePlane& n_fp, const ExtractorNet& net,
                   ExtractorCache* cache) {
  require(raw.same_shape(n_fp), ErrorKind::Validation, "extract: shape mismatch");
  ImagePlane input(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.data.size(); ++i) input.data[i] = raw.data[i] - n_fp.data[i];
  ImagePlane out = net.forward(input, cache);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += n_fp.data[i];
  return out;
}

void save_extractor(const ExtractorNet& net, const std::filesystem::path& path,
                    bool with_optimizer) {
  Blob blob;
  blob.header["kind"] = "noise_extractor";
  nlohmann::json shapes = nlohmann::json::array();
  for (const ConvLayer& l : net.layers) {
    shapes.push_back({{"in", l.in_channels}, {"out", l.out_channels}, {"kernel", 3}});
  }
  blob.header["layers"] = shapes;
  blob.header["schedule"] = {{"initial", net.schedule.initial},
                             {"decayed", net.schedule.decayed},
                             {"milestone", net.schedule.milestone}};
  blob.add("params", net.pack());
  if (with_optimizer) {
    blob.header["adam_step"] = net.adam.step;
    blob.add("adam_m", net.adam.m);
    blob.add("adam_v", net.adam.v);
  }
  write_blob(blob, kNetMagic, path);
}

ExtractorNet load_extractor(const std::filesystem::path& path) {
  const Blob blob = read_blob(kNetMagic, path);
  ExtractorNet net;
  const auto& shapes = blob.header.at("layers");
  require(shapes.size() == ExtractorNet::kLayers, ErrorKind::Format, "unexpected layer count");
  for (int li = 0; li < ExtractorNet::kLayers; ++li) {
    require(shapes[li].at("in").get<int>() == net.layers[li].in_channels &&
                shapes[li].at("out").get<int>() == net.layers[li].out_channels,
            ErrorKind::Format, "unexpected layer shape");
  }
  net.unpack(blob.get("params"));
  if (blob.header.contains("schedule")) {
    const auto& s = blob.header["schedule"];
    net.schedule.initial = s.at("initial").get<double>();
    net.schedule.decayed = s.at("decayed").get<double>();
    net.schedule.milestone = s.at("milestone").get<std::int64_t>();
  }
  if (blob.has("adam_m")) {
    net.adam.m = blob.get("adam_m");
    net.adam.v = blob.get("adam_v");
    net.adam.step = blob.header.at("adam_step").get<std::int64_t>();
  }
  return net;
}

}  // namespace rawsplat
