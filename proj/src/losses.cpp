// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include "rawsplat/losses.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "rawsplat/error.hpp"

namespace rawsplat {

namespace {

constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;

std::array<double, 2 * kSsimRadius + 1> ssim_kernel() {
  std::array<double, 2 * kSsimRadius + 1> k{};
  double sum = 0.0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    k[i + kSsimRadius] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
    sum += k[i + kSsimRadius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable "same" filtering with zero padding. The kernel is symmetric, so
// this operator is its own adjoint.
ImagePlane blur(const ImagePlane& in) {
  static const auto k = ssim_kernel();
  const int w = in.width, h = in.height;
  ImagePlane tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -kSsimRadius; d <= kSsimRadius; ++d) {
        const int xx = x + d;
        if (xx >= 0 && xx < w) s += k[d + kSsimRadius] * in.data[static_cast<std::size_t>(y) * w + xx];
      }
      tmp.data[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -kSsimRadius; d <= kSsimRadius; ++d) {
        const int yy = y + d;
        if (yy >= 0 && yy < h) s += k[d + kSsimRadius] * tmp.data[static_cast<std::size_t>(yy) * w + x];
      }
      out.data[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

void require_same(const ImagePlane& a, const ImagePlane& b, const char* what) {
  require(a.same_shape(b), ErrorKind::Validation, std::string(what) + ": shape mismatch");
}

std::size_t count_valid(std::span<const std::uint8_t> mask, std::size_t n) {
  if (mask.empty()) return n;
  std::size_t c = 0;
  for (auto m : mask) c += m != 0;
  return c;
}

}  // namespace

void LossWeights::validate() const {
  require(lambda_dssim >= 0.0 && lambda_dssim <= 1.0, ErrorKind::Validation,
          "lambda_dssim must lie in [0, 1]");
  require(lambda_nd >= 0.0 && lambda_cov >= 0.0, ErrorKind::Validation,
          "loss weights must be non-negative");
  require(epsilon > 0.0, ErrorKind::Validation, "epsilon must be positive");
  require(cov_patch >= 1, ErrorKind::Validation, "cov patch must be positive");
}

ScalarLoss ssim(const ImagePlane& a, const ImagePlane& b, double peak) {
  require_same(a, b, "ssim");
  const std::size_t n = a.data.size();
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  ImagePlane aa(a.width, a.height), bb(a.width, a.height), ab(a.width, a.height);
  for (std::size_t i = 0; i < n; ++i) {
    aa.data[i] = a.data[i] * a.data[i];
    bb.data[i] = b.data[i] * b.data[i];
    ab.data[i] = a.data[i] * b.data[i];
  }
  const ImagePlane mu_a = blur(a), mu_b = blur(b), e_aa = blur(aa), e_bb = blur(bb),
                   e_ab = blur(ab);
  ImagePlane g_mu(a.width, a.height), g_aa(a.width, a.height), g_ab(a.width, a.height);
  ScalarLoss out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ma = mu_a.data[i], mb = mu_b.data[i];
    const double a1 = 2.0 * ma * mb + c1;
    const double a2 = 2.0 * (e_ab.data[i] - ma * mb) + c2;
    const double b1 = ma * ma + mb * mb + c1;
    const double b2 = (e_aa.data[i] - ma * ma) + (e_bb.data[i] - mb * mb) + c2;
    const double s = a1 * a2 / (b1 * b2);
    out.value += s;
    g_mu.data[i] = inv_n * s * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2);
    g_aa.data[i] = -inv_n * s / b2;
    g_ab.data[i] = inv_n * 2.0 * a1 / (b1 * b2);
  }
  out.value *= inv_n;
  const ImagePlane t_mu = blur(g_mu), t_aa = blur(g_aa), t_ab = blur(g_ab);
  out.grad = ImagePlane(a.width, a.height);
  for (std::size_t i = 0; i < n; ++i) {
    out.grad.data[i] = t_mu.data[i] + 2.0 * a.data[i] * t_aa.data[i] + b.data[i] * t_ab.data[i];
  }
  return out;
}

ScalarLoss loss_3dgs(const ImagePlane& x_hat, const ImagePlane& x, double lambda_dssim) {
  require_same(x_hat, x, "loss_3dgs");
  const std::size_t n = x_hat.data.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  ScalarLoss out;
  out.grad = ImagePlane(x.width, x.height);
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x_hat.data[i] - x.data[i];
    l1 += std::abs(d);
    out.grad.data[i] = (1.0 - lambda_dssim) * inv_n * static_cast<double>((d > 0) - (d < 0));
  }
  out.value = (1.0 - lambda_dssim) * l1 * inv_n;
  if (lambda_dssim > 0.0) {
    const ScalarLoss s = ssim(x_hat, x);
    out.value += lambda_dssim * 0.5 * (1.0 - s.value);
    for (std::size_t i = 0; i < n; ++i) out.grad.data[i] -= 0.5 * lambda_dssim * s.grad.data[i];
  }
  return out;
}

RawNerfLoss loss_rawnerf(const ImagePlane& x_hat, const ImagePlane& target, double epsilon,
                         std::span<const std::uint8_t> mask) {
  require_same(x_hat, target, "loss_rawnerf");
  require(epsilon > 0.0, ErrorKind::Validation, "epsilon must be positive");
  const std::size_t n = x_hat.data.size();
  require(mask.empty() || mask.size() == n, ErrorKind::Validation, "mask size mismatch");
  const std::size_t valid = count_valid(mask, n);
  require(valid > 0, ErrorKind::Validation, "loss_rawnerf: empty mask");
  const double inv = 1.0 / static_cast<double>(valid);
  RawNerfLoss out;
  out.grad_pred = ImagePlane(x_hat.width, x_hat.height);
  out.grad_target = ImagePlane(x_hat.width, x_hat.height);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double denom = x_hat.data[i] + epsilon;
    const double r = (x_hat.data[i] - target.data[i]) / denom;
    out.value += r * r;
    const double g = 2.0 * r / denom * inv;
    out.grad_pred.data[i] = g;
    out.grad_target.data[i] = -g;
  }
  out.value *= inv;
  return out;
}

ScalarLoss loss_cov(const ImagePlane& z_hat, int patch) {
  require(patch >= 1, ErrorKind::Validation, "patch size must be positive");
  require(z_hat.width >= patch && z_hat.height >= patch, ErrorKind::Validation,
          "image smaller than the covariance patch");
  const int px = z_hat.width / patch;
  const int py = z_hat.height / patch;
  const int samples = px * py;
  require(samples >= 2, ErrorKind::InsufficientData, "covariance loss needs at least two patches");
  const int d = patch * patch;
  Eigen::MatrixXd z(d, samples);
  for (int sy = 0; sy < py; ++sy) {
    for (int sx = 0; sx < px; ++sx) {
      const int s = sy * px + sx;
      for (int dy = 0; dy < patch; ++dy) {
        for (int dx = 0; dx < patch; ++dx) {
          z(dy * patch + dx, s) = z_hat.at(sx * patch + dx, sy * patch + dy);
        }
      }
    }
  }
  const Eigen::MatrixXd m = z * z.transpose() / static_cast<double>(samples);
  const Eigen::MatrixXd r = Eigen::MatrixXd::Identity(d, d) - m;
  const double p4 = static_cast<double>(d) * d;
  ScalarLoss out;
  out.value = r.squaredNorm() / p4;
  const Eigen::MatrixXd g = (-4.0 / (static_cast<double>(samples) * p4)) * (r * z);
  out.grad = ImagePlane(z_hat.width, z_hat.height);
  for (int sy = 0; sy < py; ++sy) {
    for (int sx = 0; sx < px; ++sx) {
      const int s = sy * px + sx;
      for (int dy = 0; dy < patch; ++dy) {
        for (int dx = 0; dx < patch; ++dx) {
          out.grad.at(sx * patch + dx, sy * patch + dy) = g(dy * patch + dx, s);
        }
      }
    }
  }
  return out;
}

LossReport loss_nrr(const ImagePlane& render, const ImagePlane& raw, const ImagePlane& n_hat,
                    const IsoNoiseParams& params, const LossWeights& weights,
                    const DistortionMap& map, const GradientRouting& routing) {
  weights.validate();
  require_same(raw, n_hat, "loss_nrr");
  require(map.width == raw.width && map.height == raw.height, ErrorKind::Validation,
          "loss_nrr: distortion map does not match the raw frame");
  require(params.n_fp.same_shape(raw), ErrorKind::Validation,
          "loss_nrr: fixed-pattern map does not match the raw frame");
  const std::size_t n = raw.data.size();
  const ImagePlane pred = apply_map(render, map);

  ImagePlane target(raw.width, raw.height);
  for (std::size_t i = 0; i < n; ++i) target.data[i] = raw.data[i] - n_hat.data[i];
  const RawNerfLoss recon = loss_rawnerf(pred, target, weights.epsilon, map.mask);

  LossReport rep;
  rep.recon = recon.value;
  ImagePlane g_pred = recon.grad_pred;
  rep.grad_noise = ImagePlane(raw.width, raw.height);
  if (routing.recon_to_noise) {
    for (std::size_t i = 0; i < n; ++i) rep.grad_noise.data[i] = -recon.grad_target.data[i];
  }

  const bool need_noise_terms = weights.lambda_nd > 0.0 || weights.lambda_cov > 0.0;
  if (need_noise_terms) {
    const double read_var = params.sigma_read * params.sigma_read;
    ImagePlane var(raw.width, raw.height), resid(raw.width, raw.height);
    for (std::size_t i = 0; i < n; ++i) {
      var.data[i] = read_var + params.k * std::max(pred.data[i], 0.0);
      require(var.data[i] > 0.0, ErrorKind::SingularVariance,
              "loss_nrr: zero noise variance at a pixel");
      resid.data[i] = n_hat.data[i] - params.n_fp.data[i];
    }

    const std::size_t valid = map.valid_count();
    const double inv_valid = 1.0 / static_cast<double>(valid);
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    double nll_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!map.mask[i]) continue;
      const double v = var.data[i], r = resid.data[i];
      nll_sum += 0.5 * (log_2pi + std::log(v)) + r * r / (2.0 * v);
      rep.grad_noise.data[i] += weights.lambda_nd * inv_valid * r / v;
      if (routing.nll_sigma_to_render && pred.data[i] > 0.0) {
        const double d_var = inv_valid * (0.5 / v - r * r / (2.0 * v * v));
        g_pred.data[i] += weights.lambda_nd * d_var * params.k;
      }
    }
    rep.nll = nll_sum * inv_valid;

    ImagePlane z(raw.width, raw.height);
    for (std::size_t i = 0; i < n; ++i) z.data[i] = resid.data[i] / std::sqrt(var.data[i]);
    const ScalarLoss cov = loss_cov(z, weights.cov_patch);
    rep.cov = cov.value;
    for (std::size_t i = 0; i < n; ++i) {
      const double sd = std::sqrt(var.data[i]);
      const double gz = weights.lambda_cov * cov.grad.data[i];
      rep.grad_noise.data[i] += gz / sd;
      if (routing.cov_sigma_to_render && pred.data[i] > 0.0) {
        g_pred.data[i] += gz * (-0.5 * resid.data[i] / (sd * var.data[i])) * params.k;
      }
    }
  }

  rep.total = rep.recon + weights.lambda_nd * rep.nll + weights.lambda_cov * rep.cov;
  rep.grad_render = apply_map_backward(g_pred, map);
  return rep;
}

}  // namespace rawsplat
