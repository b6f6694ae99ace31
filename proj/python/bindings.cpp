// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rawsplat/analysis.hpp"
#include "rawsplat/calibration.hpp"
#include "rawsplat/distortion.hpp"
#include "rawsplat/error.hpp"
#include "rawsplat/harness.hpp"
#include "rawsplat/image.hpp"
#include "rawsplat/noise_model.hpp"

namespace py = pybind11;
using namespace rawsplat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const ImagePlane& p) {
  Array out({p.height, p.width});
  std::copy(p.data.begin(), p.data.end(), out.mutable_data());
  return out;
}

ImagePlane from_numpy(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  ImagePlane p(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), p.data.begin());
  return p;
}

NoiseMode mode_of(const std::string& s) {
  if (s == "poisson") return NoiseMode::Poisson;
  if (s == "gaussian" || s == "hg") return NoiseMode::HeteroscedasticGaussian;
  throw py::value_error("noise mode must be 'poisson' or 'gaussian'");
}

py::dict metrics_dict(const MetricsRow& m) {
  py::dict d;
  d["iteration"] = m.iteration;
  d["raw_psnr"] = m.raw_psnr;
  d["tonemapped_psnr"] = m.tonemapped_psnr;
  d["gaussians"] = m.gaussians;
  d["aniso_median"] = m.aniso_median;
  d["aniso_p95"] = m.aniso_p95;
  d["loss_total"] = m.loss_total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "rawsplat native core";

  py::register_exception<Error>(m, "RawsplatError", PyExc_RuntimeError);

  py::class_<RawImage>(m, "RawImage")
      .def(py::init<>())
      .def_readwrite("black_level", &RawImage::black_level)
      .def_readwrite("white_level", &RawImage::white_level)
      .def_readwrite("iso", &RawImage::iso)
      .def_readwrite("exposure_s", &RawImage::exposure_s)
      .def_property(
          "data",
          [](const RawImage& r) {
            py::array_t<float> out({r.height, r.width});
            std::copy(r.data.begin(), r.data.end(), out.mutable_data());
            return out;
          },
          [](RawImage& r, py::array_t<float, py::array::c_style | py::array::forcecast> a) {
            if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
            r.height = static_cast<std::uint32_t>(a.shape(0));
            r.width = static_cast<std::uint32_t>(a.shape(1));
            r.data.assign(a.data(), a.data() + a.size());
          });

  m.def("load_raw", &load_raw, py::arg("path"));
  m.def("save_raw", &save_raw, py::arg("image"), py::arg("path"));
  m.def("normalize", [](const RawImage& r) { return to_numpy(normalize(r)); });
  m.def("psnr", [](const Array& a, const Array& b, double peak) { return psnr(from_numpy(a), from_numpy(b), peak); },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
  m.def("tone_map", [](const Array& a, double gain) { return to_numpy(tone_map(from_numpy(a), gain)); },
        py::arg("image"), py::arg("gain"));

  py::class_<NoiseModelParams>(m, "NoiseModel")
      .def(py::init<>())
      .def_readwrite("a_k", &NoiseModelParams::a_k)
      .def_readwrite("b_k", &NoiseModelParams::b_k)
      .def_readwrite("a_read", &NoiseModelParams::a_read)
      .def_readwrite("b_read", &NoiseModelParams::b_read)
      .def_readwrite("iso_min", &NoiseModelParams::iso_min)
      .def_readwrite("iso_max", &NoiseModelParams::iso_max)
      .def_property(
          "n_fp_k", [](const NoiseModelParams& p) { return to_numpy(p.n_fp_k); },
          [](NoiseModelParams& p, const Array& a) { p.n_fp_k = from_numpy(a); })
      .def_property(
          "n_fp_b", [](const NoiseModelParams& p) { return to_numpy(p.n_fp_b); },
          [](NoiseModelParams& p, const Array& a) { p.n_fp_b = from_numpy(a); })
      .def("at_iso", &params_at_iso, py::arg("iso"));

  py::class_<IsoNoiseParams>(m, "IsoNoise")
      .def(py::init<>())
      .def_readwrite("iso", &IsoNoiseParams::iso)
      .def_readwrite("k", &IsoNoiseParams::k)
      .def_readwrite("sigma_read", &IsoNoiseParams::sigma_read)
      .def_property(
          "n_fp", [](const IsoNoiseParams& p) { return to_numpy(p.n_fp); },
          [](IsoNoiseParams& p, const Array& a) { p.n_fp = from_numpy(a); });

  m.def("load_noise_model", &load_noise_model, py::arg("path"));
  m.def("save_noise_model", &save_noise_model, py::arg("model"), py::arg("path"));
  m.def(
      "sample_noise",
      [](const Array& clean, const IsoNoiseParams& p, std::uint64_t seed, const std::string& mode) {
        return to_numpy(sample_noise(from_numpy(clean), p, seed, mode_of(mode)));
      },
      py::arg("clean"), py::arg("params"), py::arg("seed"), py::arg("mode") = "poisson");
  m.def(
      "hg_sigma", [](const Array& s, const IsoNoiseParams& p) { return to_numpy(hg_sigma(from_numpy(s), p)); },
      py::arg("signal"), py::arg("params"));
  m.def(
      "nll",
      [](const Array& n_hat, const Array& signal, const IsoNoiseParams& p) {
        return nll(from_numpy(n_hat), from_numpy(signal), p).mean;
      },
      py::arg("n_hat"), py::arg("signal"), py::arg("params"));

  py::class_<DistortionCoeffs>(m, "DistortionCoeffs")
      .def(py::init([](double k1, double k2, double k3, double k4, double p1, double p2) {
             return DistortionCoeffs{k1, k2, k3, k4, p1, p2};
           }),
           py::arg("k1") = 0.0, py::arg("k2") = 0.0, py::arg("k3") = 0.0, py::arg("k4") = 0.0,
           py::arg("p1") = 0.0, py::arg("p2") = 0.0)
      .def_readwrite("k1", &DistortionCoeffs::k1)
      .def_readwrite("k2", &DistortionCoeffs::k2)
      .def_readwrite("k3", &DistortionCoeffs::k3)
      .def_readwrite("k4", &DistortionCoeffs::k4)
      .def_readwrite("p1", &DistortionCoeffs::p1)
      .def_readwrite("p2", &DistortionCoeffs::p2);

  m.def(
      "distort_point",
      [](double x, double y, const DistortionCoeffs& c) {
        const Point2 p = distort_point(x, y, c);
        return py::make_tuple(p.x, p.y);
      },
      py::arg("x"), py::arg("y"), py::arg("coeffs"));
  m.def(
      "undistort_point",
      [](double x, double y, const DistortionCoeffs& c) {
        const UndistortResult r = undistort_point(x, y, c);
        return py::make_tuple(r.point.x, r.point.y, r.iterations);
      },
      py::arg("x"), py::arg("y"), py::arg("coeffs"));

  m.def(
      "calibrate_manifest",
      [](const std::filesystem::path& manifest) { return calibrate_from_manifest(manifest).model; },
      py::arg("manifest"));

  m.def(
      "variance_study",
      [](double sigma, std::vector<int> view_counts, int trials, int pixels, std::uint64_t seed) {
        VarianceStudyConfig c;
        c.sigma = sigma;
        c.view_counts = std::move(view_counts);
        c.trials = trials;
        c.pixels = pixels;
        c.seed = seed;
        const auto rows = optimal_target_variance(c);
        py::list out;
        for (const auto& r : rows) out.append(py::make_tuple(r.n, r.var_empirical, r.var_sigma2_over_n));
        return py::make_tuple(out, loglog_slope(rows));
      },
      py::arg("sigma") = 1.0, py::arg("view_counts") = std::vector<int>{2, 4, 8, 16, 32},
      py::arg("trials") = 100, py::arg("pixels") = 10000, py::arg("seed") = 0);

  m.def(
      "train",
      [](const std::filesystem::path& config, const std::filesystem::path& out, bool resume) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(load_train_config(config), out, resume);
        }
        py::list rows;
        for (const auto& row : r.metrics) rows.append(metrics_dict(row));
        return rows;
      },
      py::arg("config"), py::arg("out"), py::arg("resume") = false);
}
