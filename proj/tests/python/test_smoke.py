# Copyright Contributors to the rawsplat project
# SPDX-License-Identifier: Apache-2.0
import json
import math

import numpy as np
import pytest

import rawsplat as rs


def test_raw_round_trip(tmp_path):
    img = rs.RawImage()
    img.data = np.arange(12, dtype=np.float32).reshape(3, 4) + 600.0
    img.black_level = 512.0
    img.white_level = 16383.0
    img.iso = 800.0
    rs.save_raw(img, tmp_path / "a.rawf")
    back = rs.load_raw(tmp_path / "a.rawf")
    assert back.data.shape == (3, 4)
    assert np.array_equal(back.data, img.data)
    plane = rs.normalize(back)
    assert plane[0, 0] == pytest.approx((600.0 - 512.0) / (16383.0 - 512.0))


def test_nll_unit_sigma():
    p = rs.IsoNoise()
    p.iso = 400.0
    p.k = 0.0
    p.sigma_read = 1.0
    p.n_fp = np.zeros((8, 8))
    value = rs.nll(np.zeros((8, 8)), np.full((8, 8), 0.3), p)
    assert value == pytest.approx(0.5 * math.log(2.0 * math.pi), abs=1e-12)


def test_sampled_noise_variance():
    p = rs.IsoNoise()
    p.iso = 800.0
    p.k = 0.01
    p.sigma_read = 0.02
    p.n_fp = np.zeros((200, 200))
    n = rs.sample_noise(np.full((200, 200), 0.25), p, seed=4, mode="gaussian")
    assert n.var() == pytest.approx(0.02**2 + 0.25 * 0.01, rel=0.03)
    with pytest.raises(ValueError):
        rs.sample_noise(np.zeros((2, 2)), p, seed=1, mode="laplace")


def test_distortion_round_trip():
    c = rs.DistortionCoeffs(k1=-0.12, k2=0.03, p1=0.002, p2=-0.001)
    xd, yd = rs.distort_point(0.4, -0.3, c)
    x, y, iterations = rs.undistort_point(xd, yd, c)
    assert (x, y) == (pytest.approx(0.4, abs=1e-9), pytest.approx(-0.3, abs=1e-9))
    assert iterations <= 10


def test_noise_model_out_of_range(tmp_path):
    m = rs.NoiseModel()
    m.a_k, m.b_k, m.a_read, m.b_read = 1e-5, 1e-3, 0.5, math.log(0.2)
    m.iso_min, m.iso_max = 100.0, 800.0
    m.n_fp_k = np.zeros((4, 4))
    m.n_fp_b = np.zeros((4, 4))
    assert m.at_iso(800.0).k == pytest.approx(0.009)
    with pytest.raises(rs.RawsplatError):
        m.at_iso(3200.0)
    rs.save_noise_model(m, tmp_path / "model.json")
    assert json.loads((tmp_path / "model.json").read_text())
    assert rs.load_noise_model(tmp_path / "model.json").a_k == m.a_k


def test_variance_study_slope():
    rows, slope = rs.variance_study(trials=20, pixels=2000, seed=2)
    assert [r[0] for r in rows] == [2, 4, 8, 16, 32]
    assert slope == pytest.approx(-1.0, abs=0.05)
