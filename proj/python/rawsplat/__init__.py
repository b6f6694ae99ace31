# Copyright Contributors to the rawsplat project
# SPDX-License-Identifier: Apache-2.0
"""Python access to the rawsplat core: RAWF I/O, noise model, distortion, training."""

from ._core import (
    DistortionCoeffs,
    IsoNoise,
    NoiseModel,
    RawImage,
    RawsplatError,
    calibrate_manifest,
    distort_point,
    hg_sigma,
    load_noise_model,
    load_raw,
    nll,
    normalize,
    psnr,
    sample_noise,
    save_noise_model,
    save_raw,
    tone_map,
    train,
    undistort_point,
    variance_study,
)

__all__ = [
    "DistortionCoeffs",
    "IsoNoise",
    "NoiseModel",
    "RawImage",
    "RawsplatError",
    "calibrate_manifest",
    "distort_point",
    "hg_sigma",
    "load_noise_model",
    "load_raw",
    "nll",
    "normalize",
    "psnr",
    "sample_noise",
    "save_noise_model",
    "save_raw",
    "tone_map",
    "train",
    "undistort_point",
    "variance_study",
]
