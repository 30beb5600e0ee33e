"""Subspace diffusion reconstruction for undersampled k-space data.

The package splits into small focused modules:

- numerics: array contract, unitary FFTs, rng plumbing, SUBK1 file format
- wavelet: one-level orthonormal Haar transform and band bookkeeping
- kspace: sampling masks, the measurement model, zero-filled baselines
- sde: the variance-exploding noise schedule and forward trajectories
- score: analytic Gaussian scores, learned denoisers, checkpoint format
- sampler: predictor-corrector reconstruction with data consistency and
  optional structured low-rank refinement
- evalcli: metrics, synthetic phantoms, experiment config parsing
- cli: the ``subdiff`` command-line entry point
"""

from .evalcli import ExperimentConfig, Metrics, compare, load_config, mse, psnr, ssim
from .kspace import Measurement, SamplingMask, forward, make_mask, zero_filled
from .numerics import fft2, ifft2, make_rng, read_array, spawn_rngs, write_array
from .sampler import HankelConfig, ReconRecord, SamplerConfig, reconstruct
from .score import (
    ArchSpec,
    GaussianPrior,
    ScoreFunction,
    TrainConfig,
    LinearDenoiser,
    denoiser_score_fn,
    fit_linear_denoiser,
    gaussian_score,
    gaussian_score_fn,
    init_denoiser,
    load_checkpoint,
    save_checkpoint,
    subspace_score_adapter,
    train,
)
from .sde import NoiseSchedule, forward_trajectory, kernel_variance, sigma_ladder
from .wavelet import WaveletBands, dwt, idwt, project_ll

__version__ = "0.1.0"

__all__ = [
    "ArchSpec",
    "ExperimentConfig",
    "GaussianPrior",
    "HankelConfig",
    "LinearDenoiser",
    "Measurement",
    "Metrics",
    "NoiseSchedule",
    "ReconRecord",
    "SamplerConfig",
    "SamplingMask",
    "ScoreFunction",
    "TrainConfig",
    "WaveletBands",
    "compare",
    "denoiser_score_fn",
    "dwt",
    "fft2",
    "fit_linear_denoiser",
    "forward",
    "forward_trajectory",
    "gaussian_score",
    "gaussian_score_fn",
    "idwt",
    "ifft2",
    "init_denoiser",
    "kernel_variance",
    "load_checkpoint",
    "load_config",
    "make_mask",
    "make_rng",
    "mse",
    "project_ll",
    "psnr",
    "read_array",
    "reconstruct",
    "save_checkpoint",
    "sigma_ladder",
    "spawn_rngs",
    "ssim",
    "subspace_score_adapter",
    "train",
    "write_array",
    "zero_filled",
]
