"""Variance-exploding noise schedule and the forward diffusion it induces.

The ladder is geometric: sigma_i = sigma_min * (sigma_max / sigma_min)^(i/(N-1))
for i = 0 .. N-1. The forward kernel from the clean state to rung i adds
complex Gaussian noise of total per-entry variance sigma_i^2 - sigma_0^2, so
rung 0 is noise-free and variances add exactly along the ladder.

A trajectory can switch into a wavelet subspace at rung m_split: from there on
the carried state is either the LL band alone (ll_projection) or all four
bands (four_band), and noise increments land in that representation.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from .numerics import gaussian_noise, require_image
from .wavelet import WaveletBands, dwt

MODES = ("full", "ll_projection", "four_band")
FULL = "full"
SUBSPACE = "subspace"


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_min: float
    sigma_max: float
    n_steps: int
    m_split: int

    def __post_init__(self):
        if not (0 < self.sigma_min < self.sigma_max):
            raise ValueError(
                f"need 0 < sigma_min < sigma_max, got "
                f"{self.sigma_min}, {self.sigma_max}"
            )
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be >= 2, got {self.n_steps}")
        if not (0 <= self.m_split <= self.n_steps):
            raise ValueError(
                f"m_split must lie in [0, {self.n_steps}], got {self.m_split}"
            )


def sigma_ladder(sched):
    """All N rung values as an array."""
    return np.geomspace(sched.sigma_min, sched.sigma_max, sched.n_steps)


def sigma_at(sched, i):
    """Noise level of rung i."""
    if not (0 <= i < sched.n_steps):
        raise ValueError(f"rung {i} outside [0, {sched.n_steps})")
    ratio = sched.sigma_max / sched.sigma_min
    return sched.sigma_min * ratio ** (i / (sched.n_steps - 1))


def kernel_variance(sched, i):
    """Total per-entry variance accumulated from rung 0 up to rung i."""
    return sigma_at(sched, i) ** 2 - sched.sigma_min ** 2


def perturb(k0, sched, i, rng):
    """One draw from the forward kernel at rung i, starting from clean k0."""
    k0 = require_image(k0)
    return k0 + gaussian_noise(rng, k0.shape, np.sqrt(kernel_variance(sched, i)))


def auto_split_index(sched, k0):
    """Smallest rung whose noise power reaches 25x the peak signal power.

    A conservative handoff point: beyond it the noise dominates every entry,
    so restricting the walk to the smooth subspace discards almost nothing
    but noise. Clamped into [1, N-1].
    """
    k0 = require_image(k0)
    threshold = 25.0 * float(np.max(np.abs(k0)) ** 2)
    ladder = sigma_ladder(sched)
    hits = np.nonzero(ladder ** 2 >= threshold)[0]
    split = int(hits[0]) if hits.size else sched.n_steps - 1
    return int(np.clip(split, 1, sched.n_steps - 1))


@dataclass
class DiffusionState:
    """One rung of a trajectory: the carried value and where it lives."""

    value: Any
    step_index: int
    space: str


def _stack_of(value):
    return value.stack() if isinstance(value, WaveletBands) else value


def _like(template, arr):
    return WaveletBands.from_stack(arr) if isinstance(template, WaveletBands) else arr


def _enter_subspace(value, mode):
    bands = dwt(value)
    return bands.ll if mode == "ll_projection" else bands


def forward_trajectory(k0, sched, rng, mode="full"):
    """Diffuse k0 up the full ladder, switching representation at m_split.

    Returns N DiffusionStates; state i sits at noise level sigma_i. In mode
    "full" every state is a full image. Otherwise states at step >= m_split
    carry the subspace representation (LL band array for ll_projection,
    WaveletBands for four_band); the projection happens between rungs
    m_split-1 and m_split, before that rung's noise increment.
    """
    if mode not in MODES:
        raise ValueError(f"unknown trajectory mode {mode!r}")
    k0 = require_image(k0)
    value = k0
    space = FULL
    if mode != FULL and sched.m_split == 0:
        value = _enter_subspace(value, mode)
        space = SUBSPACE
    states = [DiffusionState(value=value, step_index=0, space=space)]
    ladder = sigma_ladder(sched)
    for i in range(1, sched.n_steps):
        if mode != FULL and i == sched.m_split:
            value = _enter_subspace(value, mode)
            space = SUBSPACE
        increment_std = np.sqrt(ladder[i] ** 2 - ladder[i - 1] ** 2)
        arr = _stack_of(value)
        arr = arr + gaussian_noise(rng, arr.shape, increment_std)
        value = _like(value, arr)
        states.append(DiffusionState(value=value, step_index=i, space=space))
    return states
