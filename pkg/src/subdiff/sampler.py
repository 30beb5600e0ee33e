"""Reverse-time predictor-corrector sampling with measurement consistency.

One reverse sweep walks the noise ladder from rung N-1 down to 0. The
predictor moves one rung with the discrete variance-exploding update

    k_{i-1} = k_i + (sigma_i^2 - sigma_{i-1}^2) * score(k_i, sigma_i)
            + sqrt(sigma_i^2 - sigma_{i-1}^2) * Z

and each corrector repetition is a Langevin step whose size adapts to the
score-to-noise ratio: eps = 2 * (r * ||Z|| / ||score||)^2, redrawn per
repetition.

A reconstruction can start the sweep in a wavelet subspace (LL band alone or
all four bands) and hand off to the full grid once at rung m_split; data
consistency blends measured entries back in every dc_every rungs, lifting
through the band transform while the state lives in the subspace. An
optional structured low-rank (Hankel) refinement runs once after the sweep.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .kspace import Measurement, kspace_to_image
from .numerics import gaussian_noise
from .sde import MODES, NoiseSchedule, sigma_ladder
from .score import FULL, SUBSPACE
from .wavelet import WaveletBands, dwt, idwt

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HankelConfig:
    """Sliding-window low-rank refinement parameters."""

    window: tuple = (4, 4)
    rank: int = 1

    def __post_init__(self):
        wh, ww = self.window
        if wh < 1 or ww < 1:
            raise ValueError(f"window sides must be >= 1, got {self.window}")
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")


@dataclass
class SamplerConfig:
    sched: NoiseSchedule
    corrector_steps: int = 1
    corrector_snr: float = 0.16
    dc_lambda: float = 0.0
    dc_every: int = 1
    subspace_mode: str = "four_band"
    lowrank: HankelConfig | None = None
    warm_start: bool = False

    def __post_init__(self):
        if self.subspace_mode not in MODES:
            raise ValueError(f"unknown subspace mode {self.subspace_mode!r}")
        if self.corrector_steps < 0:
            raise ValueError("corrector_steps must be >= 0")
        if self.corrector_snr <= 0:
            raise ValueError("corrector_snr must be positive")
        if self.dc_lambda < 0:
            raise ValueError("dc_lambda must be >= 0")
        if self.dc_every < 1:
            raise ValueError("dc_every must be >= 1")


@dataclass
class ReconStep:
    """Per-rung record: resulting rung, its sigma, optional quality metrics,
    cumulative score cost, and wall-clock time for the rung."""

    step: int
    sigma: float
    psnr: float | None
    ssim: float | None
    ops: int
    elapsed_ms: float


@dataclass
class ReconRecord:
    steps: list = field(default_factory=list)
    final_image: np.ndarray | None = None


# ---------------------------------------------------------------------------
# predictor / corrector on raw arrays (any complex state shape)


def _predictor_step(arr, score, sched, i, rng):
    ladder = sigma_ladder(sched)
    gap = ladder[i] ** 2 - ladder[i - 1] ** 2
    drift = score.evaluate(arr, ladder[i])
    noise = gaussian_noise(rng, arr.shape, np.sqrt(gap))
    return arr + gap * np.asarray(drift) + noise


def _corrector_step(arr, score, sched, i, snr, reps, rng):
    sigma = sigma_ladder(sched)[i]
    for _ in range(reps):
        grad = np.asarray(score.evaluate(arr, sigma))
        grad_norm = np.linalg.norm(grad)
        if grad_norm == 0.0:
            log.debug("corrector skipped at rung %d: zero score", i)
            continue
        z = gaussian_noise(rng, arr.shape, 1.0)
        eps = 2.0 * (snr * np.linalg.norm(z) / grad_norm) ** 2
        arr = arr + eps * grad + np.sqrt(2.0 * eps) * z
    return arr


def predictor_full(k, score, sched, i, rng):
    """One reverse rung i -> i-1 on the full grid."""
    if not (1 <= i < sched.n_steps):
        raise ValueError(f"predictor rung {i} outside [1, {sched.n_steps})")
    return _predictor_step(np.asarray(k, dtype=np.complex128), score, sched, i, rng)


def corrector_full(k, score, sched, i, cfg, rng):
    """cfg.corrector_steps Langevin repetitions at rung i."""
    return _corrector_step(
        np.asarray(k, dtype=np.complex128), score, sched, i,
        cfg.corrector_snr, cfg.corrector_steps, rng,
    )


def predictor_sub(bands, score_sub, sched, i, rng):
    """Predictor applied band-wise to a four-band state."""
    if not (1 <= i < sched.n_steps):
        raise ValueError(f"predictor rung {i} outside [1, {sched.n_steps})")
    out = _predictor_step(bands.stack(), score_sub, sched, i, rng)
    return WaveletBands.from_stack(out)


def corrector_sub(bands, score_sub, sched, i, cfg, rng):
    """Corrector applied band-wise to a four-band state."""
    out = _corrector_step(
        bands.stack(), score_sub, sched, i,
        cfg.corrector_snr, cfg.corrector_steps, rng,
    )
    return WaveletBands.from_stack(out)


# ---------------------------------------------------------------------------
# data consistency


def data_consistency(k_star, meas, lam):
    """Exact minimizer of ||masked(k) - y||^2 + lam * ||k - k_star||^2.

    Sampled entries blend to (y + lam * k_star) / (1 + lam); lam == 0 replaces
    them with the measurement outright. Unsampled entries pass through
    bit-for-bit.
    """
    k_star = np.asarray(k_star, dtype=np.complex128)
    if k_star.shape != meas.mask.shape:
        raise ValueError(
            f"state shape {k_star.shape} != mask shape {meas.mask.shape}"
        )
    lam = float(lam)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    sampled = meas.mask.pattern.astype(bool)
    out = k_star.copy()
    out[sampled] = (meas.data[sampled] + lam * k_star[sampled]) / (1.0 + lam)
    return out


# ---------------------------------------------------------------------------
# structured low-rank refinement


def _hankel_windows(shape, window):
    h, w = shape
    wh, ww = window
    if wh > h or ww > w:
        raise ValueError(f"window {window} larger than array {shape}")
    return h - wh + 1, w - ww + 1


def hankel_matrix(k, window):
    """Rows are vectorized wh x ww sliding windows at unit stride."""
    k = np.asarray(k, dtype=np.complex128)
    ny, nx = _hankel_windows(k.shape, window)
    wh, ww = window
    strided = np.lib.stride_tricks.sliding_window_view(k, (wh, ww))
    return strided.reshape(ny * nx, wh * ww)


def hankel_lowrank(k, hcfg):
    """Project the Hankel matrix to its top-rank approximation and average
    overlapping windows back onto the grid."""
    k = np.asarray(k, dtype=np.complex128)
    ny, nx = _hankel_windows(k.shape, hcfg.window)
    wh, ww = hcfg.window
    mat = hankel_matrix(k, hcfg.window)
    if hcfg.rank > min(mat.shape):
        raise ValueError(
            f"rank {hcfg.rank} exceeds Hankel matrix rank bound {min(mat.shape)}"
        )
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    s[hcfg.rank:] = 0.0
    low = (u * s) @ vh
    acc = np.zeros(k.shape, dtype=np.complex128)
    cnt = np.zeros(k.shape, dtype=np.float64)
    patches = low.reshape(ny, nx, wh, ww)
    for dy in range(wh):
        for dx in range(ww):
            acc[dy:dy + ny, dx:dx + nx] += patches[:, :, dy, dx]
            cnt[dy:dy + ny, dx:dx + nx] += 1.0
    return acc / cnt


# ---------------------------------------------------------------------------
# full reconstruction sweep


def _lift(state, mode, sigma, rng):
    # Subspace state -> full k-space. The LL-only state re-fills the three
    # discarded bands with fresh noise at the current rung level.
    if mode == "four_band":
        return idwt(WaveletBands.from_stack(np.asarray(state)))
    zero_shape = state.shape
    return idwt(WaveletBands(
        ll=state,
        lh=gaussian_noise(rng, zero_shape, sigma),
        hl=gaussian_noise(rng, zero_shape, sigma),
        hh=gaussian_noise(rng, zero_shape, sigma),
    ))


def _metric_lift(state, mode):
    # Deterministic lift for reporting only: missing bands as zeros so that
    # recording metrics never touches the sampling stream.
    if mode == "full":
        return state
    if mode == "four_band":
        return idwt(WaveletBands.from_stack(state))
    zero = np.zeros_like(state)
    return idwt(WaveletBands(ll=state, lh=zero, hl=zero, hh=zero))


def _decompose(k, mode):
    if mode == "four_band":
        return dwt(k).stack()
    return dwt(k).ll


def reconstruct(meas, score_full, score_sub, cfg, rng, ground_truth=None):
    """Run the reverse sweep against a measurement.

    Args:
        meas: masked k-space Measurement.
        score_full: full-space ScoreFunction; always required.
        score_sub: subspace ScoreFunction matching cfg.subspace_mode, or None
            when cfg.subspace_mode == "full".
        cfg: SamplerConfig; cfg.sched.m_split is the handoff rung.
        rng: the only randomness source of the sweep.
        ground_truth: optional image-domain reference; when given, every rung
            records PSNR/SSIM of the current estimate.

    Returns (final k-space estimate, ReconRecord).
    """
    from .evalcli import psnr as _psnr, ssim as _ssim

    sched = cfg.sched
    mode = cfg.subspace_mode
    n = sched.n_steps
    split = sched.m_split
    use_sub = mode != "full"
    if use_sub and score_sub is None:
        raise ValueError(f"mode {mode} needs a subspace score function")
    if score_full.space != FULL:
        raise ValueError("score_full must act in the full space")
    if score_sub is not None and score_sub.space != SUBSPACE:
        raise ValueError("score_sub must act in the subspace")
    ladder = sigma_ladder(sched)
    shape = meas.data.shape
    record = ReconRecord()
    ops_base = score_full.ops + (score_sub.ops if score_sub else 0)

    def ops_now():
        return score_full.ops + (score_sub.ops if score_sub else 0) - ops_base

    gt_mag = None
    if ground_truth is not None:
        gt_mag = np.asarray(ground_truth, dtype=np.complex128)

    in_sub = use_sub and (n - 1) >= split
    if cfg.warm_start:
        base = _decompose(meas.data, mode) if in_sub else meas.data
        state = base + gaussian_noise(rng, np.shape(base), ladder[-1])
    else:
        if in_sub:
            probe = _decompose(np.zeros(shape, dtype=np.complex128), mode)
            state = gaussian_noise(rng, probe.shape, ladder[-1])
        else:
            state = gaussian_noise(rng, shape, ladder[-1])

    score_for = lambda sub: score_sub if sub else score_full
    done = 0
    for i in range(n - 1, 0, -1):
        t0 = time.perf_counter()
        step_sub = use_sub and i >= split
        if in_sub and not step_sub:
            # single handoff: lift at the current rung and continue full-space
            state = _lift(state, mode, ladder[i], rng)
            in_sub = False
        state = _predictor_step(state, score_for(step_sub), sched, i, rng)
        if cfg.corrector_steps > 0:
            state = _corrector_step(
                state, score_for(step_sub), sched, i - 1,
                cfg.corrector_snr, cfg.corrector_steps, rng,
            )
        done += 1
        if done % cfg.dc_every == 0:
            if step_sub:
                lifted = _lift(state, mode, ladder[i - 1], rng)
                lifted = data_consistency(lifted, meas, cfg.dc_lambda)
                state = _decompose(lifted, mode)
            else:
                state = data_consistency(state, meas, cfg.dc_lambda)
        step_psnr = step_ssim = None
        if gt_mag is not None:
            estimate = kspace_to_image(_metric_lift(state, mode if step_sub else "full"))
            step_psnr = _psnr(gt_mag, estimate)
            step_ssim = _ssim(gt_mag, estimate)
        record.steps.append(ReconStep(
            step=i - 1,
            sigma=float(ladder[i - 1]),
            psnr=step_psnr,
            ssim=step_ssim,
            ops=ops_now(),
            elapsed_ms=(time.perf_counter() - t0) * 1e3,
        ))
    if in_sub:
        state = _lift(state, mode, ladder[0], rng)
    if cfg.lowrank is not None:
        state = hankel_lowrank(state, cfg.lowrank)
        state = data_consistency(state, meas, cfg.dc_lambda)
    record.final_image = kspace_to_image(state)
    return state, record
