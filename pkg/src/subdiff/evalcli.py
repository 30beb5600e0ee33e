"""Quality metrics, synthetic phantom data, and experiment configuration.

PSNR and SSIM operate on magnitudes. PSNR normalizes both magnitudes by the
reference peak, so it equals 10*log10(peak^2 / raw_mse); identical inputs hit
the 99.0 dB sentinel. SSIM uses a 7x7 uniform window with the standard
stabilizers C1 = (0.01 L)^2 and C2 = (0.03 L)^2, where L is the larger of
the two magnitude peaks (keeps ssim(a, b) == ssim(b, a)).

Configs are flat "key = value" text files; '#' starts a comment, unknown keys
are rejected, and the SUBDM_SEED environment variable overrides the seed.
The manifest a run writes is itself a loadable config.
"""

import math
import os
from dataclasses import dataclass, fields

import numpy as np
from scipy.ndimage import uniform_filter

PSNR_SENTINEL = 99.0
SSIM_WINDOW = 7
SEED_ENV = "SUBDM_SEED"


class ConfigError(ValueError):
    """Config file or override could not be interpreted."""


# ---------------------------------------------------------------------------
# metrics


def _magnitude_pair(ref, test):
    ref = np.asarray(ref)
    test = np.asarray(test)
    if ref.shape != test.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {test.shape}")
    ref_mag = np.abs(ref).astype(np.float64)
    test_mag = np.abs(test).astype(np.float64)
    if ref_mag.max() == 0:
        raise ValueError("reference magnitude is identically zero")
    return ref_mag, test_mag


def mse(ref, test):
    """Mean squared magnitude difference (symmetric, unnormalized)."""
    ref_mag, test_mag = _magnitude_pair(ref, test)
    return float(np.mean((ref_mag - test_mag) ** 2))


def psnr(ref, test):
    """Peak signal-to-noise ratio in dB against the reference peak."""
    ref_mag, test_mag = _magnitude_pair(ref, test)
    peak = ref_mag.max()
    err = float(np.mean((ref_mag / peak - test_mag / peak) ** 2))
    if err == 0.0:
        return PSNR_SENTINEL
    return float(10.0 * math.log10(1.0 / err))


def ssim(ref, test):
    """Mean structural similarity over valid 7x7 uniform windows."""
    ref_mag, test_mag = _magnitude_pair(ref, test)
    h, w = ref_mag.shape
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    peak = max(ref_mag.max(), test_mag.max())
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    pad = SSIM_WINDOW // 2
    crop = (slice(pad, h - pad), slice(pad, w - pad))

    def win_mean(a):
        return uniform_filter(a, size=SSIM_WINDOW, mode="constant")[crop]

    mu_x = win_mean(ref_mag)
    mu_y = win_mean(test_mag)
    xx = win_mean(ref_mag * ref_mag) - mu_x * mu_x
    yy = win_mean(test_mag * test_mag) - mu_y * mu_y
    xy = win_mean(ref_mag * test_mag) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


@dataclass
class Metrics:
    psnr: float
    ssim: float
    mse: float


def compare(ref, test):
    """All three metrics in one pass."""
    return Metrics(psnr=psnr(ref, test), ssim=ssim(ref, test), mse=mse(ref, test))


# ---------------------------------------------------------------------------
# synthetic phantoms


def _ellipse_mask(shape, cy, cx, ry, rx, angle):
    h, w = shape
    ys = np.arange(h)[:, None] - cy
    xs = np.arange(w)[None, :] - cx
    ca, sa = math.cos(angle), math.sin(angle)
    u = ys * ca + xs * sa
    v = -ys * sa + xs * ca
    return (u / ry) ** 2 + (v / rx) ** 2 <= 1.0


def synth_phantoms(count, shape, rng):
    """Random smooth complex phantoms with bounded magnitude and support.

    Each phantom is one main ellipse (support fraction held inside
    [0.2, 0.8]) carrying a base intensity, modulated multiplicatively by a
    few interior ellipses, clipped to [0, 1], and given a random linear
    phase ramp. Deterministic given the rng.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    h, w = shape
    if min(h, w) < 8:
        raise ValueError(f"phantom shape {shape} too small")
    out = []
    for _ in range(count):
        cy = h * rng.uniform(0.46, 0.54)
        cx = w * rng.uniform(0.46, 0.54)
        ry = h * rng.uniform(0.29, 0.435)
        rx = w * rng.uniform(0.29, 0.435)
        main = _ellipse_mask(shape, cy, cx, ry, rx, rng.uniform(0, math.pi))
        img = np.where(main, rng.uniform(0.45, 0.8), 0.0)
        for _ in range(rng.integers(2, 5)):
            sub = _ellipse_mask(
                shape,
                cy + h * rng.uniform(-0.08, 0.08),
                cx + w * rng.uniform(-0.08, 0.08),
                ry * rng.uniform(0.15, 0.55),
                rx * rng.uniform(0.15, 0.55),
                rng.uniform(0, math.pi),
            )
            img = np.where(sub & main, img * rng.uniform(0.55, 1.45), img)
        img = np.clip(img, 0.0, 1.0)
        fy = rng.uniform(-2.0, 2.0)
        fx = rng.uniform(-2.0, 2.0)
        phi0 = rng.uniform(0, 2 * math.pi)
        ys = np.arange(h)[:, None] / h
        xs = np.arange(w)[None, :] / w
        phase = np.exp(1j * (2 * math.pi * (fy * ys + fx * xs) + phi0))
        out.append(img * phase)
    return out


def augment_dataset(images, rotations=4, flips=2):
    """Quarter-turn and mirror variants; count * rotations * flips outputs."""
    if not (1 <= rotations <= 4) or flips not in (1, 2):
        raise ValueError("rotations must be 1..4 and flips 1 or 2")
    out = []
    for img in images:
        for k in range(rotations):
            rot = np.rot90(img, k)
            out.append(rot.copy())
            if flips == 2:
                out.append(np.fliplr(rot).copy())
    return out


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    # run identity
    command: str = ""
    seed: int = 0
    output_dir: str = "out"
    record_timing: bool = False
    # mask
    mask_family: str = "uniform1d"
    mask_r: float = 4.0
    mask_acs: int = 0
    mask_path: str = ""
    # data
    kspace: str = ""
    dataset: str = ""
    ref: str = ""
    test: str = ""
    noise_stddev: float = 0.0
    phantom_size: int = 32
    augment: bool = False
    # noise schedule
    sigma_min: float = 0.01
    sigma_max: float = 378.0
    n_steps: int = 1000
    m_split: int = -1
    # sampler
    corrector_steps: int = 1
    corrector_snr: float = 0.16
    dc_lambda: float = 0.0
    dc_every: int = 1
    subspace_mode: str = "four_band"
    warm_start: bool = False
    lowrank_rank: int = 0
    lowrank_wh: int = 4
    lowrank_ww: int = 4
    # score source
    score_source: str = "oracle"
    prior_mean: str = ""
    prior_variance: float = 1.0
    checkpoint: str = ""
    checkpoint_sub: str = ""
    # training
    train_space: str = "full"
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 16
    iterations: int = 500
    hidden_channels: int = 32
    depth: int = 4
    # convergence comparison
    sub_n_steps: int = 250
    sub_m_split: int = 50


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


_PARSERS = {bool: _parse_bool, int: lambda s: int(s, 0), float: float, str: lambda s: s.strip()}
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_TYPE_OBJS = {"str": str, "int": int, "float": float, "bool": bool}


def _set_key(cfg, key, raw):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    ftype = _TYPE_OBJS[_FIELD_TYPES[key]] if isinstance(_FIELD_TYPES[key], str) else _FIELD_TYPES[key]
    try:
        setattr(cfg, key, _PARSERS[ftype](raw))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config_text(text, cfg=None):
    """Apply flat "key = value" lines (with # comments) to a config."""
    cfg = cfg or ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        _set_key(cfg, key.strip(), value.strip())
    return cfg


def load_config(path=None, overrides=None, env=None):
    """Resolve a config: file, then flag overrides, then SUBDM_SEED.

    overrides maps key -> raw string (already stripped of the leading --).
    """
    cfg = ExperimentConfig()
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        parse_config_text(text, cfg)
    for key, raw in (overrides or {}).items():
        _set_key(cfg, key, raw)
    env = os.environ if env is None else env
    if SEED_ENV in env:
        try:
            cfg.seed = int(env[SEED_ENV], 0)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    return cfg


def manifest_text(cfg):
    """Full resolved config as loadable key = value lines."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
