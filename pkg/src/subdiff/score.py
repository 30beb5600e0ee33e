"""Score functions: analytic Gaussian oracles and a small trainable denoiser.

Score convention, consistent with the noise bookkeeping in numerics: for a
Gaussian prior with per-entry mean mu and total complex variance v, the score
of the sigma-smoothed prior is -(k - mu) / (v + sigma^2), packed as a complex
array whose real/imaginary parts are the partial derivatives of the log
density with respect to the matching components.

Two trainable model families share the training loop and checkpoint format:
a small conv stack (local structure, translation-equivariant over the
wrap-around frequency grid) and a low-rank linear head (global
position-specific structure, initialized at the eigendecomposition of the
training data and exact for Gaussian data models). Both regress
unit-variance noise at every rung: raw outputs are divided by
sqrt(sigma_i^2 - sigma_0^2) under the weighted denoising objective, which
keeps training conditioned across four decades of sigma.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch

from .numerics import gaussian_noise
from .sde import kernel_variance, sigma_ladder
from .wavelet import WaveletBands, dwt

FULL = "full"
SUBSPACE = "subspace"
CHECKPOINT_MAGIC = "SUBM1"


class TrainingDiverged(RuntimeError):
    """Loss left the reals; the run is aborted rather than continued."""


class UnsupportedPriorError(ValueError):
    """Prior covariance shape the subspace adapter cannot push forward."""


# ---------------------------------------------------------------------------
# analytic Gaussian oracle


@dataclass
class GaussianPrior:
    """Independent complex Gaussian per entry: mean array + variance array.

    variance holds total per-entry complex variances (real >= 0).
    """

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.complex128)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.variance.shape != self.mean.shape:
            raise ValueError("mean and variance shapes differ")
        if np.any(self.variance < 0):
            raise ValueError("variances must be non-negative")

    @classmethod
    def isotropic(cls, mean, variance):
        mean = np.asarray(mean, dtype=np.complex128)
        return cls(mean=mean, variance=np.full(mean.shape, float(variance)))

    def is_isotropic(self):
        v = self.variance.flat[0]
        return bool(np.all(self.variance == v))


def gaussian_score(prior, k, sigma):
    """Exact score of the sigma-smoothed Gaussian prior at k."""
    k = np.asarray(k, dtype=np.complex128)
    if k.shape != prior.mean.shape:
        raise ValueError(f"k shape {k.shape} != prior shape {prior.mean.shape}")
    total = prior.variance + float(sigma) ** 2
    if np.any(total <= 0):
        raise ValueError("variance + sigma^2 must be positive everywhere")
    return -(k - prior.mean) / total


@dataclass
class ScoreFunction:
    """Callable score with bookkeeping: which space it acts in, and a
    cumulative count of scalar entries evaluated (the cost instrument used
    by the convergence comparisons)."""

    evaluate_fn: object
    space: str
    metadata: str = ""
    ops: int = 0

    def evaluate(self, state, sigma):
        arr = state.stack() if isinstance(state, WaveletBands) else np.asarray(state)
        out = self.evaluate_fn(arr, float(sigma))
        self.ops += arr.size
        if isinstance(state, WaveletBands):
            return WaveletBands.from_stack(out)
        return out


def gaussian_score_fn(prior):
    """Full-space ScoreFunction wrapping the analytic oracle."""

    def evaluate(arr, sigma):
        return gaussian_score(prior, arr, sigma)

    return ScoreFunction(evaluate_fn=evaluate, space=FULL, metadata="gaussian oracle")


def subspace_score_adapter(prior):
    """Push an isotropic Gaussian prior through the Haar transform.

    The transform is orthonormal, so an entry-wise-constant variance is
    preserved band-wise and the subspace score is again diagonal with the
    transformed mean. Anything richer (non-constant diagonal included) has a
    non-diagonal pushforward and is rejected.
    """
    if not prior.is_isotropic():
        raise UnsupportedPriorError(
            "subspace adapter supports only entry-wise-constant variance; "
            "a non-isotropic covariance does not stay diagonal under the "
            "band transform"
        )
    band_mean = dwt(prior.mean).stack()
    v = float(prior.variance.flat[0])

    def evaluate(arr, sigma):
        if arr.shape != band_mean.shape:
            raise ValueError(
                f"band stack shape {arr.shape} != prior {band_mean.shape}"
            )
        total = v + sigma ** 2
        if total <= 0:
            raise ValueError("variance + sigma^2 must be positive")
        return -(arr - band_mean) / total

    return ScoreFunction(
        evaluate_fn=evaluate, space=SUBSPACE, metadata="gaussian oracle (bands)"
    )


def ll_projection_score(prior):
    """Analytic score for the LL-band state of an isotropic prior."""
    if not prior.is_isotropic():
        raise UnsupportedPriorError(
            "ll-projection oracle needs an entry-wise-constant variance"
        )
    ll_prior = GaussianPrior.isotropic(
        dwt(prior.mean).ll, float(prior.variance.flat[0])
    )

    def evaluate(arr, sigma):
        return gaussian_score(ll_prior, arr, sigma)

    return ScoreFunction(
        evaluate_fn=evaluate, space=SUBSPACE, metadata="gaussian oracle (ll)"
    )


# ---------------------------------------------------------------------------
# trainable denoiser


@dataclass(frozen=True)
class ArchSpec:
    """Layer plan for the denoiser: conv stack sizes and the input space."""

    in_channels: int = 2
    hidden: int = 32
    depth: int = 4
    kernel: int = 3

    def __post_init__(self):
        if self.in_channels not in (2, 8):
            raise ValueError("in_channels must be 2 (full) or 8 (four-band)")
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if self.kernel % 2 != 1:
            raise ValueError("kernel must be odd")

    @property
    def space(self):
        return FULL if self.in_channels == 2 else SUBSPACE


class Denoiser(torch.nn.Module):
    """Conv stack scoring a complex state, sigma-conditioned by a constant
    log(sigma) channel. Operates on channel pairs (real, imag) per band.

    DFT frequency indices are modular, so spectral neighborhoods wrap
    around the array edges; convolutions pad circularly to respect that
    (the zero-frequency corner sits next to the highest-index rows and
    columns)."""

    def __init__(self, arch):
        super().__init__()
        self.arch = arch
        chans = [arch.in_channels + 1] + [arch.hidden] * (arch.depth - 1)
        layers = []
        for i in range(arch.depth - 1):
            layers.append(
                torch.nn.Conv2d(chans[i], chans[i + 1], arch.kernel,
                                padding=arch.kernel // 2,
                                padding_mode="circular")
            )
            layers.append(torch.nn.ReLU())
        layers.append(
            torch.nn.Conv2d(chans[-1], arch.in_channels, arch.kernel,
                            padding=arch.kernel // 2,
                            padding_mode="circular")
        )
        self.stack = torch.nn.Sequential(*layers)

    def forward(self, x, sigmas):
        # x: (B, C, H, W); sigmas: (B,) tensor of current noise levels.
        b, _, h, w = x.shape
        scale = torch.rsqrt(1.0 + sigmas ** 2).view(-1, 1, 1, 1)
        cond = torch.log(sigmas).view(-1, 1, 1, 1).expand(-1, 1, h, w)
        return self.stack(torch.cat([x * scale, cond], dim=1))


def init_denoiser(arch, seed=0):
    """Deterministically initialized denoiser."""
    gen = torch.Generator().manual_seed(int(seed))
    model = Denoiser(arch)
    with torch.no_grad():
        for p in model.parameters():
            if p.dim() > 1:
                fan_in = p[0].numel()
                p.copy_(torch.randn(p.shape, generator=gen) / math.sqrt(fan_in))
            else:
                p.zero_()
    return model


class LinearDenoiser(torch.nn.Module):
    """Low-rank linear score head with sigma-dependent gates.

    score(x) = -[U diag(c1/(sp(l)+v) + c2/(sp(t)+v)) U^T
                 + diag(1/(sp(d)+v))] (x - b),     v = sigma^2 - sigma_min^2

    in flattened channel coordinates (sp = softplus). With U the top
    eigenvectors of the training covariance, l its eigenvalues, c1 = 1,
    c2 = -1, and t = d = the tail eigenvalue average, this is exactly the
    score of the smoothed Gaussian fit to the training set (Woodbury form
    of (C + vI)^{-1}); the gates stay trainable so the denoising objective
    can reshape it. Complements the conv stack: a convolution cannot
    express this kind of global position-specific regression.

    The basis is a frozen parameter (no gradient) so checkpoints carry it.
    """

    def __init__(self, arch, basis, eigenvalues, tail, mean, sigma_min):
        super().__init__()
        basis = torch.as_tensor(basis, dtype=torch.float32)
        eigenvalues = torch.as_tensor(eigenvalues, dtype=torch.float32)
        mean = torch.as_tensor(mean, dtype=torch.float32)
        if basis.ndim != 2 or basis.shape[1] != arch.hidden:
            raise ValueError(
                f"basis must be (state_dim, {arch.hidden}), got {tuple(basis.shape)}"
            )
        if eigenvalues.shape != (arch.hidden,) or mean.shape != (basis.shape[0],):
            raise ValueError("eigenvalue/mean shapes do not match the basis")
        self.arch = arch
        self.sigma_min = float(sigma_min)
        self.basis = torch.nn.Parameter(basis, requires_grad=False)
        self.mean = torch.nn.Parameter(mean)
        self.ell = torch.nn.Parameter(
            _softplus_inv(eigenvalues.clamp_min(1e-6)))
        self.c1 = torch.nn.Parameter(torch.ones(arch.hidden))
        self.c2 = torch.nn.Parameter(-torch.ones(arch.hidden))
        self.tail = torch.nn.Parameter(
            _softplus_inv(torch.tensor([float(tail)]).clamp_min(1e-6)))
        self.diag = torch.nn.Parameter(
            _softplus_inv(torch.full((basis.shape[0],), float(tail))
                          .clamp_min(1e-6)))

    def forward(self, x, sigmas):
        # x: (B, C, H, W); sigmas: scalar or (B,) noise levels.
        shape = x.shape
        bsz = shape[0]
        sig = torch.as_tensor(sigmas, dtype=x.dtype).reshape(-1)
        if sig.numel() == 1 and bsz > 1:
            sig = sig.expand(bsz)
        v = (sig ** 2 - self.sigma_min ** 2).clamp_min(1e-6).view(bsz, 1)
        z = x.reshape(bsz, -1) - self.mean
        gate = (self.c1 / (torch.nn.functional.softplus(self.ell) + v)
                + self.c2 / (torch.nn.functional.softplus(self.tail) + v))
        low = ((z @ self.basis) * gate) @ self.basis.T
        pointwise = z / (torch.nn.functional.softplus(self.diag) + v)
        return (torch.sqrt(v) * -(low + pointwise)).reshape(shape)


def _softplus_inv(y):
    return y + torch.log(-torch.expm1(-y))


def fit_linear_denoiser(dataset, rank, sched):
    """Fit a LinearDenoiser to a dataset of complex states.

    Estimates mean and covariance in flattened channel coordinates, keeps
    the top-`rank` eigenpairs (signs canonicalized so the largest-magnitude
    component of each eigenvector is positive), and initializes the head at
    the exact Gaussian score of that fit. Deterministic for a fixed dataset.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    first = np.asarray(dataset[0], dtype=np.complex128)
    in_channels = 2 if first.ndim == 2 else 8
    rows = np.stack([_complex_to_channels(item).ravel() for item in dataset])
    dim = rows.shape[1]
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must be in [1, {dim}], got {rank}")
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / len(rows)
    w, v = np.linalg.eigh(cov)
    basis = v[:, ::-1][:, :rank].copy()
    flip = np.sign(basis[np.abs(basis).argmax(axis=0), np.arange(rank)])
    flip[flip == 0] = 1.0
    basis *= flip
    # Gates mix with total complex kernel variance sigma^2 - sigma_0^2, while
    # the channel-coordinate eigenvalues carry half the total complex variance
    # per entry; doubling puts both on the total-variance scale, which makes
    # the initialization the exact optimum of the denoising objective for
    # Gaussian data.
    eigenvalues = 2.0 * w[::-1][:rank].copy()
    tail = 2.0 * float(w[::-1][rank:].mean()) if rank < dim else 1e-6
    arch = ArchSpec(in_channels=in_channels, hidden=rank, depth=2, kernel=1)
    return LinearDenoiser(arch, basis, eigenvalues, max(tail, 1e-6), mean,
                          sched.sigma_min)


def _complex_to_channels(arr):
    # (H, W) -> (2, H, W); (4, h, w) band stack -> (8, h, w), band-major.
    arr = np.asarray(arr, dtype=np.complex128)
    if arr.ndim == 2:
        return np.stack([arr.real, arr.imag])
    parts = []
    for b in range(arr.shape[0]):
        parts.extend([arr[b].real, arr[b].imag])
    return np.stack(parts)


def _channels_to_complex(ch):
    if ch.shape[0] == 2:
        return ch[0] + 1j * ch[1]
    bands = [ch[2 * b] + 1j * ch[2 * b + 1] for b in range(ch.shape[0] // 2)]
    return np.stack(bands)


def _model_variance(sched, sigma):
    # Kernel variance at this sigma, floored at the bottom trained rung so
    # evaluation at sigma_0 (where the kernel is singular) stays defined.
    floor = kernel_variance(sched, 1)
    return max(float(sigma) ** 2 - sched.sigma_min ** 2, floor)


def _denoiser_apply(model, arr, sigma, sched):
    x = torch.from_numpy(_complex_to_channels(arr)[None]).to(torch.float32)
    sig = torch.tensor([float(sigma)], dtype=torch.float32)
    with torch.no_grad():
        out = model(x, sig)[0].numpy().astype(np.float64)
    return _channels_to_complex(out) / math.sqrt(_model_variance(sched, sigma))


def denoiser_score_fn(model, sched):
    """Wrap a trained denoiser as a ScoreFunction for the sampler."""

    def evaluate(arr, sigma):
        return _denoiser_apply(model, arr, sigma, sched)

    return ScoreFunction(
        evaluate_fn=evaluate,
        space=model.arch.space,
        metadata=f"denoiser depth={model.arch.depth} hidden={model.arch.hidden}",
    )


# ---------------------------------------------------------------------------
# denoising score matching


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 16
    iterations: int = 500


def _draw_levels_noise(x0, sched, rng):
    # Per example: one rung (0 excluded, its kernel is noise-free) and one
    # matching noise draw.
    levels = rng.integers(1, sched.n_steps, size=x0.shape[0])
    ladder = sigma_ladder(sched)
    variances = ladder[levels] ** 2 - sched.sigma_min ** 2
    z = np.empty_like(x0)
    for b in range(x0.shape[0]):
        z[b] = gaussian_noise(rng, x0.shape[1:], math.sqrt(variances[b]))
    return levels, z


def _draw_batch(dataset, batch_size, sched, rng):
    idx = rng.integers(0, len(dataset), size=batch_size)
    x0 = np.stack([np.asarray(dataset[j], dtype=np.complex128) for j in idx])
    levels, z = _draw_levels_noise(x0, sched, rng)
    return x0, levels, z


def _weighted_objective_torch(model, x0, levels, z, sched):
    # v * |model(x0+z, sigma) - (-z/v)|^2 averaged per complex entry. With
    # the 1/sqrt(v) output scaling this is |net_out + z/sqrt(v)|^2: a
    # unit-variance noise regression at every rung.
    ladder = sigma_ladder(sched)
    sigmas = torch.tensor(ladder[levels], dtype=torch.float32)
    v = torch.tensor(
        ladder[levels] ** 2 - sched.sigma_min ** 2, dtype=torch.float32
    ).view(-1, 1, 1, 1)
    x_t = np.stack([_complex_to_channels(x0[b] + z[b]) for b in range(len(levels))])
    z_ch = np.stack([_complex_to_channels(z[b]) for b in range(len(levels))])
    x_t = torch.from_numpy(x_t).to(torch.float32)
    z_ch = torch.from_numpy(z_ch).to(torch.float32)
    resid = model(x_t, sigmas) + z_ch / torch.sqrt(v)
    # squared complex magnitude pairs two real channels per entry
    return resid.pow(2).mean() * 2.0


def dsm_loss(model, batch, sched, rng):
    """Weighted denoising objective on one sampled batch, as a float.

    model is either a trainable module (conv stack or linear head) or any
    callable (state, sigma) -> score array
    (oracles and test doubles). The rung weighting is v = sigma_i^2 -
    sigma_0^2, which normalizes a zero model to expected loss 1 per entry.
    """
    x0 = np.stack([np.asarray(item, dtype=np.complex128) for item in batch])
    levels, z = _draw_levels_noise(x0, sched, rng)
    ladder = sigma_ladder(sched)
    total = 0.0
    entries = 0
    for b in range(len(levels)):
        v = ladder[levels[b]] ** 2 - sched.sigma_min ** 2
        x_t = x0[b] + z[b]
        if isinstance(model, torch.nn.Module):
            pred = _denoiser_apply(model, x_t, ladder[levels[b]], sched)
        else:
            pred = model(x_t, float(ladder[levels[b]]))
        resid = np.asarray(pred) - (-z[b] / v)
        total += v * float(np.sum(np.abs(resid) ** 2))
        entries += x_t.size
    return total / entries


def train(model, dataset, cfg, sched, rng):
    """Optimize the denoiser with Adam on the weighted denoising objective.

    Deterministic given (model init, dataset order, cfg, rng). Aborts with
    TrainingDiverged on a non-finite loss. Returns the model with a
    loss_history attribute attached.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    torch.set_num_threads(1)
    opt = torch.optim.Adam(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
    )
    history = []
    for _ in range(cfg.iterations):
        x0, levels, z = _draw_batch(dataset, cfg.batch_size, sched, rng)
        loss = _weighted_objective_torch(model, x0, levels, z, sched)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDiverged(
                f"loss became non-finite at iteration {len(history)}"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(value)
    model.loss_history = history
    return model


# ---------------------------------------------------------------------------
# checkpoints

_ARCH_KEYS = ("in_channels", "hidden", "depth", "kernel")
_SCHED_KEYS = ("sigma_min", "sigma_max", "n_steps", "m_split")


def flatten_parameters(model):
    """Parameters as one float32 vector, in named-parameter order."""
    parts = [p.detach().numpy().ravel() for _, p in model.named_parameters()]
    return np.concatenate(parts).astype("<f4")


def save_checkpoint(path, model, sched):
    """SUBM1 checkpoint: header, float32 parameters, then a text block
    describing the architecture and the schedule it was trained against."""
    params = flatten_parameters(model)
    header = f"{CHECKPOINT_MAGIC} {params.size}\n".encode("ascii")
    kind = "linear" if isinstance(model, LinearDenoiser) else "conv"
    lines = [f"space={model.arch.space}", f"kind={kind}"]
    for key in _ARCH_KEYS:
        lines.append(f"{key}={getattr(model.arch, key)}")
    if kind == "linear":
        lines.append(f"state_dim={model.basis.shape[0]}")
    lines.append(f"sigma_min={sched.sigma_min!r}")
    lines.append(f"sigma_max={sched.sigma_max!r}")
    lines.append(f"n_steps={sched.n_steps}")
    lines.append(f"m_split={sched.m_split}")
    text = ("\n".join(lines) + "\n").encode("ascii")
    from .numerics import _atomic_write

    _atomic_write(path, header + params.tobytes() + text)


def load_checkpoint(path):
    """Rebuild (model, NoiseSchedule) from a SUBM1 file.

    The descriptor's kind line selects the model family (conv stack by
    default, for files written before the linear head existed)."""
    from .numerics import HeaderParseError, TruncatedPayloadError
    from .sde import NoiseSchedule

    with open(path, "rb") as fh:
        blob = fh.read()
    newline = blob.find(b"\n", 0, 64)
    if newline < 0:
        raise HeaderParseError(f"{path}: no checkpoint header line")
    fields = blob[:newline].decode("ascii", errors="replace").split(" ")
    if len(fields) != 2 or fields[0] != CHECKPOINT_MAGIC:
        raise HeaderParseError(f"{path}: malformed checkpoint header")
    try:
        count = int(fields[1])
    except ValueError as exc:
        raise HeaderParseError(f"{path}: bad parameter count") from exc
    start = newline + 1
    end = start + 4 * count
    if len(blob) < end:
        raise TruncatedPayloadError(f"{path}: parameter block truncated")
    params = np.frombuffer(blob[start:end], dtype="<f4")
    meta = {}
    for line in blob[end:].decode("ascii").splitlines():
        line = line.strip()
        if line:
            key, _, value = line.partition("=")
            meta[key] = value
    arch = ArchSpec(
        in_channels=int(meta["in_channels"]),
        hidden=int(meta["hidden"]),
        depth=int(meta["depth"]),
        kernel=int(meta["kernel"]),
    )
    sched = NoiseSchedule(
        sigma_min=float(meta["sigma_min"]),
        sigma_max=float(meta["sigma_max"]),
        n_steps=int(meta["n_steps"]),
        m_split=int(meta["m_split"]),
    )
    if meta.get("kind", "conv") == "linear":
        state_dim = int(meta["state_dim"])
        model = LinearDenoiser(
            arch,
            torch.zeros(state_dim, arch.hidden),
            torch.ones(arch.hidden),
            1.0,
            torch.zeros(state_dim),
            sched.sigma_min,
        )
    else:
        model = Denoiser(arch)
    vec = torch.from_numpy(params.astype(np.float32))
    offset = 0
    with torch.no_grad():
        for _, p in model.named_parameters():
            n = p.numel()
            if offset + n > vec.numel():
                raise TruncatedPayloadError(
                    f"{path}: parameter count does not match the architecture"
                )
            p.copy_(vec[offset:offset + n].view_as(p))
            offset += n
    if offset != vec.numel():
        raise TruncatedPayloadError(
            f"{path}: parameter count does not match the architecture"
        )
    return model, sched
