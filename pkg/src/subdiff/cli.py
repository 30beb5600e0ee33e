"""Command-line driver: mask, train, reconstruct, convergence, metrics.

Usage: subdiff <command> [--config FILE] [--key value ...]

Flags after the subcommand override config keys by the same name. Every run
writes a manifest.txt into the output directory that echoes the fully
resolved config; re-running any command from its manifest reproduces the
outputs byte for byte (timing columns stay zeroed unless record_timing is
turned on). All file writes are whole-file atomic.
"""

import os
import sys

import numpy as np

from . import evalcli, kspace, sampler, score, sde
from .evalcli import ConfigError, ExperimentConfig, load_config, manifest_text
from .numerics import _atomic_write, make_rng, read_array, spawn_rngs, write_array
from .wavelet import dwt

COMMANDS = ("mask", "train", "reconstruct", "convergence", "metrics")


class CliError(ValueError):
    """Bad invocation or unusable inputs, reported without a traceback."""


def _parse_overrides(tokens):
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise CliError(f"expected --key value pairs, got {tok!r}")
        if i + 1 >= len(tokens):
            raise CliError(f"flag {tok} is missing a value")
        out[tok[2:]] = tokens[i + 1]
        i += 2
    return out


def _resolve(command, tokens):
    config_path = None
    rest = []
    i = 0
    while i < len(tokens):
        if tokens[i] == "--config":
            if i + 1 >= len(tokens):
                raise CliError("--config is missing a value")
            config_path = tokens[i + 1]
            i += 2
        else:
            rest.append(tokens[i])
            i += 1
    cfg = load_config(config_path, _parse_overrides(rest))
    cfg.command = command
    return cfg


def _require_files(cfg, keys):
    # Resolve every input path before any heavy work starts.
    for key in keys:
        path = getattr(cfg, key)
        if not path:
            raise CliError(f"config key {key!r} is required for {cfg.command}")
        if not path.startswith("synthetic:") and not os.path.exists(path):
            raise CliError(f"{key} path not found: {path}")


def _write_manifest(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    _atomic_write(
        os.path.join(cfg.output_dir, "manifest.txt"),
        manifest_text(cfg).encode("utf-8"),
    )


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


def _fmt(value):
    if value is None:
        return ""
    return format(float(value), ".10g")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def _write_magnitude_dump(path, arr):
    mag = np.abs(arr)
    peak = mag.max()
    scaled = np.zeros(mag.shape, dtype=np.uint8) if peak == 0 else \
        np.clip(np.rint(mag / peak * 255.0), 0, 255).astype(np.uint8)
    _atomic_write(path, scaled.tobytes())
    h, w = arr.shape
    _atomic_write(path + ".dims", f"{h} {w}\n".encode("ascii"))


def _build_mask(cfg, shape, rng):
    if cfg.mask_path:
        pattern = read_array(cfg.mask_path)
        if np.any(pattern.imag != 0):
            raise CliError(f"mask file {cfg.mask_path} has imaginary entries")
        return kspace.SamplingMask(
            pattern=pattern.real,
            family=cfg.mask_family,
            acceleration=pattern.size / max(pattern.real.sum(), 1.0),
            acs_lines=cfg.mask_acs,
        )
    return kspace.make_mask(
        cfg.mask_family, shape, cfg.mask_r, cfg.mask_acs, rng
    )


def _schedule(cfg, n_steps=None, m_split=None, reference=None):
    n = cfg.n_steps if n_steps is None else n_steps
    split = cfg.m_split if m_split is None else m_split
    sched = sde.NoiseSchedule(
        sigma_min=cfg.sigma_min, sigma_max=cfg.sigma_max,
        n_steps=n, m_split=max(split, 0),
    )
    if split < 0:
        if reference is None:
            raise CliError("m_split = -1 (auto) needs reference k-space data")
        sched = sde.NoiseSchedule(
            sigma_min=cfg.sigma_min, sigma_max=cfg.sigma_max, n_steps=n,
            m_split=sde.auto_split_index(sched, reference),
        )
    return sched


def _oracle_scores(cfg, shape, sched, mode):
    if cfg.prior_mean:
        mean = read_array(cfg.prior_mean)
        if mean.shape != shape:
            raise CliError(
                f"prior mean shape {mean.shape} does not match data {shape}"
            )
    else:
        mean = np.zeros(shape, dtype=np.complex128)
    prior = score.GaussianPrior.isotropic(mean, cfg.prior_variance)
    full = score.gaussian_score_fn(prior)
    if mode == "full":
        return full, None
    if mode == "ll_projection":
        return full, score.ll_projection_score(prior)
    return full, score.subspace_score_adapter(prior)


def _checkpoint_scores(cfg, sched, mode):
    model_full, sched_full = score.load_checkpoint(cfg.checkpoint)
    if model_full.arch.space != "full":
        raise CliError(f"{cfg.checkpoint} holds a subspace model, need full-space")
    _check_sched(sched_full, sched, cfg.checkpoint)
    full = score.denoiser_score_fn(model_full, sched)
    if mode == "full":
        return full, None
    if mode == "ll_projection":
        raise CliError(
            "ll_projection has no learned-checkpoint form; use oracle scores"
        )
    if not cfg.checkpoint_sub:
        raise CliError("four_band reconstruction needs checkpoint_sub")
    model_sub, sched_sub = score.load_checkpoint(cfg.checkpoint_sub)
    if model_sub.arch.space != "subspace":
        raise CliError(f"{cfg.checkpoint_sub} holds a full-space model")
    _check_sched(sched_sub, sched, cfg.checkpoint_sub)
    return full, score.denoiser_score_fn(model_sub, sched)


def _check_sched(stored, wanted, path):
    same = (
        stored.sigma_min == wanted.sigma_min
        and stored.sigma_max == wanted.sigma_max
        and stored.n_steps == wanted.n_steps
    )
    if not same:
        raise CliError(
            f"checkpoint {path} was trained for schedule "
            f"[{stored.sigma_min}, {stored.sigma_max}] x {stored.n_steps}, "
            f"which does not match the configured schedule"
        )


def _scores(cfg, shape, sched, mode):
    if cfg.score_source == "oracle":
        return _oracle_scores(cfg, shape, sched, mode)
    if cfg.score_source == "checkpoint":
        _require_files(cfg, ["checkpoint"])
        return _checkpoint_scores(cfg, sched, mode)
    raise CliError(f"score_source must be oracle or checkpoint, got {cfg.score_source!r}")


def _record_rows(record, with_timing):
    rows = []
    for s in record.steps:
        rows.append([
            str(s.step), _fmt(s.sigma), _fmt(s.psnr), _fmt(s.ssim),
            _fmt(s.elapsed_ms) if with_timing else "0",
        ])
    return rows


# ---------------------------------------------------------------------------
# subcommands


def cmd_mask(cfg):
    h = w = cfg.phantom_size
    rng = make_rng(cfg.seed)
    mask = kspace.make_mask(cfg.mask_family, (h, w), cfg.mask_r, cfg.mask_acs, rng)
    _write_manifest(cfg)
    write_array(_out(cfg, "mask.subk"), mask.pattern.astype(np.complex128))
    print(
        f"mask {cfg.mask_family} {h}x{w} requested R={cfg.mask_r} "
        f"realized R={mask.realized_acceleration:.3f} -> {_out(cfg, 'mask.subk')}"
    )
    return 0


def _load_dataset(cfg, rng):
    spec_value = cfg.dataset
    if spec_value.startswith("synthetic:"):
        try:
            count = int(spec_value.split(":", 1)[1])
        except ValueError as exc:
            raise CliError(f"bad synthetic dataset spec {spec_value!r}") from exc
        images = evalcli.synth_phantoms(count, (cfg.phantom_size,) * 2, rng)
    else:
        names = sorted(
            n for n in os.listdir(spec_value) if n.endswith(".subk")
        )
        if not names:
            raise CliError(f"no .subk files under {spec_value}")
        images = [read_array(os.path.join(spec_value, n)) for n in names]
    if cfg.augment:
        images = evalcli.augment_dataset(images)
    return [kspace.image_to_kspace(img) for img in images]


def cmd_train(cfg):
    _require_files(cfg, ["dataset"])
    if cfg.train_space not in ("full", "subspace"):
        raise CliError(f"train_space must be full or subspace, got {cfg.train_space!r}")
    rng_data, rng_train = spawn_rngs(cfg.seed, 2)
    data = _load_dataset(cfg, rng_data)
    sched = _schedule(cfg, reference=data[0])
    if cfg.train_space == "subspace":
        data = [dwt(k).stack() for k in data]
        arch = score.ArchSpec(in_channels=8, hidden=cfg.hidden_channels, depth=cfg.depth)
    else:
        arch = score.ArchSpec(in_channels=2, hidden=cfg.hidden_channels, depth=cfg.depth)
    model = score.init_denoiser(arch, seed=cfg.seed)
    tcfg = score.TrainConfig(
        learning_rate=cfg.learning_rate,
        adam_beta1=cfg.adam_beta1,
        adam_beta2=cfg.adam_beta2,
        batch_size=cfg.batch_size,
        iterations=cfg.iterations,
    )
    _write_manifest(cfg)
    score.train(model, data, tcfg, sched, rng_train)
    ckpt = _out(cfg, "checkpoint.subm")
    score.save_checkpoint(ckpt, model, sched)
    _write_csv(
        _out(cfg, "loss.csv"), ["iteration", "loss"],
        [[str(i), _fmt(v)] for i, v in enumerate(model.loss_history)],
    )
    print(
        f"trained {cfg.train_space} denoiser for {cfg.iterations} iterations, "
        f"final loss {model.loss_history[-1]:.4f} -> {ckpt}"
    )
    return 0


def cmd_reconstruct(cfg):
    _require_files(cfg, ["kspace"])
    truth_k = read_array(cfg.kspace)
    rng_mask, rng_noise, rng_sample = spawn_rngs(cfg.seed, 3)
    mask = _build_mask(cfg, truth_k.shape, rng_mask)
    meas = kspace.forward(truth_k, mask, cfg.noise_stddev, rng_noise)
    sched = _schedule(cfg, reference=meas.data)
    score_full, score_sub = _scores(cfg, truth_k.shape, sched, cfg.subspace_mode)
    lowrank = None
    if cfg.lowrank_rank > 0:
        lowrank = sampler.HankelConfig(
            window=(cfg.lowrank_wh, cfg.lowrank_ww), rank=cfg.lowrank_rank
        )
    scfg = sampler.SamplerConfig(
        sched=sched,
        corrector_steps=cfg.corrector_steps,
        corrector_snr=cfg.corrector_snr,
        dc_lambda=cfg.dc_lambda,
        dc_every=cfg.dc_every,
        subspace_mode=cfg.subspace_mode,
        lowrank=lowrank,
        warm_start=cfg.warm_start,
    )
    _write_manifest(cfg)
    truth_img = kspace.kspace_to_image(truth_k)
    final_k, record = sampler.reconstruct(
        meas, score_full, score_sub, scfg, rng_sample, ground_truth=truth_img
    )
    write_array(_out(cfg, "recon_kspace.subk"), final_k)
    write_array(_out(cfg, "recon_image.subk"), record.final_image)
    write_array(_out(cfg, "mask.subk"), mask.pattern.astype(np.complex128))
    _write_magnitude_dump(_out(cfg, "recon_magnitude.u8"), record.final_image)
    _write_csv(
        _out(cfg, "record.csv"),
        ["step", "sigma", "psnr", "ssim", "elapsed_ms"],
        _record_rows(record, cfg.record_timing),
    )
    last = record.steps[-1]
    print(
        f"reconstructed {cfg.kspace} at R={mask.realized_acceleration:.2f} "
        f"({cfg.subspace_mode}); final psnr="
        f"{'n/a' if last.psnr is None else f'{last.psnr:.2f}'} dB"
    )
    return 0


def cmd_convergence(cfg):
    _require_files(cfg, ["kspace"])
    truth_k = read_array(cfg.kspace)
    if cfg.subspace_mode == "full":
        raise CliError("convergence compares a subspace mode against full; "
                       "set subspace_mode to ll_projection or four_band")
    rng_mask, rng_noise, rng_full, rng_sub = spawn_rngs(cfg.seed, 4)
    mask = _build_mask(cfg, truth_k.shape, rng_mask)
    meas = kspace.forward(truth_k, mask, cfg.noise_stddev, rng_noise)
    truth_img = kspace.kspace_to_image(truth_k)
    runs = []
    # full-space reference run
    sched_full = _schedule(cfg, m_split=max(cfg.m_split, 0), reference=meas.data)
    sf, _ = _scores(cfg, truth_k.shape, sched_full, "full")
    cfg_full = sampler.SamplerConfig(
        sched=sched_full, corrector_steps=cfg.corrector_steps,
        corrector_snr=cfg.corrector_snr, dc_lambda=cfg.dc_lambda,
        dc_every=cfg.dc_every, subspace_mode="full",
    )
    _write_manifest(cfg)
    _, rec_full = sampler.reconstruct(
        meas, sf, None, cfg_full, rng_full, ground_truth=truth_img
    )
    runs.append(("full", rec_full))
    # subspace run on its own (usually shorter) ladder
    sched_sub = _schedule(
        cfg, n_steps=cfg.sub_n_steps, m_split=cfg.sub_m_split, reference=meas.data
    )
    sf2, ss2 = _scores(cfg, truth_k.shape, sched_sub, cfg.subspace_mode)
    cfg_sub = sampler.SamplerConfig(
        sched=sched_sub, corrector_steps=cfg.corrector_steps,
        corrector_snr=cfg.corrector_snr, dc_lambda=cfg.dc_lambda,
        dc_every=cfg.dc_every, subspace_mode=cfg.subspace_mode,
    )
    _, rec_sub = sampler.reconstruct(
        meas, sf2, ss2, cfg_sub, rng_sub, ground_truth=truth_img
    )
    runs.append((cfg.subspace_mode, rec_sub))
    rows = []
    for mode_name, rec in runs:
        for s in rec.steps:
            rows.append([mode_name, str(s.step), _fmt(s.sigma), _fmt(s.psnr), str(s.ops)])
    _write_csv(
        _out(cfg, "convergence.csv"),
        ["mode", "step", "sigma", "psnr", "ops"], rows,
    )
    full_final = rec_full.steps[-1]
    sub_final = rec_sub.steps[-1]
    print(
        f"full: psnr={_fmt(full_final.psnr)} dB ops={full_final.ops}; "
        f"{cfg.subspace_mode}: psnr={_fmt(sub_final.psnr)} dB ops={sub_final.ops} "
        f"({100.0 * sub_final.ops / full_final.ops:.1f}% of full)"
    )
    return 0


def cmd_metrics(cfg):
    _require_files(cfg, ["ref", "test"])
    ref = read_array(cfg.ref)
    test = read_array(cfg.test)
    result = evalcli.compare(ref, test)
    _write_manifest(cfg)
    _write_csv(
        _out(cfg, "metrics.csv"), ["psnr", "ssim", "mse"],
        [[_fmt(result.psnr), _fmt(result.ssim), _fmt(result.mse)]],
    )
    print(f"psnr={_fmt(result.psnr)} ssim={_fmt(result.ssim)} mse={_fmt(result.mse)}")
    return 0


_HANDLERS = {
    "mask": cmd_mask,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "convergence": cmd_convergence,
    "metrics": cmd_metrics,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(__doc__.strip())
        return 0
    command = argv[0]
    if command not in COMMANDS:
        print(f"error: unknown command {command!r}; choose from {', '.join(COMMANDS)}",
              file=sys.stderr)
        return 2
    try:
        cfg = _resolve(command, argv[1:])
        return _HANDLERS[command](cfg)
    except (CliError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
