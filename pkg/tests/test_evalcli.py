"""Metrics against loop-based oracles, phantom invariants, config parsing."""

import numpy as np
import pytest

from subdiff.evalcli import (
    PSNR_SENTINEL,
    SSIM_WINDOW,
    ConfigError,
    ExperimentConfig,
    augment_dataset,
    compare,
    load_config,
    manifest_text,
    mse,
    parse_config_text,
    psnr,
    ssim,
    synth_phantoms,
)
from subdiff.numerics import make_rng

from conftest import random_complex


def ssim_oracle(ref, test):
    """Window-by-window SSIM with explicit loops over valid positions."""
    x = np.abs(ref).astype(np.float64)
    y = np.abs(test).astype(np.float64)
    h, w = x.shape
    peak = max(x.max(), y.max())
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    pad = SSIM_WINDOW // 2
    vals = []
    for i in range(pad, h - pad):
        for j in range(pad, w - pad):
            wx = x[i - pad:i + pad + 1, j - pad:j + pad + 1]
            wy = y[i - pad:i + pad + 1, j - pad:j + pad + 1]
            mx, my = wx.mean(), wy.mean()
            vx = (wx * wx).mean() - mx * mx
            vy = (wy * wy).mean() - my * my
            cxy = (wx * wy).mean() - mx * my
            num = (2 * mx * my + c1) * (2 * cxy + c2)
            den = (mx * mx + my * my + c1) * (vx + vy + c2)
            vals.append(num / den)
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# metrics


def test_mse_known_value():
    a = np.zeros((4, 4), dtype=np.complex128)
    a[0, 0] = 2.0
    b = np.zeros((4, 4), dtype=np.complex128)
    b[0, 0] = 1.0
    assert mse(a, b) == pytest.approx(1.0 / 16.0)


def test_mse_symmetric(rng):
    a = random_complex(rng, (8, 8))
    b = random_complex(rng, (8, 8))
    assert mse(a, b) == pytest.approx(mse(b, a), rel=1e-14)


def test_mse_uses_magnitudes(rng):
    a = random_complex(rng, (8, 8))
    rot = a * np.exp(1j * 0.7)  # same magnitudes, different phases
    assert mse(a, rot) == pytest.approx(0.0, abs=1e-25)


def test_psnr_identical_hits_sentinel(rng):
    a = random_complex(rng, (8, 8))
    assert psnr(a, a) == PSNR_SENTINEL


def test_psnr_known_value():
    # normalized error 0.01 -> exactly 20 dB
    ref = np.full((16, 16), 1.0, dtype=np.complex128)
    test = np.full((16, 16), 0.9, dtype=np.complex128)
    assert psnr(ref, test) == pytest.approx(20.0, rel=1e-12)


def test_psnr_scale_invariant(rng):
    a = np.abs(random_complex(rng, (8, 8))) + 0.1
    b = np.abs(random_complex(rng, (8, 8))) + 0.1
    assert psnr(3.0 * a, 3.0 * b) == pytest.approx(psnr(a, b), rel=1e-12)


def test_psnr_decreases_with_noise(rng):
    ref = np.abs(random_complex(rng, (16, 16))) + 0.5
    small = ref + 0.01 * np.abs(random_complex(make_rng(1), (16, 16)))
    large = ref + 0.2 * np.abs(random_complex(make_rng(1), (16, 16)))
    assert psnr(ref, small) > psnr(ref, large)


def test_metrics_reject_zero_reference():
    zero = np.zeros((8, 8), dtype=np.complex128)
    other = np.ones((8, 8), dtype=np.complex128)
    for fn in (mse, psnr, ssim):
        with pytest.raises(ValueError):
            fn(zero, other)


def test_metrics_reject_shape_mismatch(rng):
    with pytest.raises(ValueError):
        mse(random_complex(rng, (8, 8)), random_complex(rng, (4, 4)))


def test_ssim_identical_is_one(rng):
    a = random_complex(rng, (16, 16))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_matches_loop_oracle(rng):
    ref = random_complex(rng, (16, 16))
    test = ref + 0.3 * random_complex(make_rng(2), (16, 16))
    assert ssim(ref, test) == pytest.approx(ssim_oracle(ref, test), abs=1e-10)


def test_ssim_symmetric(rng):
    a = np.abs(random_complex(rng, (16, 16)))
    b = 2.5 * np.abs(random_complex(make_rng(3), (16, 16)))  # different peaks
    assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12)


def test_ssim_below_one_for_noise(rng):
    a = np.abs(random_complex(rng, (16, 16))) + 0.2
    b = a + 0.5 * np.abs(random_complex(make_rng(4), (16, 16)))
    assert ssim(a, b) < 0.999


def test_ssim_rejects_small_images():
    with pytest.raises(ValueError):
        ssim(np.ones((4, 4)), np.ones((4, 4)))


def test_compare_bundle(rng):
    a = random_complex(rng, (16, 16))
    b = a + 0.1
    m = compare(a, b)
    assert m.psnr == pytest.approx(psnr(a, b))
    assert m.ssim == pytest.approx(ssim(a, b))
    assert m.mse == pytest.approx(mse(a, b))


# ---------------------------------------------------------------------------
# phantoms


def test_phantoms_basic_invariants():
    rng = make_rng(6)
    phantoms = synth_phantoms(20, (32, 32), rng)
    assert len(phantoms) == 20
    for ph in phantoms:
        assert ph.shape == (32, 32)
        assert np.iscomplexobj(ph)
        mag = np.abs(ph)
        assert mag.max() <= 1.0 + 1e-12
        support = float((mag > 1e-9).mean())
        assert 0.2 <= support <= 0.8


def test_phantoms_deterministic():
    a = synth_phantoms(3, (32, 32), make_rng(9))
    b = synth_phantoms(3, (32, 32), make_rng(9))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    c = synth_phantoms(3, (32, 32), make_rng(10))
    assert not np.array_equal(a[0], c[0])


def test_phantoms_have_nontrivial_phase():
    ph = synth_phantoms(1, (32, 32), make_rng(2))[0]
    inside = ph[np.abs(ph) > 1e-9]
    assert np.any(np.abs(inside.imag) > 1e-6)


def test_phantoms_vary_internally():
    ph = synth_phantoms(1, (64, 64), make_rng(11))[0]
    mag = np.abs(ph)
    inside = mag[mag > 1e-9]
    assert inside.std() > 1e-3  # interior ellipses modulate the base level


def test_phantoms_validation():
    with pytest.raises(ValueError):
        synth_phantoms(0, (32, 32), make_rng(0))
    with pytest.raises(ValueError):
        synth_phantoms(1, (4, 4), make_rng(0))


def test_augment_dataset_layout():
    img = np.arange(16, dtype=np.complex128).reshape(4, 4)
    out = augment_dataset([img])
    assert len(out) == 8
    np.testing.assert_array_equal(out[0], img)
    np.testing.assert_array_equal(out[1], np.fliplr(img))
    np.testing.assert_array_equal(out[2], np.rot90(img, 1))
    np.testing.assert_array_equal(out[3], np.fliplr(np.rot90(img, 1)))


def test_augment_dataset_counts_and_validation():
    imgs = [np.ones((4, 4), dtype=np.complex128)] * 3
    assert len(augment_dataset(imgs, rotations=2, flips=1)) == 6
    with pytest.raises(ValueError):
        augment_dataset(imgs, rotations=5)
    with pytest.raises(ValueError):
        augment_dataset(imgs, flips=3)


# ---------------------------------------------------------------------------
# configuration


def test_defaults_sane():
    cfg = ExperimentConfig()
    assert cfg.seed == 0
    assert cfg.sigma_min == 0.01
    assert cfg.sigma_max == 378.0
    assert cfg.n_steps == 1000
    assert cfg.subspace_mode == "four_band"


def test_parse_config_text_roundtrip():
    text = """
    # a comment line
    seed = 42
    mask_r = 6.5     # trailing comment
    subspace_mode = ll_projection
    warm_start = true
    n_steps = 0x10
    """
    cfg = parse_config_text(text)
    assert cfg.seed == 42
    assert cfg.mask_r == 6.5
    assert cfg.subspace_mode == "ll_projection"
    assert cfg.warm_start is True
    assert cfg.n_steps == 16  # base-0 integer parsing


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError):
        parse_config_text("no_such_key = 1")


def test_parse_rejects_bad_value():
    with pytest.raises(ConfigError):
        parse_config_text("seed = banana")
    with pytest.raises(ConfigError):
        parse_config_text("warm_start = maybe")


def test_parse_rejects_missing_equals():
    with pytest.raises(ConfigError):
        parse_config_text("seed 42")


def test_load_config_layering(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 1\nmask_r = 2.0\n")
    cfg = load_config(str(path), {"mask_r": "8.0"}, env={})
    assert cfg.seed == 1
    assert cfg.mask_r == 8.0  # override wins over the file


def test_load_config_env_seed(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 1\n")
    cfg = load_config(str(path), {"seed": "2"}, env={"SUBDM_SEED": "77"})
    assert cfg.seed == 77  # environment wins over everything
    with pytest.raises(ConfigError):
        load_config(str(path), None, env={"SUBDM_SEED": "x"})


def test_load_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/path.cfg")


def test_manifest_is_loadable_and_faithful():
    cfg = ExperimentConfig()
    cfg.seed = 9
    cfg.mask_r = 3.25
    cfg.warm_start = True
    cfg.learning_rate = 1.5e-4
    cfg.command = "reconstruct"
    text = manifest_text(cfg)
    again = parse_config_text(text)
    assert again == cfg


def test_manifest_float_precision():
    cfg = ExperimentConfig()
    cfg.sigma_min = 0.1 + 0.2  # not exactly 0.3
    again = parse_config_text(manifest_text(cfg))
    assert again.sigma_min == cfg.sigma_min  # repr round-trips exactly
