"""Mask families, acceleration guarantees, and the acquisition model."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subdiff.kspace import (
    ACCELERATION_TOL,
    FAMILIES,
    Measurement,
    SamplingMask,
    forward,
    image_to_kspace,
    kspace_to_image,
    make_mask,
    zero_filled,
)
from subdiff.numerics import make_rng

from conftest import random_complex


# ---------------------------------------------------------------------------
# SamplingMask / Measurement contracts


def test_mask_dataclass_counts():
    pattern = np.zeros((4, 4))
    pattern[0, :] = 1.0
    m = SamplingMask(pattern=pattern, family="uniform1d", acceleration=4.0)
    assert m.shape == (4, 4)
    assert m.n_sampled == 4
    assert m.realized_acceleration == pytest.approx(4.0)


def test_mask_rejects_non_binary():
    with pytest.raises(ValueError):
        SamplingMask(pattern=np.full((2, 2), 0.5), family="uniform1d", acceleration=2.0)


def test_mask_rejects_unknown_family():
    with pytest.raises(ValueError):
        SamplingMask(pattern=np.ones((2, 2)), family="spiral", acceleration=1.0)


def test_measurement_shape_check():
    m = SamplingMask(pattern=np.ones((4, 4)), family="uniform1d", acceleration=1.0)
    with pytest.raises(ValueError):
        Measurement(data=np.zeros((8, 8), dtype=np.complex128), mask=m)


# ---------------------------------------------------------------------------
# make_mask common behavior


def test_r_one_is_fully_sampled(rng):
    for family in FAMILIES:
        m = make_mask(family, (8, 8), 1.0, rng=rng)
        assert m.n_sampled == 64


def test_make_mask_rejects_bad_acceleration(rng):
    with pytest.raises(ValueError):
        make_mask("uniform1d", (8, 8), 0.5)


def test_make_mask_rejects_bad_acs(rng):
    with pytest.raises(ValueError):
        make_mask("uniform1d", (8, 8), 2.0, acs_lines=9)
    with pytest.raises(ValueError):
        make_mask("uniform1d", (8, 8), 2.0, acs_lines=-1)


def test_make_mask_rejects_unknown_family(rng):
    with pytest.raises(ValueError):
        make_mask("spiral", (8, 8), 2.0, rng=rng)


def test_stochastic_families_require_rng():
    for family in ("random2d", "poisson"):
        with pytest.raises(ValueError):
            make_mask(family, (16, 16), 2.0)


def test_unreachable_acceleration_raises(rng):
    # stride rounding + extra ACS rows push uniform1d far off R=4 at 16x16
    with pytest.raises(ValueError):
        make_mask("uniform1d", (16, 16), 4.0, acs_lines=2, rng=rng)


# ---------------------------------------------------------------------------
# per-family structure


def test_uniform1d_rows_and_acs():
    m = make_mask("uniform1d", (32, 32), 2.0, acs_lines=2)
    rows = np.nonzero(m.pattern.any(axis=1))[0]
    # full rows only
    assert np.all(m.pattern[rows, :] == 1.0)
    # stride-2 rows plus the shifted calibration rows nearest DC
    assert set(range(0, 32, 2)).issubset(set(rows.tolist()))
    assert 31 in set(rows.tolist())


def test_uniform1d_exact_stride():
    m = make_mask("uniform1d", (32, 32), 4.0)
    rows = sorted(set(np.nonzero(m.pattern)[0].tolist()))
    assert rows == [0, 4, 8, 12, 16, 20, 24, 28]
    assert m.realized_acceleration == pytest.approx(4.0)


def test_random2d_exact_count(rng):
    m = make_mask("random2d", (32, 32), 4.0, rng=rng)
    assert m.n_sampled == 256


def test_random2d_includes_acs_block(rng):
    m = make_mask("random2d", (32, 32), 4.0, acs_lines=4, rng=rng)
    centered = np.fft.fftshift(m.pattern)
    lo = 16 - 2
    assert np.all(centered[lo:lo + 4, lo:lo + 4] == 1.0)
    assert m.n_sampled == 256


def test_random2d_deterministic_given_rng():
    a = make_mask("random2d", (32, 32), 4.0, rng=make_rng(3))
    b = make_mask("random2d", (32, 32), 4.0, rng=make_rng(3))
    np.testing.assert_array_equal(a.pattern, b.pattern)


def test_radial_passes_through_dc():
    m = make_mask("radial", (64, 64), 8.0)
    assert m.pattern[0, 0] == 1.0  # DC is on every diameter


def test_radial_acceleration_in_tolerance():
    for r in (4.0, 6.0, 8.0):
        m = make_mask("radial", (64, 64), r)
        assert abs(m.realized_acceleration - r) <= ACCELERATION_TOL * r


def test_poisson_variable_density(rng):
    m = make_mask("poisson", (64, 64), 6.0, rng=rng)
    centered = np.fft.fftshift(m.pattern)
    yy, xx = np.mgrid[0:64, 0:64]
    dist = np.hypot(yy - 32, xx - 32)
    inner_rate = centered[dist < 12].mean()
    outer_rate = centered[dist > 24].mean()
    assert inner_rate > outer_rate  # denser near DC


def test_poisson_deterministic_given_rng():
    a = make_mask("poisson", (64, 64), 6.0, rng=make_rng(17))
    b = make_mask("poisson", (64, 64), 6.0, rng=make_rng(17))
    np.testing.assert_array_equal(a.pattern, b.pattern)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    family=st.sampled_from(FAMILIES),
    r=st.sampled_from([2.0, 4.0, 6.0]),
)
def test_realized_acceleration_property(seed, family, r):
    rng = make_rng(seed)
    mask = make_mask(family, (64, 64), r, rng=rng)
    realized = mask.realized_acceleration
    assert abs(realized - r) <= ACCELERATION_TOL * r
    vals = np.unique(mask.pattern)
    assert np.all(np.isin(vals, (0.0, 1.0)))


# ---------------------------------------------------------------------------
# acquisition


def test_forward_masks_entries(rng):
    k = random_complex(rng, (16, 16))
    m = make_mask("uniform1d", (16, 16), 2.0)
    meas = forward(k, m)
    sampled = m.pattern.astype(bool)
    np.testing.assert_array_equal(meas.data[sampled], k[sampled])
    assert np.all(meas.data[~sampled] == 0)


def test_forward_noise_only_on_sampled(rng):
    k = random_complex(rng, (16, 16))
    m = make_mask("uniform1d", (16, 16), 2.0)
    meas = forward(k, m, noise_stddev=0.5, rng=make_rng(4))
    sampled = m.pattern.astype(bool)
    assert np.all(meas.data[~sampled] == 0)
    assert np.any(meas.data[sampled] != k[sampled])


def test_forward_noise_statistics():
    k = np.zeros((128, 128), dtype=np.complex128)
    m = make_mask("uniform1d", (128, 128), 1.0)
    meas = forward(k, m, noise_stddev=2.0, rng=make_rng(11))
    assert np.mean(np.abs(meas.data) ** 2) == pytest.approx(4.0, rel=0.05)


def test_forward_requires_rng_for_noise(rng):
    k = random_complex(rng, (8, 8))
    m = make_mask("uniform1d", (8, 8), 2.0)
    with pytest.raises(ValueError):
        forward(k, m, noise_stddev=0.1)


def test_forward_shape_mismatch(rng):
    m = make_mask("uniform1d", (8, 8), 2.0)
    with pytest.raises(ValueError):
        forward(random_complex(rng, (16, 16)), m)


def test_zero_filled_full_mask_recovers_image(rng):
    img = random_complex(rng, (16, 16))
    m = make_mask("uniform1d", (16, 16), 1.0)
    meas = forward(image_to_kspace(img), m)
    np.testing.assert_allclose(zero_filled(meas), img, atol=1e-12)


def test_transform_pair_inverse(rng):
    img = random_complex(rng, (32, 32))
    np.testing.assert_allclose(kspace_to_image(image_to_kspace(img)), img, atol=1e-12)
