"""Array contract, unitary transforms, rng plumbing, SUBK1 round trips.

The FFT is checked against a direct O(n^2) DFT oracle written from the
definition, independent of any library transform.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subdiff import numerics
from subdiff.numerics import (
    DimensionError,
    DimensionOverflowError,
    HeaderParseError,
    TrailingBytesError,
    TruncatedPayloadError,
    fft2,
    gaussian_noise,
    ifft2,
    inner,
    is_pow2,
    make_rng,
    read_array,
    require_image,
    spawn_rngs,
    write_array,
)

from conftest import random_complex


def dft2_oracle(x):
    """Unitary 2D DFT straight from the definition, O(n^2) per output row."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0.0 + 0.0j
            for m in range(h):
                for n in range(w):
                    acc += x[m, n] * np.exp(-2j * np.pi * (u * m / h + v * n / w))
            out[u, v] = acc / np.sqrt(h * w)
    return out


# ---------------------------------------------------------------------------
# contract validation


def test_is_pow2():
    assert [n for n in range(-2, 17) if is_pow2(n)] == [1, 2, 4, 8, 16]


def test_require_image_accepts_pow2_2d(rng):
    arr = random_complex(rng, (8, 16))
    out = require_image(arr)
    assert out.dtype == np.complex128
    assert out.flags["C_CONTIGUOUS"]
    np.testing.assert_array_equal(out, arr)


def test_require_image_promotes_real_input():
    out = require_image(np.ones((4, 4)))
    assert out.dtype == np.complex128


@pytest.mark.parametrize("bad", [np.zeros(8), np.zeros((2, 2, 2)), np.zeros((3, 4)), np.zeros((4, 6))])
def test_require_image_rejects_bad_shapes(bad):
    with pytest.raises(DimensionError):
        require_image(bad)


# ---------------------------------------------------------------------------
# transforms


@pytest.mark.parametrize("shape", [(2, 2), (4, 4), (4, 8), (16, 16)])
def test_fft2_matches_direct_dft(shape):
    rng = make_rng(99)
    x = random_complex(rng, shape)
    np.testing.assert_allclose(fft2(x), dft2_oracle(x), atol=1e-12)


def test_ifft2_inverts_fft2(rng):
    x = random_complex(rng, (32, 32))
    np.testing.assert_allclose(ifft2(fft2(x)), x, atol=1e-12)
    np.testing.assert_allclose(fft2(ifft2(x)), x, atol=1e-12)


def test_fft2_unitary_preserves_norm(rng):
    x = random_complex(rng, (64, 64))
    assert np.linalg.norm(fft2(x)) == pytest.approx(np.linalg.norm(x), rel=1e-13)


def test_fft2_preserves_inner_products(rng):
    a = random_complex(rng, (16, 16))
    b = random_complex(rng, (16, 16))
    assert inner(fft2(a), fft2(b)) == pytest.approx(inner(a, b), rel=1e-12)


def test_fft2_dc_is_scaled_mean(rng):
    x = random_complex(rng, (8, 8))
    assert fft2(x)[0, 0] == pytest.approx(x.sum() / 8.0, rel=1e-12)


# ---------------------------------------------------------------------------
# rng plumbing


def test_make_rng_reproducible():
    a = make_rng(7).standard_normal(16)
    b = make_rng(7).standard_normal(16)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, make_rng(8).standard_normal(16))


def test_spawn_rngs_independent_and_reproducible():
    first = spawn_rngs(3, 3)
    second = spawn_rngs(3, 3)
    draws_first = [g.standard_normal(8) for g in first]
    draws_second = [g.standard_normal(8) for g in second]
    for a, b in zip(draws_first, draws_second):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(draws_first[0], draws_first[1])


def test_gaussian_noise_total_variance():
    rng = make_rng(42)
    z = gaussian_noise(rng, (512, 512), 3.0)
    total = np.mean(np.abs(z) ** 2)
    assert total == pytest.approx(9.0, rel=0.02)
    # split evenly between components
    assert np.var(z.real) == pytest.approx(4.5, rel=0.03)
    assert np.var(z.imag) == pytest.approx(4.5, rel=0.03)


def test_gaussian_noise_zero_stddev_skips_stream():
    rng = make_rng(5)
    before = rng.bit_generator.state["state"]["state"]
    z = gaussian_noise(rng, (8, 8), 0.0)
    assert np.all(z == 0) and z.dtype == np.complex128
    assert rng.bit_generator.state["state"]["state"] == before


def test_gaussian_noise_rejects_negative_stddev(rng):
    with pytest.raises(ValueError):
        gaussian_noise(rng, (2, 2), -1.0)


# ---------------------------------------------------------------------------
# SUBK1 serialization


def test_write_read_round_trip(tmp_path, rng):
    # float32-representable values survive exactly
    arr = random_complex(rng, (16, 8)).astype(np.complex64).astype(np.complex128)
    path = tmp_path / "a.subk"
    write_array(path, arr)
    np.testing.assert_array_equal(read_array(path), arr)


def test_written_header_layout(tmp_path):
    path = tmp_path / "h.subk"
    write_array(path, np.zeros((4, 8), dtype=np.complex128))
    blob = path.read_bytes()
    assert blob.startswith(b"SUBK1 4 8\n")
    assert len(blob) == len(b"SUBK1 4 8\n") + 4 * 8 * 8


def test_payload_is_row_major_interleaved(tmp_path):
    arr = np.zeros((2, 2), dtype=np.complex128)
    arr[0, 1] = 1.5 - 2.5j
    path = tmp_path / "p.subk"
    write_array(path, arr)
    body = path.read_bytes().split(b"\n", 1)[1]
    floats = np.frombuffer(body, dtype="<f4")
    np.testing.assert_array_equal(floats, [0, 0, 1.5, -2.5, 0, 0, 0, 0])


def test_read_missing_header(tmp_path):
    p = tmp_path / "bad.subk"
    p.write_bytes(b"\x00" * 100)
    with pytest.raises(HeaderParseError):
        read_array(p)


@pytest.mark.parametrize("header", [b"NOPE 4 4\n", b"SUBK1 4\n", b"SUBK1 4 4 4\n", b"SUBK1 x 4\n", b"SUBK1 -4 4\n", b"SUBK1 0 4\n"])
def test_read_malformed_headers(tmp_path, header):
    p = tmp_path / "bad.subk"
    p.write_bytes(header + b"\x00" * 128)
    with pytest.raises(HeaderParseError):
        read_array(p)


def test_read_truncated_payload(tmp_path):
    p = tmp_path / "short.subk"
    p.write_bytes(b"SUBK1 4 4\n" + b"\x00" * (4 * 4 * 8 - 1))
    with pytest.raises(TruncatedPayloadError):
        read_array(p)


def test_read_trailing_bytes(tmp_path):
    p = tmp_path / "long.subk"
    p.write_bytes(b"SUBK1 4 4\n" + b"\x00" * (4 * 4 * 8 + 1))
    with pytest.raises(TrailingBytesError):
        read_array(p)


def test_read_dimension_overflow(tmp_path):
    p = tmp_path / "huge.subk"
    side = numerics.MAX_SIDE * 2
    p.write_bytes(f"SUBK1 {side} {side}\n".encode() + b"\x00" * 16)
    with pytest.raises(DimensionOverflowError):
        read_array(p)


def test_read_non_pow2_dimensions(tmp_path):
    p = tmp_path / "odd.subk"
    p.write_bytes(b"SUBK1 3 4\n" + b"\x00" * (3 * 4 * 8))
    with pytest.raises(DimensionError):
        read_array(p)


def test_write_is_atomic_no_temp_left(tmp_path):
    path = tmp_path / "x.subk"
    write_array(path, np.ones((2, 2), dtype=np.complex128))
    write_array(path, 2 * np.ones((2, 2), dtype=np.complex128))
    assert sorted(f.name for f in tmp_path.iterdir()) == ["x.subk"]
    np.testing.assert_array_equal(read_array(path), 2 * np.ones((2, 2)))


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    side_h=st.sampled_from([1, 2, 4, 8, 16]),
    side_w=st.sampled_from([1, 2, 4, 8, 16]),
)
def test_round_trip_property(tmp_path_factory, seed, side_h, side_w):
    rng = make_rng(seed)
    arr = random_complex(rng, (side_h, side_w))
    arr32 = arr.astype(np.complex64).astype(np.complex128)
    path = tmp_path_factory.mktemp("rt") / "p.subk"
    write_array(path, arr32)
    back = read_array(path)
    np.testing.assert_array_equal(back, arr32)
    assert back.shape == (side_h, side_w)
