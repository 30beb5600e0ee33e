"""Complex-array primitives shared by every stage of the reconstruction engine.

Conventions, fixed once here and relied on everywhere else:

- images and k-space arrays are 2D numpy complex128 arrays whose side lengths
  are powers of two; DC sits at index (0, 0), centered layouts appear only at
  display or export time
- the 2D FFT is unitary in both directions, so transforms preserve the l2
  norm and a noise level means the same thing in either domain
- complex Gaussian noise of scale s has total per-entry variance s**2, split
  evenly between the real and imaginary parts
- the on-disk array format is SUBK1: one ASCII header line
  "SUBK1 <height> <width>\\n" followed by height*width little-endian float32
  (real, imag) pairs in row-major order, no padding and no trailing bytes
"""

import os
import tempfile

import numpy as np

MAGIC = b"SUBK1"
MAX_SIDE = 1 << 15
MAX_ENTRIES = 1 << 26


class DimensionError(ValueError):
    """Array shape violates the power-of-two 2D image contract."""


class ArrayFormatError(ValueError):
    """Base class for SUBK1 parse failures."""


class HeaderParseError(ArrayFormatError):
    """Header line is missing, has the wrong magic, or malformed fields."""


class TruncatedPayloadError(ArrayFormatError):
    """Payload holds fewer bytes than the header promises."""


class TrailingBytesError(ArrayFormatError):
    """Payload holds more bytes than the header promises."""


class DimensionOverflowError(ArrayFormatError):
    """Header dimensions exceed the supported range."""


def is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def require_image(arr, name="array"):
    """Validate the ComplexImage contract and return a complex128 view.

    Accepts anything array-like that is 2D with power-of-two side lengths.
    Raises DimensionError otherwise.
    """
    out = np.asarray(arr)
    if out.ndim != 2:
        raise DimensionError(f"{name} must be 2D, got shape {out.shape}")
    h, w = out.shape
    if not (is_pow2(h) and is_pow2(w)):
        raise DimensionError(f"{name} sides must be powers of two, got {h}x{w}")
    return np.ascontiguousarray(out, dtype=np.complex128)


def fft2(x):
    """Unitary 2D FFT, DC at (0, 0)."""
    x = require_image(x)
    return np.fft.fft2(x, norm="ortho")


def ifft2(x):
    """Unitary 2D inverse FFT."""
    x = require_image(x)
    return np.fft.ifft2(x, norm="ortho")


def make_rng(seed):
    """Seeded PCG64 generator; identical seeds give bit-identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_rngs(seed, n):
    """n independent child generators derived deterministically from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def gaussian_noise(rng, shape, stddev):
    """Complex Gaussian noise with total per-entry variance stddev**2.

    Real and imaginary parts are independent N(0, stddev**2 / 2) draws, so
    E|z|^2 == stddev**2. stddev == 0 short-circuits to exact zeros without
    consuming the stream.
    """
    stddev = float(stddev)
    if stddev < 0:
        raise ValueError(f"stddev must be non-negative, got {stddev}")
    if stddev == 0.0:
        return np.zeros(shape, dtype=np.complex128)
    scale = stddev / np.sqrt(2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * scale


def inner(a, b):
    """Complex inner product <a, b> = sum(conj(a) * b)."""
    return complex(np.vdot(np.asarray(a), np.asarray(b)))


def _atomic_write(path, payload):
    # Whole-file atomicity: write a sibling temp file, then rename over.
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".subk-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_array(path, arr):
    """Serialize a complex image to the SUBK1 format atomically.

    Values are rounded to float32 as the format requires; callers that need
    bit-exact round trips must hand in float32-representable data.
    """
    arr = require_image(arr)
    h, w = arr.shape
    header = f"SUBK1 {h} {w}\n".encode("ascii")
    payload = np.empty((h, w, 2), dtype="<f4")
    payload[..., 0] = arr.real
    payload[..., 1] = arr.imag
    _atomic_write(path, header + payload.tobytes())


def read_array(path):
    """Parse a SUBK1 file back into a complex128 image.

    Raises HeaderParseError, DimensionOverflowError, TruncatedPayloadError,
    TrailingBytesError, or DimensionError depending on what is wrong.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    newline = blob.find(b"\n", 0, 64)
    if newline < 0:
        raise HeaderParseError(f"{path}: no header line in the first 64 bytes")
    try:
        fields = blob[:newline].decode("ascii").split(" ")
    except UnicodeDecodeError as exc:
        raise HeaderParseError(f"{path}: header is not ASCII") from exc
    if len(fields) != 3 or fields[0] != "SUBK1":
        raise HeaderParseError(f"{path}: malformed header {blob[:newline]!r}")
    try:
        h, w = int(fields[1]), int(fields[2])
    except ValueError as exc:
        raise HeaderParseError(f"{path}: non-integer dimensions") from exc
    if h <= 0 or w <= 0:
        raise HeaderParseError(f"{path}: non-positive dimensions {h}x{w}")
    if h > MAX_SIDE or w > MAX_SIDE or h * w > MAX_ENTRIES:
        raise DimensionOverflowError(f"{path}: dimensions {h}x{w} exceed limits")
    if not (is_pow2(h) and is_pow2(w)):
        raise DimensionError(f"{path}: sides must be powers of two, got {h}x{w}")
    body = blob[newline + 1:]
    expected = h * w * 8
    if len(body) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(body)} bytes, header promises {expected}"
        )
    if len(body) > expected:
        raise TrailingBytesError(
            f"{path}: {len(body) - expected} trailing bytes after the payload"
        )
    flat = np.frombuffer(body, dtype="<f4").reshape(h, w, 2)
    return (flat[..., 0].astype(np.float64) + 1j * flat[..., 1].astype(np.float64))
