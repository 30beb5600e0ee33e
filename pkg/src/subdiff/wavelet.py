"""One-level orthonormal Haar decomposition of k-space into four bands.

Each non-overlapping 2x2 block [[a, b], [c, d]] maps to one coefficient per
band:

    ll = (a + b + c + d) / 2      smooth average
    lh = (a - b + c - d) / 2      column (horizontal) detail
    hl = (a + b - c - d) / 2      row (vertical) detail
    hh = (a - b - c + d) / 2      diagonal detail

The four analysis vectors are orthonormal, so the transform preserves energy
exactly and its inverse is the transpose. Band order is frozen as
(ll, lh, hl, hh) everywhere, including stacked representations.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionError, require_image

BAND_ORDER = ("ll", "lh", "hl", "hh")


@dataclass(frozen=True)
class WaveletBands:
    """Four equally shaped half-resolution bands of one parent image."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        shapes = {self.ll.shape, self.lh.shape, self.hl.shape, self.hh.shape}
        if len(shapes) != 1 or self.ll.ndim != 2:
            raise DimensionError(f"bands must share one 2D shape, got {shapes}")

    @property
    def band_shape(self):
        return self.ll.shape

    @property
    def parent_shape(self):
        h, w = self.ll.shape
        return (2 * h, 2 * w)

    def stack(self):
        """Bands as one (4, h, w) array in frozen band order."""
        return np.stack([self.ll, self.lh, self.hl, self.hh])

    @classmethod
    def from_stack(cls, arr):
        arr = np.asarray(arr)
        if arr.ndim != 3 or arr.shape[0] != 4:
            raise DimensionError(f"expected a (4, h, w) stack, got {arr.shape}")
        return cls(arr[0], arr[1], arr[2], arr[3])


def dwt(k):
    """Decompose a complex image into its four Haar bands."""
    k = require_image(k)
    if k.shape[0] < 2 or k.shape[1] < 2:
        raise DimensionError(f"decomposition needs sides >= 2, got {k.shape}")
    a = k[0::2, 0::2]
    b = k[0::2, 1::2]
    c = k[1::2, 0::2]
    d = k[1::2, 1::2]
    return WaveletBands(
        ll=(a + b + c + d) / 2.0,
        lh=(a - b + c - d) / 2.0,
        hl=(a + b - c - d) / 2.0,
        hh=(a - b - c + d) / 2.0,
    )


def idwt(bands):
    """Invert dwt exactly (the transform is orthonormal)."""
    ll, lh, hl, hh = bands.ll, bands.lh, bands.hl, bands.hh
    h, w = bands.parent_shape
    out = np.empty((h, w), dtype=np.complex128)
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    out[1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return out


def band_backprojections(bands):
    """Lift each band alone back to the parent grid.

    Returns four full-shape images, one per band in frozen order. They are
    mutually orthogonal and sum to idwt(bands).
    """
    zero = np.zeros_like(bands.ll)
    out = []
    for name in BAND_ORDER:
        parts = {n: zero for n in BAND_ORDER}
        parts[name] = getattr(bands, name)
        out.append(idwt(WaveletBands(**parts)))
    return tuple(out)


def project_ll(k):
    """Orthogonal projection of a full image onto its smooth (LL) subspace."""
    bands = dwt(k)
    zero = np.zeros_like(bands.ll)
    return idwt(WaveletBands(ll=bands.ll, lh=zero, hl=zero, hh=zero))
