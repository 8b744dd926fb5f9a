"""Orthonormal 1-D/2-D transforms: sequency-ordered fast WHT and the DCT-II baseline.

Images and coefficient tensors are ``(H, W, C)`` float arrays; every
transform acts on each channel independently. The two-stage WHT computes
``W1 @ X @ W2`` per channel, i.e. a column-wise pass followed by a row-wise
pass, both normalized by ``1/sqrt(N)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from . import _backend
from .errors import DomainError, SizeError

SEQUENCY = "sequency"
NATURAL = "natural"
ORDERINGS = (SEQUENCY, NATURAL)


@dataclass(frozen=True)
class CoefficientTensor:
    """Transform-domain tensor of shape ``(H, W, C)``."""

    data: np.ndarray
    kind: str  # "wht" | "dct"
    ordering: str = SEQUENCY

    @property
    def shape(self):
        return self.data.shape

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def sequency_permutation(n: int) -> np.ndarray:
    """Index map ``p`` with ``seq[s] = natural[p[s]]``.

    The natural-order row with sequency ``s`` sits at the bit reversal of
    the Gray code of ``s``.
    """
    if not is_power_of_two(n):
        raise SizeError(f"length must be a power of two, got {n}")
    bits = n.bit_length() - 1
    s = np.arange(n)
    g = s ^ (s >> 1)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((g >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


def _check_ordering(ordering):
    if ordering not in ORDERINGS:
        raise DomainError(f"unknown ordering {ordering!r}; expected one of {ORDERINGS}")


def _check_finite(a):
    if not np.all(np.isfinite(a)):
        raise DomainError("input contains non-finite values")


def _wht_rows(rows: np.ndarray, ordering: str, inverse: bool) -> np.ndarray:
    """Orthonormal WHT of every row of a 2-D float64 array (returns a new array)."""
    n = rows.shape[1]
    if not is_power_of_two(n):
        raise SizeError(f"WHT length must be a power of two, got {n}")
    if ordering == SEQUENCY:
        perm = sequency_permutation(n)
        if inverse:
            buf = np.empty_like(rows)
            buf[:, perm] = rows
        else:
            buf = np.array(rows, dtype=np.float64, order="C", copy=True)
        _backend.fwht_rows(buf)
        if not inverse:
            buf = np.ascontiguousarray(buf[:, perm])
    else:
        buf = np.array(rows, dtype=np.float64, order="C", copy=True)
        _backend.fwht_rows(buf)
    buf *= 1.0 / np.sqrt(n)
    return buf


def wht_along(a: np.ndarray, axis: int, ordering: str = SEQUENCY, inverse: bool = False) -> np.ndarray:
    """Apply the orthonormal WHT along one axis of an n-d array.

    ``inverse=True`` applies the transpose of the forward matrix, which is
    its inverse.
    """
    _check_ordering(ordering)
    a = np.asarray(a, dtype=np.float64)
    moved = np.moveaxis(a, axis, -1)
    shape = moved.shape
    if not is_power_of_two(shape[-1]):
        raise SizeError(f"WHT length must be a power of two, got {shape[-1]}")
    rows = np.ascontiguousarray(moved).reshape(-1, shape[-1])
    out = _wht_rows(rows, ordering, inverse).reshape(shape)
    return np.moveaxis(out, -1, axis)


def wht1d(v, ordering: str = SEQUENCY) -> np.ndarray:
    """Orthonormal fast Walsh-Hadamard transform of a vector.

    Parameters
    ----------
    v : array_like
        Real vector whose length is a power of two.
    ordering : {"sequency", "natural"}
        Row ordering of the Walsh-Hadamard matrix. In sequency order, output
        index ``i`` corresponds to a basis function with ``i`` sign changes.

    Raises
    ------
    SizeError
        If the length is not a power of two.
    DomainError
        If the input contains NaN or infinity.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise SizeError(f"expected a vector, got shape {v.shape}")
    _check_finite(v)
    return wht_along(v, 0, ordering)


def iwht1d(c, ordering: str = SEQUENCY) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1:
        raise SizeError(f"expected a vector, got shape {c.shape}")
    _check_finite(c)
    return wht_along(c, 0, ordering, inverse=True)


def as_tensor(img) -> np.ndarray:
    """Coerce to a finite float64 ``(H, W, C)`` array (2-D input gains C=1)."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or min(a.shape) < 1:
        raise SizeError(f"expected an (H, W, C) tensor, got shape {a.shape}")
    _check_finite(a)
    return a


def wht2d(img, ordering: str = SEQUENCY) -> CoefficientTensor:
    """Two-stage WHT: column-wise, then row-wise, per channel.

    >>> wht2d(np.full((4, 4, 1), 0.5)).data[..., 0]
    array([[2., 0., 0., 0.],
           [0., 0., 0., 0.],
           [0., 0., 0., 0.],
           [0., 0., 0., 0.]])
    """
    x = as_tensor(img)
    h, w, _ = x.shape
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise SizeError(f"WHT needs power-of-two height and width, got {h}x{w}")
    u = wht_along(x, 0, ordering)
    # right-multiplication by W2 applies W2^T to each row
    v = wht_along(u, 1, ordering, inverse=True)
    return CoefficientTensor(v, "wht", ordering)


def iwht2d(coeffs: CoefficientTensor) -> np.ndarray:
    if coeffs.kind != "wht":
        raise DomainError(f"expected WHT coefficients, got kind {coeffs.kind!r}")
    v = as_tensor(coeffs.data)
    u = wht_along(v, 1, coeffs.ordering)
    return wht_along(u, 0, coeffs.ordering, inverse=True)


def dct2d(img) -> CoefficientTensor:
    """Orthonormal 2-D DCT-II per channel (any height and width)."""
    x = as_tensor(img)
    return CoefficientTensor(scipy.fft.dctn(x, type=2, axes=(0, 1), norm="ortho"), "dct", NATURAL)


def idct2d(coeffs: CoefficientTensor) -> np.ndarray:
    if coeffs.kind != "dct":
        raise DomainError(f"expected DCT coefficients, got kind {coeffs.kind!r}")
    v = as_tensor(coeffs.data)
    return scipy.fft.idctn(v, type=2, axes=(0, 1), norm="ortho")
