"""Regional max-pooling compression of two-stage WHT tensors.

The ``(N_H, N_W, N_C)`` coefficient tensor is split into an upper-left
inner block ``R_I`` (``L_H x L_W``), a right block ``R_O1`` (all rows,
``N_W - L_W`` columns) and a lower-left block ``R_O2``
(``N_H - L_H`` rows, ``L_W`` columns)::

    [ R_I  | R_O1 ]
    [ R_O2 |      ]

All three are max-pooled across channels; ``R_O1`` is then max-pooled in
``N_M x N_M`` squares and ``R_O2`` in ``N_V x 1`` column segments. The
pooled blocks are reassembled in the same geometry with zeros filling the
gaps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .errors import ConfigError, DomainError, SizeError
from .transform import CoefficientTensor, dct2d, wht2d

DEFAULT_INNER = 32
DEFAULT_BLOCK_POOL = 4
DEFAULT_VECTOR_POOL = 8
DEFAULT_ETA = 0.997
DEFAULT_SCALE = 16.0
DEFAULT_LADDER = (16, 32, 64, 128)


@dataclass(frozen=True)
class RegionLayout:
    inner_h: int = DEFAULT_INNER
    inner_w: int = DEFAULT_INNER
    block_pool: int = DEFAULT_BLOCK_POOL
    vector_pool: int = DEFAULT_VECTOR_POOL

    def __post_init__(self):
        for name in ("inner_h", "inner_w"):
            if int(getattr(self, name)) < 1:
                raise SizeError(f"{name} must be a positive integer")
        for name in ("block_pool", "vector_pool"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be a positive integer")

    def check_fits(self, n_h: int, n_w: int) -> None:
        if self.inner_h > n_h or self.inner_w > n_w:
            raise SizeError(
                f"inner region {self.inner_h}x{self.inner_w} exceeds tensor {n_h}x{n_w}"
            )

    def output_shape(self, n_h: int, n_w: int) -> tuple[int, int]:
        """Closed-form size of the assembled feature for an ``n_h x n_w`` tensor."""
        self.check_fits(n_h, n_w)
        left = self.inner_h + math.ceil((n_h - self.inner_h) / self.vector_pool)
        right_w = math.ceil((n_w - self.inner_w) / self.block_pool)
        right_h = math.ceil(n_h / self.block_pool) if right_w else 0
        return max(left, right_h), self.inner_w + right_w


@dataclass(frozen=True)
class RegionPartition:
    inner: np.ndarray
    outer1: np.ndarray
    outer2: np.ndarray

    def reassemble(self) -> np.ndarray:
        left = np.concatenate([self.inner, self.outer2], axis=0)
        return np.concatenate([left, self.outer1], axis=1)


@dataclass
class CompressedFeature:
    data: np.ndarray
    layout: RegionLayout
    pad_mask: np.ndarray
    beta: Optional[float] = None

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class BetaRecord:
    image_index: int
    beta: float
    inner_h: int
    inner_w: int


def _data(coeffs) -> np.ndarray:
    a = coeffs.data if isinstance(coeffs, CoefficientTensor) else np.asarray(coeffs, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise SizeError(f"expected an (H, W, C) tensor, got shape {a.shape}")
    return a


def partition_regions(coeffs, layout: RegionLayout) -> RegionPartition:
    v = _data(coeffs)
    n_h, n_w, _ = v.shape
    layout.check_fits(n_h, n_w)
    lh, lw = layout.inner_h, layout.inner_w
    return RegionPartition(
        inner=v[:lh, :lw].copy(),
        outer1=v[:, lw:].copy(),
        outer2=v[lh:, :lw].copy(),
    )


def channel_max_pool(block) -> np.ndarray:
    """g0: elementwise maximum over the channel axis."""
    block = np.asarray(block, dtype=np.float64)
    if block.ndim == 2:
        block = block[:, :, None]
    if block.size == 0:
        raise SizeError(f"cannot pool an empty block of shape {block.shape}")
    return block.max(axis=2)


def _pool(matrix, ph: int, pw: int) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise SizeError(f"expected a matrix, got shape {m.shape}")
    if m.size == 0:
        raise SizeError("cannot pool an empty matrix")
    return _backend.max_pool_2d(np.ascontiguousarray(m), ph, pw)


def block_max_pool(matrix, n_m: int) -> np.ndarray:
    """g1: max over non-overlapping ``n_m x n_m`` squares; edge windows may be partial."""
    if n_m < 1:
        raise DomainError(f"block pool size must be >= 1, got {n_m}")
    return _pool(matrix, n_m, n_m)


def vector_max_pool(matrix, n_v: int) -> np.ndarray:
    """g2: max over non-overlapping ``n_v x 1`` column segments."""
    if n_v < 1:
        raise DomainError(f"vector pool size must be >= 1, got {n_v}")
    return _pool(matrix, n_v, 1)


def assemble_fixed(coeffs, layout: RegionLayout) -> CompressedFeature:
    """Compress one tensor with a given inner-region layout into a single-channel matrix."""
    v = _data(coeffs)
    if isinstance(coeffs, CoefficientTensor) and coeffs.kind != "wht":
        raise DomainError(f"region compression expects WHT coefficients, got {coeffs.kind!r}")
    n_h, n_w, _ = v.shape
    out_h, out_w = layout.output_shape(n_h, n_w)
    part = partition_regions(v, layout)
    lh, lw = layout.inner_h, layout.inner_w

    out = np.zeros((out_h, out_w))
    mask = np.ones((out_h, out_w), dtype=bool)
    out[:lh, :lw] = channel_max_pool(part.inner)
    mask[:lh, :lw] = False
    if part.outer2.size:
        o2 = vector_max_pool(channel_max_pool(part.outer2), layout.vector_pool)
        out[lh:lh + o2.shape[0], :lw] = o2
        mask[lh:lh + o2.shape[0], :lw] = False
    if part.outer1.size:
        o1 = block_max_pool(channel_max_pool(part.outer1), layout.block_pool)
        out[:o1.shape[0], lw:] = o1
        mask[:o1.shape[0], lw:] = False
    return CompressedFeature(out, layout, mask)


def compute_beta(coeffs, inner_h: int, inner_w: int) -> float:
    """Fraction of the tensor's energy that lies in the upper-left ``inner_h x inner_w`` block."""
    v = _data(coeffs)
    sq = np.square(v)
    total = float(sq.sum())
    if not total > 0.0:
        raise DomainError("beta is undefined for a tensor with zero energy")
    if not (1 <= inner_h <= v.shape[0] and 1 <= inner_w <= v.shape[1]):
        raise SizeError(f"inner region {inner_h}x{inner_w} does not fit tensor {v.shape[:2]}")
    inner = float(sq[:inner_h, :inner_w].sum())
    outer = float(sq[inner_h:, :inner_w].sum()) + float(sq[:, inner_w:].sum())
    return inner / (inner + outer)


def _check_adaptive_config(eta, ladder, n_h=None, n_w=None):
    if not 0.0 < eta < 1.0:
        raise ConfigError(f"eta must lie in (0, 1), got {eta}")
    ladder = tuple(int(s) for s in ladder)
    if not ladder:
        raise ConfigError("ladder must not be empty")
    if any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[0] < 1:
        raise ConfigError(f"ladder must be strictly increasing positive sizes, got {ladder}")
    if n_h is not None and ladder[-1] > min(n_h, n_w):
        raise ConfigError(f"ladder entry {ladder[-1]} exceeds tensor size {n_h}x{n_w}")
    return ladder


def select_adaptive_region(
    coeffs,
    eta: float = DEFAULT_ETA,
    ladder: Sequence[int] = DEFAULT_LADDER,
    block_pool: int = DEFAULT_BLOCK_POOL,
    vector_pool: int = DEFAULT_VECTOR_POOL,
) -> RegionLayout:
    """Smallest square inner size on ``ladder`` whose beta reaches ``eta``.

    Falls back to the largest ladder entry when none qualifies.
    """
    return _adaptive_scan(coeffs, eta, ladder, block_pool, vector_pool)[0]


def _adaptive_scan(coeffs, eta, ladder, block_pool, vector_pool):
    v = _data(coeffs)
    ladder = _check_adaptive_config(eta, ladder, v.shape[0], v.shape[1])
    beta = None
    for s in ladder:
        beta = compute_beta(v, s, s)
        if beta >= eta:
            break
    return RegionLayout(s, s, block_pool, vector_pool), beta


def assemble_adaptive_batch(
    coeffs_batch,
    eta: float = DEFAULT_ETA,
    ladder: Sequence[int] = DEFAULT_LADDER,
    scale: float = DEFAULT_SCALE,
    block_pool: int = DEFAULT_BLOCK_POOL,
    vector_pool: int = DEFAULT_VECTOR_POOL,
) -> list[CompressedFeature]:
    """Per-image adaptive compression, zero-padded to common dims and scaled.

    Each returned feature carries the beta value of its selected layout.
    """
    coeffs_batch = list(coeffs_batch)
    if not coeffs_batch:
        raise SizeError("adaptive batch must not be empty")
    if not scale > 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    _check_adaptive_config(eta, ladder)
    feats = []
    for c in coeffs_batch:
        layout, beta = _adaptive_scan(c, eta, ladder, block_pool, vector_pool)
        f = assemble_fixed(c, layout)
        f.beta = beta
        feats.append(f)
    h_max = max(f.height for f in feats)
    w_max = max(f.width for f in feats)
    return [pad_feature(f, h_max, w_max, scale) for f in feats]


def pad_feature(feature: CompressedFeature, height: int, width: int, scale: float = 1.0) -> CompressedFeature:
    """Zero-pad a feature on the bottom/right to ``height x width`` and multiply by ``scale``."""
    if height < feature.height or width < feature.width:
        raise SizeError("padding target is smaller than the feature")
    data = np.zeros((height, width))
    mask = np.ones((height, width), dtype=bool)
    data[:feature.height, :feature.width] = feature.data
    mask[:feature.height, :feature.width] = feature.pad_mask
    if scale != 1.0:
        data *= scale
    return replace(feature, data=data, pad_mask=mask)


def beta_records(features: Sequence[CompressedFeature]) -> list[BetaRecord]:
    return [
        BetaRecord(i, f.beta, f.layout.inner_h, f.layout.inner_w)
        for i, f in enumerate(features)
        if f.beta is not None
    ]


def write_beta_csv(path, records: Sequence[BetaRecord]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_index", "beta", "inner_h", "inner_w"])
        for r in records:
            writer.writerow([r.image_index, repr(r.beta), r.inner_h, r.inner_w])


def wht_only_feature(img) -> CoefficientTensor:
    """Full-frame two-stage WHT; no partitioning or pooling."""
    return wht2d(img)


def dct_feature(img) -> CoefficientTensor:
    """Full-frame orthonormal DCT-II; no partitioning or pooling."""
    return dct2d(img)
