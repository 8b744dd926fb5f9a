"""Four-way comparison harness: fixed region, adaptive region, WHT-only and DCT features.

Every method feeds the same CNN architecture; only the input features differ.
Per-epoch rows are appended to a CSV with the schema in :data:`CSV_FIELDS`.
"""
from __future__ import annotations

import contextlib
import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import compress
from .cnn import ARCHITECTURES, TrainConfig, train
from .dataset import EpochPlan, stack
from .errors import ConfigError, SizeError, WhtpackError
from .transform import wht2d

log = logging.getLogger(__name__)

METHODS = ("fixed_region", "adaptive_region", "wht_only", "dct")
ALIASES = {
    "fixed": "fixed_region",
    "adaptive": "adaptive_region",
    "wht": "wht_only",
    "wht-only": "wht_only",
    **{m: m for m in METHODS},
}
CSV_FIELDS = (
    "method", "gamma", "lambda", "seed", "epoch", "train_acc", "val_acc",
    "epoch_seconds", "cumulative_seconds", "preprocess_seconds",
)
TIMING_FIELDS = ("epoch_seconds", "cumulative_seconds", "preprocess_seconds")
CONDITIONING_MODES = ("standardize", "global", "pixel", "none")


def resolve_method(name: str) -> str:
    try:
        return ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown method {name!r}; choose from {sorted(ALIASES)}") from None


def parse_methods(spec: str) -> list[str]:
    if spec.strip().lower() == "all":
        return list(METHODS)
    methods = [resolve_method(s) for s in spec.split(",") if s.strip()]
    if not methods:
        raise ConfigError("no methods given")
    return list(dict.fromkeys(methods))


@contextlib.contextmanager
def thread_limit(threads: Optional[int] = None):
    """Cap BLAS threads; ``0`` (or ``WHTPACK_THREADS=0``) means single-threaded deterministic mode."""
    if threads is None:
        env = os.environ.get("WHTPACK_THREADS")
        threads = int(env) if env not in (None, "") else None
    if threads is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=max(1, threads)):
        yield


# -- preprocessing ---------------------------------------------------------

@dataclass(frozen=True)
class CompressionConfig:
    """Region-compression parameters; ``None`` sizes scale with the image (``N/8`` inner, ``N/16 * 2^k`` ladder)."""

    inner: Optional[int] = None
    block_pool: int = compress.DEFAULT_BLOCK_POOL
    vector_pool: int = compress.DEFAULT_VECTOR_POOL
    eta: float = compress.DEFAULT_ETA
    ladder: Optional[tuple] = None
    scale: float = compress.DEFAULT_SCALE

    def inner_for(self, size: int) -> int:
        return self.inner if self.inner is not None else max(1, size // 8)

    def ladder_for(self, size: int) -> tuple:
        if self.ladder is not None:
            return tuple(self.ladder)
        base = max(1, size // 16)
        return tuple(base * 2 ** k for k in range(4) if base * 2 ** k <= size)


@dataclass
class FeatureSet:
    method: str
    x: np.ndarray  # (N, H, W, C) float32
    seconds: float
    betas: list = field(default_factory=list)
    source_pixels: int = 1

    @property
    def input_shape(self):
        return self.x.shape[1:]

    @property
    def volume(self) -> int:
        return int(np.prod(self.input_shape))

    def conditioned(self, mode: str, train_idx) -> "FeatureSet":
        """Input conditioning applied before the CNN, fitted on the training rows only.

        ``global`` subtracts the per-position mean and divides by one shared
        standard deviation, so relative coefficient magnitudes survive;
        ``standardize`` z-scores every input position; ``pixel`` divides by
        ``sqrt(H*W)`` of the source image so the DC term equals the mean
        pixel value; ``none`` passes features through.
        """
        if mode == "none":
            return self
        if mode == "pixel":
            return replace(self, x=(self.x / np.float32(math.sqrt(self.source_pixels))).astype(np.float32))
        if mode not in ("global", "standardize"):
            raise ConfigError(f"unknown input conditioning {mode!r}")
        ref = self.x[train_idx].astype(np.float64)
        mu = ref.mean(axis=0)
        if mode == "global":
            sd = np.sqrt(np.mean(np.square(ref - mu))) or 1.0
        else:
            sd = ref.std(axis=0)
            sd[sd < 1e-12] = 1.0
        return replace(self, x=((self.x - mu) / sd).astype(np.float32))


def preprocess(method: str, images, cfg: CompressionConfig = CompressionConfig()) -> FeatureSet:
    """Turn ``(N, H, W, C)`` images into CNN inputs for one method; timing is recorded."""
    method = resolve_method(method)
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or len(images) == 0:
        raise SizeError(f"expected a non-empty (N, H, W, C) stack, got shape {images.shape}")
    n_h, n_w = images.shape[1:3]
    size = min(n_h, n_w)
    t0 = time.perf_counter()
    betas = []
    if method == "fixed_region":
        inner = cfg.inner_for(size)
        layout = compress.RegionLayout(inner, inner, cfg.block_pool, cfg.vector_pool)
        feats = [compress.assemble_fixed(wht2d(im), layout).data for im in images]
        x = np.stack(feats)[..., None]
    elif method == "adaptive_region":
        feats = compress.assemble_adaptive_batch(
            [wht2d(im) for im in images], cfg.eta, cfg.ladder_for(size), cfg.scale,
            cfg.block_pool, cfg.vector_pool,
        )
        betas = compress.beta_records(feats)
        x = np.stack([f.data for f in feats])[..., None]
    elif method == "wht_only":
        x = np.stack([compress.wht_only_feature(im).data for im in images])
    else:
        x = np.stack([compress.dct_feature(im).data for im in images])
    seconds = time.perf_counter() - t0
    return FeatureSet(method, x.astype(np.float32), seconds, betas, n_h * n_w)


# -- grid ------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    gammas: tuple = (8, 16, 32, 64, 96)
    lambdas: tuple = (100, 200, 500)
    epochs: int = 100
    seeds: tuple = (0,)

    def __post_init__(self):
        if not self.gammas or not self.lambdas or not self.seeds:
            raise ConfigError("grid lists must not be empty")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @classmethod
    def paper(cls, seeds=(0,)):
        return cls(seeds=tuple(seeds))

    @classmethod
    def desk(cls, seeds=(0,)):
        return cls(gammas=(8, 16), lambdas=(100,), epochs=50, seeds=tuple(seeds))

    def cells(self):
        return [(g, l) for g in self.gammas for l in self.lambdas]


@dataclass
class RunMetrics:
    method: str
    gamma: int
    lam: int
    seed: int
    epoch: int
    train_acc: float
    val_acc: float
    epoch_seconds: float
    cumulative_seconds: float
    preprocess_seconds: float

    def row(self) -> list[str]:
        return [
            self.method, str(self.gamma), str(self.lam), str(self.seed), str(self.epoch),
            f"{self.train_acc:.6f}", f"{self.val_acc:.6f}",
            f"{self.epoch_seconds:.6f}", f"{self.cumulative_seconds:.6f}", f"{self.preprocess_seconds:.6f}",
        ]


@dataclass
class RunFailure:
    method: str
    gamma: int
    lam: int
    seed: int
    error: str


@dataclass
class GridResult:
    rows: list
    failures: list
    features: dict

    def summary(self) -> list[dict]:
        return summarize(self.rows)


class MetricsWriter:
    """Append-only CSV writer; writes the header only into an empty or new file."""

    def __init__(self, path):
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if not self.path.exists() or self.path.stat().st_size == 0:
                with open(self.path, "w", newline="") as fh:
                    csv.writer(fh).writerow(CSV_FIELDS)

    def write(self, metrics: RunMetrics):
        if self.path is None:
            return
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(metrics.row())


def run_single(features: FeatureSet, train_idx, val_idx, labels, gamma: int, lam: int, epochs: int,
               seed: int = 0, arch: str = "desk", learning_rate: float = 0.01, precision: str = "f32",
               writer: Optional[MetricsWriter] = None, n_classes: Optional[int] = None):
    """Train one fresh model on precomputed features; returns ``(model, [RunMetrics])``."""
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}")
    labels = np.asarray(labels)
    k = n_classes or int(labels.max()) + 1
    model = ARCHITECTURES[arch](features.input_shape, k, seed=seed, precision=precision)
    cfg = TrainConfig(EpochPlan(lam, gamma, epochs, shuffle_seed=seed), learning_rate, seed, precision)
    out = []

    def record(rec):
        m = RunMetrics(features.method, gamma, lam, seed, rec.epoch, rec.train_acc, rec.val_acc,
                       rec.epoch_seconds, rec.cumulative_seconds, features.seconds)
        out.append(m)
        if writer is not None:
            writer.write(m)

    train(model, features.x[train_idx], labels[train_idx], cfg,
          features.x[val_idx] if len(val_idx) else None, labels[val_idx] if len(val_idx) else None,
          callback=record)
    return model, out


def run_grid(grid: GridSpec, methods: Sequence[str], train_items, val_items, arch: str = "desk",
             compression: CompressionConfig = CompressionConfig(), learning_rate: float = 0.01,
             csv_path=None, precision: str = "f32", conditioning: str = "standardize") -> GridResult:
    """One training run per (method, gamma, lambda, seed); failures are recorded and the grid continues."""
    if conditioning not in CONDITIONING_MODES:
        raise ConfigError(f"conditioning must be one of {CONDITIONING_MODES}, got {conditioning!r}")
    methods = [resolve_method(m) for m in methods]
    items = list(train_items) + list(val_items)
    images, labels = stack(items)
    train_idx = np.arange(len(train_items))
    val_idx = np.arange(len(train_items), len(items))
    k = int(labels.max()) + 1
    writer = MetricsWriter(csv_path)
    rows, failures, features = [], [], {}
    conditioned = {}
    for method in methods:
        try:
            features[method] = preprocess(method, images, compression)
        except WhtpackError as exc:
            log.error("preprocessing failed for %s: %s", method, exc)
            for g, l in grid.cells():
                for s in grid.seeds:
                    failures.append(RunFailure(method, g, l, s, str(exc)))
            continue
        conditioned[method] = features[method].conditioned(conditioning, train_idx)
        log.info("%s: features %s, preprocessing %.3fs", method, features[method].input_shape,
                 features[method].seconds)
    # methods are interleaved inside every (cell, seed) so slow drift in machine speed
    # spreads over all of them instead of biasing whichever ran last
    for gamma, lam in grid.cells():
        for seed in grid.seeds:
            for method, fs in conditioned.items():
                try:
                    _, metrics = run_single(fs, train_idx, val_idx, labels, gamma, lam, grid.epochs, seed,
                                            arch, learning_rate, precision, writer, k)
                    rows.extend(metrics)
                except WhtpackError as exc:
                    log.error("run %s gamma=%d lambda=%d seed=%d aborted: %s", method, gamma, lam, seed, exc)
                    failures.append(RunFailure(method, gamma, lam, seed, str(exc)))
    return GridResult(rows, failures, features)


# -- summaries -------------------------------------------------------------

def read_metrics(path) -> list[RunMetrics]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_FIELDS:
            raise SizeError(f"{path}: unexpected CSV header {reader.fieldnames}")
        return [
            RunMetrics(r["method"], int(r["gamma"]), int(r["lambda"]), int(r["seed"]), int(r["epoch"]),
                       float(r["train_acc"]), float(r["val_acc"]), float(r["epoch_seconds"]),
                       float(r["cumulative_seconds"]), float(r["preprocess_seconds"]))
            for r in reader
        ]


def mean_epoch_seconds(rows: Sequence[RunMetrics]) -> float:
    """Mean per-epoch training time with the first (warm-up) epoch of each run excluded."""
    times = [r.epoch_seconds for r in rows if r.epoch > 1] or [r.epoch_seconds for r in rows]
    return float(np.mean(times)) if times else math.nan


def summarize(rows: Sequence[RunMetrics]) -> list[dict]:
    """One entry per (method, gamma, lambda) cell, averaged over seeds."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.method, r.gamma, r.lam), []).append(r)
    order = {m: i for i, m in enumerate(METHODS)}
    out = []
    fixed_time = {}
    for (method, g, l), rs in cells.items():
        if method == "fixed_region":
            fixed_time[(g, l)] = mean_epoch_seconds(rs)
    for (method, g, l), rs in sorted(cells.items(), key=lambda kv: (kv[0][1], kv[0][2], order[kv[0][0]])):
        seeds = sorted({r.seed for r in rs})
        last = [max((r for r in rs if r.seed == s), key=lambda r: r.epoch) for s in seeds]
        per_epoch = mean_epoch_seconds(rs)
        train_s = float(np.mean([r.cumulative_seconds for r in last]))
        pre_s = float(np.mean([r.preprocess_seconds for r in last]))
        ref = fixed_time.get((g, l))
        out.append({
            "method": method,
            "gamma": g,
            "lambda": l,
            "seeds": len(seeds),
            "epochs": max(r.epoch for r in rs),
            "mean_epoch_seconds": per_epoch,
            "train_seconds": train_s,
            "preprocess_seconds": pre_s,
            "total_seconds": train_s + pre_s,
            "final_val_acc": float(np.mean([r.val_acc for r in last])),
            "ratio_vs_fixed": per_epoch / ref if ref else math.nan,
        })
    return out


SUMMARY_FIELDS = ("method", "gamma", "lambda", "seeds", "epochs", "mean_epoch_seconds", "train_seconds",
                  "preprocess_seconds", "total_seconds", "final_val_acc", "ratio_vs_fixed")


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def format_summary(summary: Sequence[dict]) -> str:
    table = [list(SUMMARY_FIELDS)] + [[_fmt(s[k]) for k in SUMMARY_FIELDS] for s in summary]
    widths = [max(len(row[i]) for row in table) for i in range(len(SUMMARY_FIELDS))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in table]
    return "\n".join(lines) + "\n"


def write_summary(out_dir, summary: Sequence[dict]) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "summary.csv"
    txt_path = out_dir / "summary.txt"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for s in summary:
            w.writerow([_fmt(s[k]) for k in SUMMARY_FIELDS])
    txt_path.write_text(format_summary(summary))
    return csv_path, txt_path


def accuracy_at(rows: Sequence[RunMetrics], method: str, epoch: int, gamma=None, lam=None) -> list[float]:
    """Validation accuracies of every matching run at a given epoch (one value per run)."""
    return [
        r.val_acc for r in rows
        if r.method == method and r.epoch == epoch
        and (gamma is None or r.gamma == gamma) and (lam is None or r.lam == lam)
    ]
