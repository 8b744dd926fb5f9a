"""Labeled image datasets: class-per-directory loading, synthetic generation, epoch plans."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import ConfigError, SizeError
from .transform import is_power_of_two

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm")
SENSOR_NOISE = 0.015

# name, shape family, blob count range, length range and width range (fractions of image size)
CLASS_FAMILIES = (
    ("small_rocks", (12, 20), (0.025, 0.045), None),
    ("large_rocks", (2, 4), (0.10, 0.16), None),
    ("small_wood", (6, 10), (0.08, 0.14), (0.012, 0.022)),
    ("large_wood", (1, 3), (0.30, 0.45), (0.035, 0.055)),
    ("pebbles", (30, 45), (0.012, 0.02), None),
    ("boulders", (1, 1), (0.22, 0.30), None),
    ("twigs", (14, 22), (0.05, 0.08), (0.008, 0.012)),
    ("logs", (1, 1), (0.55, 0.70), (0.07, 0.09)),
)


@dataclass(frozen=True)
class LabeledImage:
    image: np.ndarray  # (H, W, 3) float64 in [0, 1]
    label: int
    source_id: str


@dataclass(frozen=True)
class DatasetConfig:
    root: str
    classes: Optional[Sequence[str]] = None
    working_size: tuple[int, int] = (256, 256)
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        h, w = self.working_size
        if not (is_power_of_two(h) and is_power_of_two(w)):
            raise ConfigError(f"working size must be powers of two, got {h}x{w}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.classes is not None and not list(self.classes):
            raise ConfigError("class list must not be empty")


@dataclass(frozen=True)
class EpochPlan:
    lam: int  # samples drawn per epoch
    gamma: int  # batch size
    epochs: int = 1
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.gamma < 1 or self.lam < self.gamma:
            raise ConfigError(f"need lambda >= gamma >= 1, got lambda={self.lam}, gamma={self.gamma}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(self.lam / self.gamma)


def read_image(path, size: tuple[int, int]) -> np.ndarray:
    """Decode a PNG/PPM file, stretch it to ``size`` (H, W) bilinearly and scale to [0, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        h, w = size
        if rgb.size != (w, h):
            rgb = rgb.resize((w, h), Image.BILINEAR)
        return np.asarray(rgb, dtype=np.float64) / 255.0


def discover_classes(root) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset root {root} is not a directory")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise ConfigError(f"no class directories under {root}")
    return classes


def load_images(cfg: DatasetConfig) -> list[LabeledImage]:
    """Load every image of the tree, in class then filename order."""
    root = Path(cfg.root)
    classes = list(cfg.classes) if cfg.classes is not None else discover_classes(root)
    items = []
    for label, name in enumerate(classes):
        cdir = root / name
        if not cdir.is_dir():
            raise ConfigError(f"missing class directory {cdir}")
        count = 0
        for path in sorted(cdir.iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                img = read_image(path, cfg.working_size)
            except (UnidentifiedImageError, OSError, ValueError) as exc:
                log.warning("skipping undecodable image %s: %s", path, exc)
                continue
            items.append(LabeledImage(img, label, f"{name}/{path.name}"))
            count += 1
        if count == 0:
            raise ConfigError(f"class {name!r} has no decodable images")
    return items


def split_dataset(items: Sequence[LabeledImage], val_fraction: float, seed: int):
    """Stratified deterministic train/validation split."""
    rng = np.random.default_rng(seed)
    train, val = [], []
    for label in sorted({it.label for it in items}):
        members = [it for it in items if it.label == label]
        order = rng.permutation(len(members))
        n_val = int(round(len(members) * val_fraction))
        if len(members) > 1:
            n_val = min(max(n_val, 1), len(members) - 1)
        val_idx = set(order[:n_val].tolist())
        for i, it in enumerate(members):
            (val if i in val_idx else train).append(it)
    return train, val


def load_dataset(cfg: DatasetConfig):
    """Returns ``(train, validation)`` lists of :class:`LabeledImage`."""
    return split_dataset(load_images(cfg), cfg.val_fraction, cfg.seed)


def stack(items: Sequence[LabeledImage]):
    if not items:
        raise SizeError("no images to stack")
    x = np.stack([it.image for it in items])
    y = np.array([it.label for it in items], dtype=np.int64)
    return x, y


# -- epoch planning ---------------------------------------------------------

def epoch_batches(n_train: int, plan: EpochPlan, epoch: int) -> list[np.ndarray]:
    """Index batches for one epoch: ``lam`` draws, reshuffled per epoch, wrapping around."""
    if n_train < 1:
        raise SizeError("training set is empty")
    rng = np.random.default_rng([plan.shuffle_seed, epoch])
    reps = math.ceil(plan.lam / n_train)
    order = np.concatenate([rng.permutation(n_train) for _ in range(reps)])[: plan.lam]
    return [order[i:i + plan.gamma] for i in range(0, plan.lam, plan.gamma)]


def plan_epochs(n_train: int, plan: EpochPlan) -> Iterator[list[np.ndarray]]:
    """Yield the batch list of each epoch in turn."""
    if n_train < 1:
        raise SizeError("training set is empty")
    for epoch in range(plan.epochs):
        yield epoch_batches(n_train, plan, epoch)


# -- synthetic data --------------------------------------------------------

def _blob_layer(rng, size, count, length, width, elongated):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    layer = np.zeros((size, size))
    for _ in range(count):
        cy, cx = rng.uniform(0.05, 0.95, 2) * size
        a = rng.uniform(*length) * size
        b = rng.uniform(*width) * size if elongated else a * rng.uniform(0.75, 1.0)
        theta = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = (dx * np.cos(theta) + dy * np.sin(theta)) / (a if elongated else a)
        v = (-dx * np.sin(theta) + dy * np.cos(theta)) / b
        d = np.sqrt(u * u + v * v)
        layer = np.maximum(layer, np.clip(1.5 - d, 0.0, 1.0) * rng.uniform(0.7, 1.0))
    return layer


def render_texture(rng, size: int, family, variant: str = "textures", label: int = 0) -> np.ndarray:
    """Render one (size, size, 3) image in [0, 1] for a class family."""
    _, counts, length, width = family
    elongated = width is not None
    count = int(rng.integers(counts[0], counts[1] + 1))
    layer = _blob_layer(rng, size, count, length, width or length, elongated)
    cast = np.array([0.22, 0.42, 0.38]) + rng.uniform(-0.03, 0.03, 3)
    if variant == "easy":
        base = np.full(3, 0.5) + rng.uniform(-0.01, 0.01)
        delta = -0.35 if label == 0 else 0.35
        img = base[None, None, :] + delta * layer[:, :, None]
    else:
        yy = np.linspace(-1.0, 1.0, size)[:, None]
        haze = 0.06 * yy * rng.uniform(-1, 1) + 0.04 * rng.uniform(-1, 1, (1, size))
        tone = rng.uniform(0.55, 0.75)
        contrast = rng.uniform(0.08, 0.14)
        lum = tone + contrast * (layer - 0.5 * layer.mean()) + haze
        img = lum[:, :, None] * cast[None, None, :] / cast.mean()
        img = ndimage.gaussian_filter(img, sigma=(size / 96.0, size / 96.0, 0))
        # marine snow: sparse bright particles in front of the scene
        n_snow = size * size // 400
        ys, xs = rng.integers(0, size, (2, n_snow))
        img[ys, xs, :] += rng.uniform(0.1, 0.3, (n_snow, 1))
    img = img + rng.normal(0.0, SENSOR_NOISE if variant == "textures" else 0.008, img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_synthetic(out, classes: int = 4, per_class: int = 50, size: int = 256, seed: int = 0,
                       variant: str = "textures") -> list[Path]:
    """Write a class-per-directory PNG tree and return the written paths.

    ``variant="textures"`` renders blob families mimicking small/large rocks
    and wood branches under a blue-green cast; ``variant="easy"`` renders two
    classes of dark versus bright blobs separable on mean intensity.
    """
    if variant not in ("textures", "easy"):
        raise ConfigError(f"unknown synthetic variant {variant!r}")
    if variant == "easy" and classes != 2:
        raise ConfigError("the easy variant has exactly 2 classes")
    if not 2 <= classes <= len(CLASS_FAMILIES):
        raise ConfigError(f"classes must be in 2..{len(CLASS_FAMILIES)}, got {classes}")
    if per_class < 4:
        raise ConfigError(f"per_class must be >= 4, got {per_class}")
    if not is_power_of_two(size):
        raise ConfigError(f"size must be a power of two, got {size}")
    out = Path(out)
    names = ["dark", "bright"] if variant == "easy" else [f[0] for f in CLASS_FAMILIES[:classes]]
    written = []
    for label, name in enumerate(names):
        cdir = out / name
        cdir.mkdir(parents=True, exist_ok=True)
        family = CLASS_FAMILIES[1] if variant == "easy" else CLASS_FAMILIES[label]
        for i in range(per_class):
            rng = np.random.default_rng([seed, label, i])
            img = render_texture(rng, size, family, variant, label)
            path = cdir / f"{name}_{i:04d}.png"
            Image.fromarray(np.round(img * 255.0).astype(np.uint8), "RGB").save(path, optimize=False)
            written.append(path)
    return written
