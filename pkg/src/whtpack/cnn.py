"""A small from-scratch CNN: conv/ReLU/max-pool stacks, dense head, softmax cross-entropy, SGD.

Batches are ``(N, H, W, C)`` arrays; layers work internally in NCHW.
"""
from __future__ import annotations

import gc
import json
import math
import struct
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _backend
from .dataset import EpochPlan, epoch_batches
from .errors import ConfigError, DivergenceError, NumericError, ShapeError, SizeError
from .tensorio import read_tensor, write_tensor

KINDS = ("conv", "relu", "maxpool2x2", "flatten", "dense", "dropout", "softmax")
DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: Optional[int] = None
    kernel: Optional[int] = None
    units: Optional[int] = None
    keep: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv":
            if not self.filters or self.filters < 1:
                raise ShapeError("conv layers need filters >= 1")
            if not self.kernel or self.kernel % 2 == 0:
                raise ShapeError(f"conv kernel size must be odd, got {self.kernel}")
        if self.kind == "dense" and (not self.units or self.units < 1):
            raise ShapeError("dense layers need units >= 1")
        if self.kind == "dropout" and not (self.keep is not None and 0.0 < self.keep <= 1.0):
            raise ShapeError(f"dropout keep probability must lie in (0, 1], got {self.keep}")


def conv(filters, kernel):
    return LayerSpec("conv", filters=filters, kernel=kernel)


def dense(units):
    return LayerSpec("dense", units=units)


def dropout(keep):
    return LayerSpec("dropout", keep=keep)


RELU = LayerSpec("relu")
POOL = LayerSpec("maxpool2x2")
FLATTEN = LayerSpec("flatten")
SOFTMAX = LayerSpec("softmax")

PAPER_CONV = ((16, 9), (32, 7), (64, 5), (64, 5), (128, 3), (128, 3))
DESK_CONV = ((16, 5), (32, 3), (64, 3))


def conv_stack(convs, n_classes, head_units=128, keep=0.5):
    specs = []
    for filters, kernel in convs:
        specs += [conv(filters, kernel), RELU, POOL]
    specs += [FLATTEN, dense(head_units), RELU, dropout(keep), dense(n_classes), SOFTMAX]
    return specs


# -- layers ----------------------------------------------------------------

class Layer:
    params: list
    grads: list

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x, training, rng):
        raise NotImplementedError

    def backward(self, dout, need_dx=True):
        raise NotImplementedError


class Conv2D(Layer):
    """'same'-padded stride-1 convolution via im2col."""

    def __init__(self, cin, filters, kernel, rng, dtype):
        super().__init__()
        self.k = kernel
        self.pad = kernel // 2
        fan_in = cin * kernel * kernel
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), (filters, cin, kernel, kernel))
        self.params = [w.astype(dtype), np.zeros(filters, dtype=dtype)]

    def forward(self, x, training, rng):
        w, b = self.params
        n, _, h, wd = x.shape
        self.shape = x.shape
        self.cols = _backend.im2col(x, self.k, self.pad)
        out = self.cols @ w.reshape(w.shape[0], -1).T
        out += b
        return np.ascontiguousarray(out.reshape(n, h, wd, -1).transpose(0, 3, 1, 2))

    def backward(self, dout, need_dx=True):
        w, _ = self.params
        cout = w.shape[0]
        dmat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, cout)
        self.grads = [(dmat.T @ self.cols).reshape(w.shape), dmat.sum(axis=0)]
        if not need_dx:
            return None
        dcols = np.ascontiguousarray(dmat @ w.reshape(cout, -1))
        return _backend.col2im(dcols, self.shape, self.k, self.pad)


class ReLU(Layer):
    def forward(self, x, training, rng):
        self.mask = x > 0
        return x * self.mask

    def backward(self, dout, need_dx=True):
        return dout * self.mask


class MaxPool2x2(Layer):
    def forward(self, x, training, rng):
        self.hw = x.shape[2], x.shape[3]
        out, self.idx = _backend.maxpool2x2_forward(np.ascontiguousarray(x))
        return out

    def backward(self, dout, need_dx=True):
        return _backend.maxpool2x2_backward(np.ascontiguousarray(dout), self.idx, *self.hw)


class Flatten(Layer):
    def forward(self, x, training, rng):
        self.shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout, need_dx=True):
        return dout.reshape(self.shape)


class Dense(Layer):
    def __init__(self, fan_in, units, rng, dtype):
        super().__init__()
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, units))
        self.params = [w.astype(dtype), np.zeros(units, dtype=dtype)]

    def forward(self, x, training, rng):
        self.x = x
        return x @ self.params[0] + self.params[1]

    def backward(self, dout, need_dx=True):
        self.grads = [self.x.T @ dout, dout.sum(axis=0)]
        return dout @ self.params[0].T if need_dx else None


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1/keep`` during training."""

    def __init__(self, keep):
        super().__init__()
        self.keep = keep

    def forward(self, x, training, rng):
        if not training or self.keep >= 1.0:
            self.mask = None
            return x
        if rng is None:
            raise ConfigError("dropout in training mode needs a random generator")
        self.mask = (rng.random(x.shape) < self.keep).astype(x.dtype) / x.dtype.type(self.keep)
        return x * self.mask

    def backward(self, dout, need_dx=True):
        return dout if self.mask is None else dout * self.mask


class Softmax(Layer):
    def forward(self, x, training, rng):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def backward(self, dout, need_dx=True):
        raise NotImplementedError("softmax is differentiated jointly with the cross-entropy loss")


# -- model -----------------------------------------------------------------

class Model:
    """An ordered layer stack with weights, built for a fixed ``(H, W, C)`` input."""

    def __init__(self, specs: Sequence[LayerSpec], input_shape, seed: int = 0, precision: str = "f32"):
        if precision not in DTYPES:
            raise ConfigError(f"precision must be one of {tuple(DTYPES)}, got {precision!r}")
        self.specs = list(specs)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.precision = precision
        self.dtype = DTYPES[precision]
        self.layers = self._build(np.random.default_rng(seed))

    def _build(self, rng):
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ShapeError(f"input shape must be (H, W, C) with positive dims, got {self.input_shape}")
        if not self.specs or self.specs[-1].kind != "softmax":
            raise ShapeError("the last layer must be softmax")
        h, w, c = self.input_shape
        flat = None
        layers = []
        for i, spec in enumerate(self.specs):
            if spec.kind == "softmax" and i != len(self.specs) - 1:
                raise ShapeError("softmax may only appear as the last layer")
            if spec.kind in ("conv", "maxpool2x2", "flatten") and flat is not None:
                raise ShapeError(f"layer {i} ({spec.kind}) needs a spatial input")
            if spec.kind in ("dense", "softmax") and flat is None:
                raise ShapeError(f"layer {i} ({spec.kind}) needs a flattened input")
            if spec.kind == "conv":
                layers.append(Conv2D(c, spec.filters, spec.kernel, rng, self.dtype))
                c = spec.filters
            elif spec.kind == "maxpool2x2":
                h, w = h // 2, w // 2
                if h < 1 or w < 1:
                    raise ShapeError(f"input {self.input_shape} is too small: pooling at layer {i} leaves no pixels")
                layers.append(MaxPool2x2())
            elif spec.kind == "flatten":
                flat = h * w * c
                layers.append(Flatten())
            elif spec.kind == "dense":
                layers.append(Dense(flat, spec.units, rng, self.dtype))
                flat = spec.units
            elif spec.kind == "relu":
                layers.append(ReLU())
            elif spec.kind == "dropout":
                layers.append(Dropout(spec.keep))
            else:
                layers.append(Softmax())
        self.n_classes = flat
        return layers

    # parameters
    @property
    def params(self) -> list:
        return [p for layer in self.layers for p in layer.params]

    def grads(self) -> list:
        return [g for layer in self.layers for g in layer.grads]

    def get_weights(self):
        return [p.copy() for p in self.params]

    def set_weights(self, weights):
        params = self.params
        if len(weights) != len(params):
            raise ShapeError(f"expected {len(params)} arrays, got {len(weights)}")
        for p, w in zip(params, weights):
            if p.shape != np.shape(w):
                raise ShapeError(f"weight shape {np.shape(w)} does not match {p.shape}")
            p[...] = w

    # computation
    def _prepare(self, batch):
        x = np.asarray(batch)
        if x.ndim == 3 and self.input_shape[2] == 1:
            x = x[..., None]
        if x.ndim != 4 or tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"batch shape {x.shape} does not match model input {self.input_shape}")
        return np.ascontiguousarray(x.transpose(0, 3, 1, 2), dtype=self.dtype)

    def _run(self, batch, training, rng):
        x = self._prepare(batch)
        outputs = []
        for layer in self.layers[:-1]:
            x = layer.forward(x, training, rng)
            outputs.append(x)
        return x, outputs

    def forward(self, batch, training: bool = False, rng=None) -> np.ndarray:
        """Class probabilities, shape ``(N, K)``."""
        logits, _ = self._run(batch, training, rng)
        return self.layers[-1].forward(logits, training, rng)

    def loss_and_grad(self, batch, labels, rng=None, training: bool = True):
        """Mean softmax cross-entropy and its gradient for every parameter.

        Returns ``(loss, grads, probs)``; ``grads`` follows :attr:`params` order.
        """
        labels = np.asarray(labels, dtype=np.int64)
        n = np.shape(batch)[0]
        if labels.shape != (n,):
            raise ShapeError(f"labels shape {labels.shape} does not match batch size {n}")
        logits, outputs = self._run(batch, training, rng)
        z = logits - logits.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(z).sum(axis=1))
        logp = z - logsum[:, None]
        loss = float(-logp[np.arange(n), labels].mean())
        if not math.isfinite(loss):
            bad = next((i for i, o in enumerate(outputs) if not np.all(np.isfinite(o))), len(outputs))
            raise NumericError(f"non-finite loss (first non-finite output at layer {bad})", layer=bad)
        probs = np.exp(logp)
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        d /= n
        d = d.astype(self.dtype, copy=False)
        for i in range(len(self.layers) - 2, -1, -1):
            d = self.layers[i].backward(d, need_dx=i > 0)
        return loss, self.grads(), probs

    def predict(self, batch, batch_size: int = 64) -> np.ndarray:
        x = np.asarray(batch)
        return np.concatenate(
            [self.forward(x[i:i + batch_size]).argmax(axis=1) for i in range(0, len(x), batch_size)]
        )


def build_paper_model(input_shape, n_classes: int = 4, seed: int = 0, precision: str = "f32",
                      head_units: int = 128, keep: float = 0.5) -> Model:
    """Six conv layers (16@9x9, 32@7x7, 64@5x5 x2, 128@3x3 x2) each with ReLU and 2x2 pooling."""
    return Model(conv_stack(PAPER_CONV, n_classes, head_units, keep), input_shape, seed, precision)


def build_desk_model(input_shape, n_classes: int = 4, seed: int = 0, precision: str = "f32",
                     head_units: int = 128, keep: float = 0.5) -> Model:
    """Three conv layers (16@5x5, 32@3x3, 64@3x3); the reduced preset for quick runs."""
    return Model(conv_stack(DESK_CONV, n_classes, head_units, keep), input_shape, seed, precision)


ARCHITECTURES: dict[str, Callable[..., Model]] = {"paper": build_paper_model, "desk": build_desk_model}


# -- training --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    plan: EpochPlan
    learning_rate: float = 0.01
    seed: int = 0
    precision: str = "f32"

    def __post_init__(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ConfigError(f"learning rate must be a finite non-negative number, got {self.learning_rate}")
        if self.precision not in DTYPES:
            raise ConfigError(f"precision must be one of {tuple(DTYPES)}")

    @property
    def epochs(self):
        return self.plan.epochs


@dataclass
class EpochRecord:
    epoch: int
    train_acc: float
    val_acc: float
    loss: float
    epoch_seconds: float
    cumulative_seconds: float


def evaluate(model: Model, x, y, batch_size: int = 64) -> float:
    """Fraction of argmax-correct predictions with dropout disabled."""
    y = np.asarray(y)
    if len(y) == 0:
        raise SizeError("cannot evaluate on an empty set")
    return float(np.mean(model.predict(x, batch_size) == y))


def sgd_step(params, grads, lr):
    for p, g in zip(params, grads):
        p -= p.dtype.type(lr) * g


def train(model: Model, train_x, train_y, cfg: TrainConfig, val_x=None, val_y=None,
          callback: Optional[Callable[[EpochRecord], None]] = None) -> list[EpochRecord]:
    """Mini-batch SGD; returns one record per epoch.

    Epoch seconds cover the batch loop only, with the garbage collector
    paused as ``timeit`` does; validation is evaluated outside the timed
    region. When no validation set is given, the training accuracy is
    repeated in ``val_acc``.
    """
    train_x = np.asarray(train_x)
    train_y = np.asarray(train_y)
    if len(train_y) == 0:
        raise SizeError("training set is empty")
    plan = cfg.plan
    rng = np.random.default_rng([cfg.seed, 1])
    params = model.params
    records = []
    cumulative = 0.0
    for epoch in range(plan.epochs):
        batches = epoch_batches(len(train_y), plan, epoch)
        correct = 0
        losses = 0.0
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            t0 = time.perf_counter()
            for idx in batches:
                xb, yb = train_x[idx], train_y[idx]
                try:
                    loss, grads, probs = model.loss_and_grad(xb, yb, rng)
                except NumericError as exc:
                    raise DivergenceError(f"training diverged at epoch {epoch}: {exc}", layer=exc.layer) from exc
                sgd_step(params, grads, cfg.learning_rate)
                correct += int(np.sum(probs.argmax(axis=1) == yb))
                losses += loss * len(idx)
            seconds = time.perf_counter() - t0
        finally:
            if gc_was_enabled:
                gc.enable()
        cumulative += seconds
        train_acc = correct / plan.lam
        val_acc = evaluate(model, val_x, val_y) if val_y is not None and len(val_y) else train_acc
        rec = EpochRecord(epoch + 1, train_acc, val_acc, losses / plan.lam, seconds, cumulative)
        records.append(rec)
        if callback is not None:
            callback(rec)
    return records


# -- checkpoints -----------------------------------------------------------

CHECKPOINT_MAGIC = b"WHTM"


def _as3d(a):
    if a.ndim == 1:
        return a.reshape(-1, 1, 1)
    if a.ndim == 2:
        return a.reshape(a.shape[0], a.shape[1], 1)
    return a.reshape(a.shape[0], a.shape[1], -1)


def save_checkpoint(path, model: Model) -> None:
    """``WHTM`` magic, uint32 table length, JSON layer table, then one WHTC block per weight array."""
    table = {
        "input_shape": list(model.input_shape),
        "precision": model.precision,
        "layers": [{k: v for k, v in asdict(s).items() if v is not None} for s in model.specs],
        "arrays": [list(p.shape) for p in model.params],
    }
    blob = json.dumps(table, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in model.params:
            write_tensor(fh, _as3d(p))


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ShapeError(f"{path} is not a WHTM checkpoint")
        (n,) = struct.unpack("<I", fh.read(4))
        table = json.loads(fh.read(n).decode("utf-8"))
        specs = [LayerSpec(**d) for d in table["layers"]]
        model = Model(specs, table["input_shape"], precision=table["precision"])
        weights = [read_tensor(fh).reshape(shape) for shape in table["arrays"]]
    model.set_weights(weights)
    return model
