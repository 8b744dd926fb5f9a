"""Binary tensor container ("WHTC").

Layout: the 4 magic bytes ``WHTC``, three little-endian uint32 values
(height, width, channels) and then ``height*width*channels`` little-endian
float32 values in row-major, channel-minor order.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import DomainError, SizeError

MAGIC = b"WHTC"
_HEADER = struct.Struct("<4sIII")


def _as_hwc(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array)
    if array.ndim == 2:
        array = array[:, :, None]
    if array.ndim != 3:
        raise SizeError(f"expected a 2-D or 3-D array, got shape {array.shape}")
    return array


def write_tensor(stream: BinaryIO, array: np.ndarray) -> None:
    array = _as_hwc(array)
    h, w, c = array.shape
    stream.write(_HEADER.pack(MAGIC, h, w, c))
    stream.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def read_tensor(stream: BinaryIO) -> np.ndarray:
    """Read one tensor; returns a float32 array of shape (H, W, C)."""
    header = stream.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise SizeError("truncated WHTC header")
    magic, h, w, c = _HEADER.unpack(header)
    if magic != MAGIC:
        raise DomainError(f"bad magic {magic!r}, expected {MAGIC!r}")
    count = h * w * c
    payload = stream.read(4 * count)
    if len(payload) != 4 * count:
        raise SizeError(f"truncated WHTC payload: expected {count} floats")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)


def save_tensor(path, array: np.ndarray) -> None:
    with open(Path(path), "wb") as fh:
        write_tensor(fh, array)


def load_tensor(path) -> np.ndarray:
    with open(Path(path), "rb") as fh:
        return read_tensor(fh)
