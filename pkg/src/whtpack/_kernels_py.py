"""Pure-numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``WHTPACK_PURE=1`` is set. Signatures and results match the extension.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def fwht_rows(a):
    """In-place natural-order (Hadamard) butterfly along the last axis, unnormalized."""
    b, n = a.shape
    h = 1
    while h < n:
        v = a.reshape(b, n // (2 * h), 2, h)
        x = v[:, :, 0, :].copy()
        y = v[:, :, 1, :]
        v[:, :, 0, :] += y
        y *= -1.0
        y += x
        h *= 2
    return a


def max_pool_2d(a, ph, pw):
    h, w = a.shape
    oh = -(-h // ph)
    ow = -(-w // pw)
    if oh * ph != h or ow * pw != w:
        padded = np.full((oh * ph, ow * pw), -np.inf, dtype=a.dtype)
        padded[:h, :w] = a
        a = padded
    return a.reshape(oh, ph, ow, pw).max(axis=(1, 3))


def im2col(x, k, pad):
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    oh, ow = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * k * k)


def col2im(cols, shape, k, pad):
    n, c, h, w = shape
    oh = h + 2 * pad - k + 1
    ow = w + 2 * pad - k + 1
    d = cols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + oh, j:j + ow] += d[:, :, :, :, i, j]
    if pad:
        return np.ascontiguousarray(dxp[:, :, pad:pad + h, pad:pad + w])
    return dxp


def maxpool2x2_forward(x):
    n, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    v = x[:, :, :2 * oh, :2 * ow].reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5)
    v = v.reshape(n, c, oh, ow, 4)
    idx = v.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(v, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(dout, idx, h, w):
    n, c, oh, ow = dout.shape
    onehot = np.zeros((n, c, oh, ow, 4), dtype=dout.dtype)
    np.put_along_axis(onehot, idx[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = np.zeros((n, c, h, w), dtype=dout.dtype)
    dx[:, :, :2 * oh, :2 * ow] = (
        onehot.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * oh, 2 * ow)
    )
    return dx
