# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``whtpack._kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def fwht_rows(double[:, ::1] a):
    cdef Py_ssize_t b = a.shape[0], n = a.shape[1]
    cdef Py_ssize_t r, h, i, j
    cdef double x, y
    with nogil:
        for r in range(b):
            h = 1
            while h < n:
                i = 0
                while i < n:
                    for j in range(i, i + h):
                        x = a[r, j]
                        y = a[r, j + h]
                        a[r, j] = x + y
                        a[r, j + h] = x - y
                    i += 2 * h
                h *= 2
    return np.asarray(a)


def max_pool_2d(double[:, ::1] a, Py_ssize_t ph, Py_ssize_t pw):
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    cdef Py_ssize_t oh = (h + ph - 1) // ph, ow = (w + pw - 1) // pw
    out_arr = np.empty((oh, ow), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, r, s, r1, s1
    cdef double m
    with nogil:
        for i in range(oh):
            r1 = min(h, (i + 1) * ph)
            for j in range(ow):
                s1 = min(w, (j + 1) * pw)
                m = a[i * ph, j * pw]
                for r in range(i * ph, r1):
                    for s in range(j * pw, s1):
                        if a[r, s] > m:
                            m = a[r, s]
                out[i, j] = m
    return out_arr


def im2col(real[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1
    dtype = np.float32 if real is float else np.float64
    cols_arr = np.zeros((n * oh * ow, c * k * k), dtype=dtype)
    cdef real[:, ::1] cols = cols_arr
    cdef Py_ssize_t b, y, xx, ch, i, j, row, col, sy, sx
    with nogil:
        for b in range(n):
            for y in range(oh):
                for xx in range(ow):
                    row = (b * oh + y) * ow + xx
                    col = 0
                    for ch in range(c):
                        for i in range(k):
                            sy = y + i - pad
                            for j in range(k):
                                sx = xx + j - pad
                                if 0 <= sy < h and 0 <= sx < w:
                                    cols[row, col] = x[b, ch, sy, sx]
                                col += 1
    return cols_arr


def col2im(real[:, ::1] cols, shape, Py_ssize_t k, Py_ssize_t pad):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1
    dtype = np.float32 if real is float else np.float64
    dx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, y, xx, ch, i, j, row, col, sy, sx
    with nogil:
        for b in range(n):
            for y in range(oh):
                for xx in range(ow):
                    row = (b * oh + y) * ow + xx
                    col = 0
                    for ch in range(c):
                        for i in range(k):
                            sy = y + i - pad
                            for j in range(k):
                                sx = xx + j - pad
                                if 0 <= sy < h and 0 <= sx < w:
                                    dx[b, ch, sy, sx] += cols[row, col]
                                col += 1
    return dx_arr


def maxpool2x2_forward(real[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t oh = x.shape[2] // 2, ow = x.shape[3] // 2
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n, c, oh, ow), dtype=dtype)
    idx_arr = np.empty((n, c, oh, ow), dtype=np.int8)
    cdef real[:, :, :, ::1] out = out_arr
    cdef cnp.int8_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, ch, i, j
    cdef real m, v
    cdef cnp.int8_t best
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        m = x[b, ch, 2 * i, 2 * j]
                        best = 0
                        v = x[b, ch, 2 * i, 2 * j + 1]
                        if v > m:
                            m = v
                            best = 1
                        v = x[b, ch, 2 * i + 1, 2 * j]
                        if v > m:
                            m = v
                            best = 2
                        v = x[b, ch, 2 * i + 1, 2 * j + 1]
                        if v > m:
                            m = v
                            best = 3
                        out[b, ch, i, j] = m
                        idx[b, ch, i, j] = best
    return out_arr, idx_arr


def maxpool2x2_backward(real[:, :, :, ::1] dout, cnp.int8_t[:, :, :, ::1] idx, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], oh = dout.shape[2], ow = dout.shape[3]
    dtype = np.float32 if real is float else np.float64
    dx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, ch, i, j
    cdef cnp.int8_t t
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        t = idx[b, ch, i, j]
                        dx[b, ch, 2 * i + (t >> 1), 2 * j + (t & 1)] = dout[b, ch, i, j]
    return dx_arr
