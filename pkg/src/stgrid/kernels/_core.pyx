# Compiled hot kernels. Keep numerically identical to _pure.py:
# same per-element accumulation order (bias first, then n, u, v ascending,
# zero weights skipped), 64-bit accumulation throughout.

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "cython"


def cross_correlate(double[:, :, ::1] x, double[:, :, :, ::1] weights, double[::1] bias):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t kh = weights.shape[2], kw = weights.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out_arr = np.empty((c, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t m, n, u, v, i, j, ii, jj
    cdef double wt, acc

    with nogil:
        for m in range(c):
            for i in range(h):
                for j in range(w):
                    acc = bias[m]
                    for n in range(c):
                        for u in range(kh):
                            ii = i + u - ph
                            if ii < 0 or ii >= h:
                                continue
                            for v in range(kw):
                                jj = j + v - pw
                                if jj < 0 or jj >= w:
                                    continue
                                wt = weights[n, m, u, v]
                                if wt != 0.0:
                                    acc += wt * x[n, ii, jj]
                    out[m, i, j] = acc
    return out_arr


def normalize_channels(double[:, :, ::1] phi):
    cdef Py_ssize_t c = phi.shape[0], h = phi.shape[1], w = phi.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out_arr = np.empty((c, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t m, i, j
    cdef double s

    with nogil:
        for i in range(h):
            for j in range(w):
                s = 0.0
                for m in range(c):
                    s += phi[m, i, j]
                for m in range(c):
                    out[m, i, j] = phi[m, i, j] / s
    return out_arr


def rollout_costs(double[:, ::1] cost_map, long[:, :, ::1] vels, Py_ssize_t start_row, Py_ssize_t start_col):
    cdef Py_ssize_t h = cost_map.shape[0], w = cost_map.shape[1]
    cdef Py_ssize_t n = vels.shape[0], t = vels.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t s, step, r, c
    cdef double total

    with nogil:
        for s in range(n):
            r = start_row
            c = start_col
            total = cost_map[r, c]
            for step in range(t):
                r += vels[s, step, 0]
                if r < 0:
                    r = 0
                elif r >= h:
                    r = h - 1
                c += vels[s, step, 1]
                if c < 0:
                    c = 0
                elif c >= w:
                    c = w - 1
                total += cost_map[r, c]
            out[s] = total / <double>(t + 1)
    return out_arr
