# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of ``_pykernels``. Same signatures, same accumulation order."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.int64_t i64


cdef inline Py_ssize_t _find(const i64[::1] keys, i64 key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = keys.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < keys.shape[0] and keys[lo] == key:
        return lo
    return -1


def neighbor_table(in_keys, out_coords, grid_shape, int ksize, int stride):
    cdef const i64[::1] keys = np.ascontiguousarray(in_keys, dtype=np.int64)
    cdef const i64[:, ::1] oc = np.ascontiguousarray(out_coords, dtype=np.int64)
    cdef i64 H = grid_shape[0], W = grid_shape[1], D = grid_shape[2]
    cdef int r = ksize // 2
    cdef Py_ssize_t M = oc.shape[0], K = ksize * ksize * ksize
    table_arr = np.full((M, K), -1, dtype=np.int64)
    cdef i64[:, ::1] table = table_arr
    cdef Py_ssize_t m, col
    cdef i64 b, bi, bj, bk, i, j, k
    cdef int dx, dy, dz
    if M == 0 or keys.shape[0] == 0:
        return table_arr
    with nogil:
        for m in range(M):
            b = oc[m, 0]
            bi = oc[m, 1] * stride
            bj = oc[m, 2] * stride
            bk = oc[m, 3] * stride
            col = 0
            for dx in range(-r, r + 1):
                for dy in range(-r, r + 1):
                    for dz in range(-r, r + 1):
                        i = bi + dx
                        j = bj + dy
                        k = bk + dz
                        if 0 <= i < H and 0 <= j < W and 0 <= k < D:
                            table[m, col] = _find(keys, ((b * H + i) * W + j) * D + k)
                        col += 1
    return table_arr


def gather_rows(feats, table):
    cdef const double[:, ::1] f = np.ascontiguousarray(feats, dtype=np.float64)
    cdef const i64[:, ::1] t = np.ascontiguousarray(table, dtype=np.int64)
    cdef Py_ssize_t M = t.shape[0], K = t.shape[1], C = f.shape[1]
    out_arr = np.zeros((M, K * C), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t m, k, c
    cdef i64 idx
    with nogil:
        for m in range(M):
            for k in range(K):
                idx = t[m, k]
                if idx >= 0:
                    for c in range(C):
                        out[m, k * C + c] = f[idx, c]
    return out_arr


def scatter_rows(cols, table, Py_ssize_t n_rows):
    cdef const double[:, ::1] g = np.ascontiguousarray(cols, dtype=np.float64)
    cdef const i64[:, ::1] t = np.ascontiguousarray(table, dtype=np.int64)
    cdef Py_ssize_t M = t.shape[0], K = t.shape[1]
    cdef Py_ssize_t C = g.shape[1] // K if K else 0
    out_arr = np.zeros((n_rows, C), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t m, k, c
    cdef i64 idx
    with nogil:
        # offset-major so every row sums its terms in offset order
        for k in range(K):
            for m in range(M):
                idx = t[m, k]
                if idx >= 0:
                    for c in range(C):
                        out[idx, c] += g[m, k * C + c]
    return out_arr


def segment_max(feats, seg, Py_ssize_t n_seg):
    cdef const double[:, ::1] f = np.ascontiguousarray(feats, dtype=np.float64)
    cdef const i64[::1] s = np.ascontiguousarray(seg, dtype=np.int64)
    cdef Py_ssize_t N = f.shape[0], C = f.shape[1]
    out_arr = np.zeros((n_seg, C), dtype=np.float64)
    arg_arr = np.full((n_seg, C), -1, dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef i64[:, ::1] arg = arg_arr
    cdef Py_ssize_t n, c
    cdef i64 q
    with nogil:
        for n in range(N):
            q = s[n]
            for c in range(C):
                if arg[q, c] < 0 or f[n, c] > out[q, c]:
                    out[q, c] = f[n, c]
                    arg[q, c] = n
    return out_arr, arg_arr


def zbuffer(pix, depth, Py_ssize_t n_pix):
    cdef const i64[::1] p = np.ascontiguousarray(pix, dtype=np.int64)
    cdef const double[::1] d = np.ascontiguousarray(depth, dtype=np.float64)
    winner_arr = np.full(n_pix, -1, dtype=np.int64)
    best_arr = np.full(n_pix, INFINITY, dtype=np.float64)
    cdef i64[::1] winner = winner_arr
    cdef double[::1] best = best_arr
    cdef Py_ssize_t n
    cdef i64 q
    with nogil:
        for n in range(p.shape[0]):
            q = p[n]
            if winner[q] < 0 or d[n] < best[q]:
                best[q] = d[n]
                winner[q] = n
    return winner_arr
