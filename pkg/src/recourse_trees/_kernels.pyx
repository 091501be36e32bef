# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for leaf fronts and front merging.

Values are exact integers (cost numerators and loss counts). Fronts are
emitted in ascending-loss order; ties keep the first candidate seen.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()

cdef int64_t INF = 0x7FFFFFFFFFFFFFFF


def row_fronts(const int64_t[:, ::1] cost, const int64_t[:, ::1] loss, Py_ssize_t max_loss):
    cdef Py_ssize_t R = cost.shape[0], A = cost.shape[1]
    cdef Py_ssize_t r, a, l, n = 0, pos
    cdef int64_t c, running
    best_arr = np.empty(max_loss + 1, dtype=np.int64)
    arg_arr = np.empty(max_loss + 1, dtype=np.int64)
    cdef int64_t[::1] best = best_arr
    cdef int64_t[::1] arg = arg_arr
    offsets_arr = np.zeros(R + 1, dtype=np.int64)
    cdef int64_t[::1] offsets = offsets_arr
    cap = R * (max_loss + 1)
    fc_arr = np.empty(cap, dtype=np.int64)
    fl_arr = np.empty(cap, dtype=np.int64)
    fa_arr = np.empty(cap, dtype=np.int64)
    cdef int64_t[::1] fc = fc_arr
    cdef int64_t[::1] fl = fl_arr
    cdef int64_t[::1] fa = fa_arr
    with nogil:
        for r in range(R):
            for l in range(max_loss + 1):
                best[l] = INF
            for a in range(A):
                l = loss[r, a]
                if l < 0 or l > max_loss:
                    continue
                c = cost[r, a]
                if c < best[l]:
                    best[l] = c
                    arg[l] = a
            running = INF
            for l in range(max_loss + 1):
                if best[l] < running:
                    running = best[l]
                    fc[n] = running
                    fl[n] = l
                    fa[n] = arg[l]
                    n += 1
            offsets[r + 1] = n
    return offsets_arr, fc_arr[:n].copy(), fl_arr[:n].copy(), fa_arr[:n].copy()


cdef inline void _merge(int64_t[::1] acc_cost, int64_t[::1] acc_tag, int64_t[::1] acc_i,
                        int64_t[::1] acc_j, const int64_t[::1] fc, const int64_t[::1] fl,
                        Py_ssize_t s1, Py_ssize_t e1, const int64_t[::1] gc,
                        const int64_t[::1] gl, Py_ssize_t s2, Py_ssize_t e2,
                        int64_t tag) noexcept nogil:
    cdef Py_ssize_t i, j, l, M = acc_cost.shape[0]
    cdef int64_t c
    for i in range(s1, e1):
        for j in range(s2, e2):
            l = fl[i] + gl[j]
            if l >= M:
                continue
            c = fc[i] + gc[j]
            if c < acc_cost[l]:
                acc_cost[l] = c
                acc_tag[l] = tag
                acc_i[l] = i
                acc_j[l] = j


def merge_into(int64_t[::1] acc_cost, int64_t[::1] acc_tag, int64_t[::1] acc_i,
               int64_t[::1] acc_j, const int64_t[::1] c1, const int64_t[::1] l1,
               const int64_t[::1] c2, const int64_t[::1] l2, int64_t tag):
    with nogil:
        _merge(acc_cost, acc_tag, acc_i, acc_j, c1, l1, 0, c1.shape[0],
               c2, l2, 0, c2.shape[0], tag)


def merge_pairs_into(int64_t[::1] acc_cost, int64_t[::1] acc_tag, int64_t[::1] acc_i,
                     int64_t[::1] acc_j, const int64_t[::1] offsets,
                     const int64_t[::1] fc, const int64_t[::1] fl,
                     const int64_t[::1] left_rows, const int64_t[::1] right_rows,
                     const int64_t[::1] tags):
    cdef Py_ssize_t k, a, b
    with nogil:
        for k in range(left_rows.shape[0]):
            a = left_rows[k]
            b = right_rows[k]
            _merge(acc_cost, acc_tag, acc_i, acc_j, fc, fl, offsets[a], offsets[a + 1],
                   fc, fl, offsets[b], offsets[b + 1], tags[k])


def push_into(int64_t[::1] acc_cost, int64_t[::1] acc_tag, int64_t[::1] acc_i,
              int64_t[::1] acc_j, const int64_t[::1] c, const int64_t[::1] l, int64_t tag):
    cdef Py_ssize_t i, M = acc_cost.shape[0]
    with nogil:
        for i in range(c.shape[0]):
            if l[i] < M and c[i] < acc_cost[l[i]]:
                acc_cost[l[i]] = c[i]
                acc_tag[l[i]] = tag
                acc_i[l[i]] = i
                acc_j[l[i]] = -1


def finalize(const int64_t[::1] acc_cost):
    cdef Py_ssize_t l, n = 0, M = acc_cost.shape[0]
    cdef int64_t running = INF
    out_arr = np.empty(M, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    with nogil:
        for l in range(M):
            if acc_cost[l] < running:
                running = acc_cost[l]
                out[n] = l
                n += 1
    return out_arr[:n].copy()
