# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batched Vec2DAG, parent bitmasks, acyclicity check."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, uint64_t, int64_t

cnp.import_array()


def vec_to_dag_batch(Z, int d):
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t B = z.shape[0]
    out = np.zeros((B, d, d), dtype=np.uint8)
    cdef uint8_t[:, :, ::1] A = out
    cdef Py_ssize_t b, i, j, k
    cdef double pi, pj
    with nogil:
        for b in range(B):
            k = d
            for i in range(d):
                pi = z[b, i]
                for j in range(i + 1, d):
                    if z[b, k] > 0:
                        pj = z[b, j]
                        if pi < pj:
                            A[b, i, j] = 1
                        elif pj < pi:
                            A[b, j, i] = 1
                    k += 1
    return out


def parent_masks_batch(Z, int d):
    if d > 64:
        raise ValueError("parent bitmasks require d <= 64")
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t B = z.shape[0]
    masks_arr = np.zeros((B, d), dtype=np.uint64)
    edges_arr = np.zeros(B, dtype=np.int64)
    cdef uint64_t[:, ::1] masks = masks_arr
    cdef int64_t[::1] edges = edges_arr
    cdef Py_ssize_t b, i, j, k
    cdef double pi, pj
    cdef int64_t m
    with nogil:
        for b in range(B):
            k = d
            m = 0
            for i in range(d):
                pi = z[b, i]
                for j in range(i + 1, d):
                    if z[b, k] > 0:
                        pj = z[b, j]
                        if pi < pj:
                            masks[b, j] |= (<uint64_t>1) << i
                            m += 1
                        elif pj < pi:
                            masks[b, i] |= (<uint64_t>1) << j
                            m += 1
                    k += 1
            edges[b] = m
    return masks_arr, edges_arr


def is_acyclic(A):
    cdef uint8_t[:, ::1] a = np.ascontiguousarray(np.asarray(A) != 0, dtype=np.uint8)
    cdef Py_ssize_t d = a.shape[0]
    cdef Py_ssize_t[::1] indeg = np.zeros(d, dtype=np.intp)
    cdef Py_ssize_t[::1] stack = np.zeros(d, dtype=np.intp)
    cdef Py_ssize_t top = 0, seen = 0, i, j
    for i in range(d):
        for j in range(d):
            if a[i, j]:
                indeg[j] += 1
    for j in range(d):
        if indeg[j] == 0:
            stack[top] = j
            top += 1
    while top > 0:
        top -= 1
        i = stack[top]
        seen += 1
        for j in range(d):
            if a[i, j]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    stack[top] = j
                    top += 1
    return seen == d
