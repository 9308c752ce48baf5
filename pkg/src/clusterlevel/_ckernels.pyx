# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sign-randomization kernels. See ``_pykernels`` for the reference."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


def sweep_counts(
    const signed char[:, ::1] flips,
    const Py_ssize_t[::1] cluster_of,
    Py_ssize_t r,
    const signed char[::1] start,
    const Py_ssize_t[::1] order,
    const Py_ssize_t[::1] stops,
    const long long[::1] thresholds,
):
    cdef Py_ssize_t B = flips.shape[0]
    cdef Py_ssize_t q = flips.shape[1]
    cdef Py_ssize_t n_stops = stops.shape[0]
    cdef Py_ssize_t b, j, k, t, pos
    cdef long long total
    cdef int *sums
    cdef const signed char *row
    counts = np.zeros(n_stops, dtype=np.int64)
    cdef long long[::1] out = counts

    if n_stops and stops[n_stops - 1] > order.shape[0]:
        raise ValueError("stop beyond the end of the sweep order")
    sums = <int *> malloc(r * sizeof(int))
    if sums == NULL:
        raise MemoryError()
    try:
        with nogil:
            for b in range(B):
                row = &flips[b, 0]
                for k in range(r):
                    sums[k] = 0
                for j in range(q):
                    sums[cluster_of[j]] += row[j] * start[j]
                pos = 0
                for t in range(n_stops):
                    while pos < stops[t]:
                        j = order[pos]
                        sums[cluster_of[j]] += 2 * row[j]
                        pos += 1
                    total = 0
                    for k in range(r):
                        total += sums[k] if sums[k] >= 0 else -sums[k]
                    if total >= thresholds[t]:
                        out[t] += 1
    finally:
        free(sums)
    return counts
