# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scans for the line processes and the counter-based hash."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t mix64(uint64_t x) nogil:
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL
    return x ^ (x >> 31)


def block_uniforms(cnp.uint64_t[:] keys, Py_ssize_t start, Py_ssize_t count):
    cdef Py_ssize_t r, i, nr = keys.shape[0]
    out = np.empty((nr, count), dtype=np.float64)
    cdef double[:, :] o = out
    cdef uint64_t h
    with nogil:
        for r in range(nr):
            for i in range(count):
                h = mix64(keys[r] + <uint64_t>(start + i + 1) * GOLDEN)
                o[r, i] = (<double>(h >> 12) + 0.5) * 2.220446049250313e-16
    return out


def firework_scan(cnp.int64_t[:, :] rt, cnp.uint8_t[:] start, int64_t horizon):
    """Frontier recursion per row; returns (max activated index, activated count)."""
    cdef Py_ssize_t r, nr = rt.shape[0]
    cdef int64_t i, reach, cand
    maxidx = np.zeros(nr, dtype=np.int64)
    count = np.zeros(nr, dtype=np.int64)
    cdef cnp.int64_t[:] mx = maxidx
    cdef cnp.int64_t[:] ct = count
    with nogil:
        for r in range(nr):
            if not start[r]:
                continue
            reach = rt[r, 0]
            i = 1
            while i <= reach and reach < horizon:
                cand = i + rt[r, i]
                if cand > reach:
                    reach = cand
                i += 1
            if reach > horizon:
                reach = horizon
            mx[r] = reach
            ct[r] = reach + 1
    return maxidx, count


def reverse_scan(cnp.int64_t[:, :] rt, int64_t horizon, int64_t max_radius):
    """Gap recursion per row; returns (last active index, next gap, activated count).

    max_radius < 0 means unbounded; otherwise a gap beyond it ends the row.
    """
    cdef Py_ssize_t r, nr = rt.shape[0]
    cdef int64_t x, g, last, c
    lasts = np.zeros(nr, dtype=np.int64)
    gaps = np.zeros(nr, dtype=np.int64)
    count = np.zeros(nr, dtype=np.int64)
    cdef cnp.int64_t[:] ls = lasts
    cdef cnp.int64_t[:] gs = gaps
    cdef cnp.int64_t[:] ct = count
    with nogil:
        for r in range(nr):
            g = 1
            last = 0
            c = 1
            x = 1
            while x <= horizon:
                if max_radius >= 0 and g > max_radius:
                    g += horizon - x + 1
                    break
                if rt[r, x] >= g:
                    last = x
                    c += 1
                    g = 1
                else:
                    g += 1
                x += 1
            ls[r] = last
            gs[r] = g
            ct[r] = c
    return lasts, gaps, count
