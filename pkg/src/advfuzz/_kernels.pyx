# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled trace sink and bitmap kernels.

Mirrors ``_kernels_py`` function for function; ``advfuzz.kernels`` picks one
at import time.
"""

import numpy as np
cimport numpy as cnp
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC

from advfuzz.errors import TargetTimeout

cnp.import_array()

DEF CHECK_EVERY = 4096

cdef unsigned char[256] _CLASS_MASK

cdef void _init_tables():
    cdef int c
    for c in range(256):
        if c == 0:
            _CLASS_MASK[c] = 0
        elif c == 1:
            _CLASS_MASK[c] = 1
        elif c == 2:
            _CLASS_MASK[c] = 2
        elif c == 3:
            _CLASS_MASK[c] = 4
        elif c < 8:
            _CLASS_MASK[c] = 8
        elif c < 16:
            _CLASS_MASK[c] = 16
        elif c < 32:
            _CLASS_MASK[c] = 32
        elif c < 128:
            _CLASS_MASK[c] = 64
        else:
            _CLASS_MASK[c] = 128

_init_tables()

IMPLEMENTATION = "cython"


cdef inline double _now() nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return ts.tv_sec + ts.tv_nsec * 1e-9


cdef class Tracer:
    """Per-execution edge recorder with saturating 8-bit counters."""

    cdef readonly object hits
    cdef unsigned char[::1] _hits
    cdef unsigned int[::1] _touched
    cdef unsigned int[::1] _loc
    cdef readonly Py_ssize_t n_touched
    cdef unsigned int _prev
    cdef unsigned int _mask
    cdef Py_ssize_t _nloc
    cdef long _count
    cdef double _deadline

    def __init__(self, locations, Py_ssize_t map_size=65536):
        if map_size <= 0 or (map_size & (map_size - 1)) != 0:
            raise ValueError("map_size must be a power of two")
        self.hits = np.zeros(map_size, dtype=np.uint8)
        self._hits = self.hits
        self._touched = np.zeros(map_size, dtype=np.uint32)
        self._loc = np.ascontiguousarray(locations, dtype=np.uint32)
        self._nloc = self._loc.shape[0]
        self._mask = <unsigned int>(map_size - 1)
        self.n_touched = 0
        self._prev = 0
        self._count = 0
        self._deadline = 0.0

    def reset(self, double deadline=0.0):
        cdef Py_ssize_t i
        for i in range(self.n_touched):
            self._hits[self._touched[i]] = 0
        self.n_touched = 0
        self._prev = 0
        self._count = 0
        self._deadline = deadline

    def hit(self, Py_ssize_t site):
        cdef unsigned int cur
        cdef unsigned int edge
        cdef unsigned char c
        if site < 0 or site >= self._nloc:
            raise IndexError("instrumentation site out of range")
        cur = self._loc[site]
        edge = ((self._prev >> 1) ^ cur) & self._mask
        self._prev = cur
        c = self._hits[edge]
        if c == 0:
            self._touched[self.n_touched] = edge
            self.n_touched += 1
            self._hits[edge] = 1
        elif c != 255:
            self._hits[edge] = c + 1
        self._count += 1
        if self._deadline > 0.0 and (self._count % CHECK_EVERY) == 0:
            if _now() > self._deadline:
                raise TargetTimeout()

    def touched(self):
        """Touched edge ids in first-hit order (a copy)."""
        return np.asarray(self._touched[:self.n_touched]).copy()

    def counts(self):
        """Hit counters aligned with ``touched()``."""
        cdef Py_ssize_t i
        out = np.empty(self.n_touched, dtype=np.uint8)
        cdef unsigned char[::1] o = out
        for i in range(self.n_touched):
            o[i] = self._hits[self._touched[i]]
        return out

    def new_bits(self, unsigned char[::1] seen):
        cdef Py_ssize_t i
        cdef unsigned int e
        cdef unsigned char m
        cdef int ret = 0
        for i in range(self.n_touched):
            e = self._touched[i]
            m = _CLASS_MASK[self._hits[e]]
            if m & ~seen[e]:
                if seen[e] == 0:
                    return 2
                ret = 1
        return ret

    def claim(self, unsigned char[::1] seen):
        cdef Py_ssize_t i
        cdef unsigned int e
        cdef unsigned char m
        cdef int ret = 0
        for i in range(self.n_touched):
            e = self._touched[i]
            m = _CLASS_MASK[self._hits[e]]
            if m & ~seen[e]:
                if seen[e] == 0:
                    ret = 2
                elif ret == 0:
                    ret = 1
                seen[e] |= m
        return ret


def new_bits_sparse(unsigned int[::1] edges, unsigned char[::1] counts,
                    unsigned char[::1] seen):
    cdef Py_ssize_t i
    cdef unsigned int e
    cdef unsigned char m
    cdef int ret = 0
    for i in range(edges.shape[0]):
        e = edges[i]
        m = _CLASS_MASK[counts[i]]
        if m & ~seen[e]:
            if seen[e] == 0:
                return 2
            ret = 1
    return ret


def claim_sparse(unsigned int[::1] edges, unsigned char[::1] counts,
                 unsigned char[::1] seen):
    cdef Py_ssize_t i
    cdef unsigned int e
    cdef unsigned char m
    cdef int ret = 0
    for i in range(edges.shape[0]):
        e = edges[i]
        m = _CLASS_MASK[counts[i]]
        if m & ~seen[e]:
            if seen[e] == 0:
                ret = 2
            elif ret == 0:
                ret = 1
            seen[e] |= m
    return ret


def class_mask_table():
    cdef int c
    out = np.empty(256, dtype=np.uint8)
    for c in range(256):
        out[c] = _CLASS_MASK[c]
    return out
