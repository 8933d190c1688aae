"""Pure-Python trace sink and bitmap kernels (fallback for ``_kernels``)."""

import time

import numpy as np

from advfuzz.errors import TargetTimeout

IMPLEMENTATION = "python"

CHECK_EVERY = 4096


def _class_mask(count: int) -> int:
    if count == 0:
        return 0
    if count <= 3:
        return 1 << (count - 1)
    if count < 8:
        return 8
    if count < 16:
        return 16
    if count < 32:
        return 32
    if count < 128:
        return 64
    return 128


_CLASS_MASK = [_class_mask(c) for c in range(256)]


def class_mask_table():
    return np.array(_CLASS_MASK, dtype=np.uint8)


class Tracer:
    """Per-execution edge recorder with saturating 8-bit counters."""

    __slots__ = ("hits", "_buf", "_touched", "_loc", "_prev", "_mask", "_count", "_deadline")

    def __init__(self, locations, map_size: int = 65536):
        if map_size <= 0 or map_size & (map_size - 1):
            raise ValueError("map_size must be a power of two")
        self.hits = np.zeros(map_size, dtype=np.uint8)
        # bytearray is much cheaper to index from Python than an ndarray
        self._buf = bytearray(map_size)
        self._touched = []
        self._loc = [int(v) for v in locations]
        self._mask = map_size - 1
        self._prev = 0
        self._count = 0
        self._deadline = 0.0

    @property
    def n_touched(self) -> int:
        return len(self._touched)

    def reset(self, deadline: float = 0.0) -> None:
        buf = self._buf
        hits = self.hits
        for e in self._touched:
            buf[e] = 0
            hits[e] = 0
        self._touched = []
        self._prev = 0
        self._count = 0
        self._deadline = deadline

    def hit(self, site: int) -> None:
        if site < 0:
            raise IndexError("instrumentation site out of range")
        cur = self._loc[site]
        edge = ((self._prev >> 1) ^ cur) & self._mask
        self._prev = cur
        buf = self._buf
        c = buf[edge]
        if c == 0:
            self._touched.append(edge)
            buf[edge] = 1
        elif c != 255:
            buf[edge] = c + 1
        self._count += 1
        if self._deadline and self._count % CHECK_EVERY == 0:
            if time.perf_counter() > self._deadline:
                raise TargetTimeout()

    def _sync(self) -> None:
        if self._touched:
            idx = np.array(self._touched, dtype=np.intp)
            self.hits[idx] = np.frombuffer(self._buf, dtype=np.uint8)[idx]

    def touched(self):
        self._sync()
        return np.array(self._touched, dtype=np.uint32)

    def counts(self):
        buf = self._buf
        return np.array([buf[e] for e in self._touched], dtype=np.uint8)

    def new_bits(self, seen) -> int:
        buf = self._buf
        ret = 0
        for e in self._touched:
            m = _CLASS_MASK[buf[e]]
            s = seen[e]
            if m & ~s:
                if s == 0:
                    return 2
                ret = 1
        return ret

    def claim(self, seen) -> int:
        buf = self._buf
        ret = 0
        for e in self._touched:
            m = _CLASS_MASK[buf[e]]
            s = int(seen[e])
            if m & ~s:
                if s == 0:
                    ret = 2
                elif ret == 0:
                    ret = 1
                seen[e] = s | m
        return ret


def new_bits_sparse(edges, counts, seen) -> int:
    ret = 0
    for e, c in zip(edges.tolist(), counts.tolist()):
        m = _CLASS_MASK[c]
        s = int(seen[e])
        if m & ~s:
            if s == 0:
                return 2
            ret = 1
    return ret


def claim_sparse(edges, counts, seen) -> int:
    ret = 0
    for e, c in zip(edges.tolist(), counts.tolist()):
        m = _CLASS_MASK[c]
        s = int(seen[e])
        if m & ~s:
            if s == 0:
                ret = 2
            elif ret == 0:
                ret = 1
            seen[e] = s | m
    return ret
