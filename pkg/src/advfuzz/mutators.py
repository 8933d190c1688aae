"""Deterministic and havoc mutation stages in the AFL style."""

from __future__ import annotations

import random
import struct
from collections.abc import Iterator, Sequence

ARITH_MAX = 35
MAX_INPUT_LEN = 4096
HAVOC_STACK_POW2 = 7  # stack depth 1 << randrange(7): 1..64

INTERESTING_8 = (-128, -1, 0, 1, 16, 32, 64, 100, 127)
INTERESTING_16 = INTERESTING_8 + (-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767)
INTERESTING_32 = INTERESTING_16 + (
    -2147483648, -100663046, -32769, 32768, 65535, 65536, 100663045, 2147483647,
)

HAVOC_OPS = ("bitflip", "randbyte", "arith", "interesting", "insert", "delete", "overwrite", "splice")

_FMT = {(2, "<"): "<H", (2, ">"): ">H", (4, "<"): "<I", (4, ">"): ">I"}


def _pack(width: int, order: str, value: int) -> bytes:
    return struct.pack(_FMT[width, order], value & ((1 << (8 * width)) - 1))


def _unpack(width: int, order: str, chunk) -> int:
    return struct.unpack(_FMT[width, order], chunk)[0]


def deterministic_stage(data: bytes, buf: bytearray | None = None) -> Iterator[bytes]:
    """Every preprogrammed mutant of ``data``, in a fixed order.

    Walking bit flips (1/2/4 bits), byte flips (1/2/4 bytes), arithmetic
    +-1..35 on 8/16/32-bit words in both byte orders, then interesting
    values at every position. ``buf`` (a copy of ``data``) may be passed to
    observe the working buffer; it is restored after every mutant.
    """
    if not data:
        raise ValueError("deterministic stage needs a non-empty input")
    if buf is None:
        buf = bytearray(data)
    n = len(buf)
    nbits = n * 8

    for width in (1, 2, 4):
        for bit in range(nbits - width + 1):
            for k in range(width):
                b = bit + k
                buf[b >> 3] ^= 128 >> (b & 7)
            yield bytes(buf)
            for k in range(width):
                b = bit + k
                buf[b >> 3] ^= 128 >> (b & 7)

    for width in (1, 2, 4):
        for pos in range(n - width + 1):
            for k in range(width):
                buf[pos + k] ^= 0xFF
            yield bytes(buf)
            for k in range(width):
                buf[pos + k] ^= 0xFF

    for pos in range(n):
        orig = buf[pos]
        for delta in range(1, ARITH_MAX + 1):
            buf[pos] = (orig + delta) & 0xFF
            yield bytes(buf)
            buf[pos] = (orig - delta) & 0xFF
            yield bytes(buf)
        buf[pos] = orig

    for width in (2, 4):
        for pos in range(n - width + 1):
            orig = bytes(buf[pos:pos + width])
            le = _unpack(width, "<", orig)
            be = _unpack(width, ">", orig)
            for delta in range(1, ARITH_MAX + 1):
                for order, base in (("<", le), (">", be)):
                    for sign in (1, -1):
                        buf[pos:pos + width] = _pack(width, order, base + sign * delta)
                        yield bytes(buf)
            buf[pos:pos + width] = orig

    for pos in range(n):
        orig = buf[pos]
        for value in INTERESTING_8:
            buf[pos] = value & 0xFF
            yield bytes(buf)
        buf[pos] = orig

    for width, values in ((2, INTERESTING_16), (4, INTERESTING_32)):
        for pos in range(n - width + 1):
            orig = bytes(buf[pos:pos + width])
            for value in values:
                for order in ("<", ">"):
                    buf[pos:pos + width] = _pack(width, order, value)
                    yield bytes(buf)
            buf[pos:pos + width] = orig


def _rand_width(rng: random.Random, n: int) -> int:
    widths = [w for w in (1, 2, 4) if w <= n]
    return rng.choice(widths)


def havoc_mutate(data: bytes, rng: random.Random, splice_pool: Sequence[bytes] = (),
                 max_len: int = MAX_INPUT_LEN, ops: Sequence[str] = HAVOC_OPS) -> bytes:
    """One havoc mutant: a stack of 1..64 randomly chosen operations."""
    buf = bytearray(data[:max_len] or b"\x00")
    stack = 1 << rng.randrange(HAVOC_STACK_POW2)
    for _ in range(stack):
        op = rng.choice(ops)
        n = len(buf)
        if op == "bitflip":
            bit = rng.randrange(n * 8)
            buf[bit >> 3] ^= 128 >> (bit & 7)
        elif op == "randbyte":
            buf[rng.randrange(n)] ^= 1 + rng.randrange(255)
        elif op == "arith":
            width = _rand_width(rng, n)
            pos = rng.randrange(n - width + 1)
            delta = rng.randint(1, ARITH_MAX) * rng.choice((1, -1))
            if width == 1:
                buf[pos] = (buf[pos] + delta) & 0xFF
            else:
                order = rng.choice("<>")
                value = _unpack(width, order, buf[pos:pos + width])
                buf[pos:pos + width] = _pack(width, order, value + delta)
        elif op == "interesting":
            width = _rand_width(rng, n)
            pos = rng.randrange(n - width + 1)
            if width == 1:
                buf[pos] = rng.choice(INTERESTING_8) & 0xFF
            else:
                values = INTERESTING_16 if width == 2 else INTERESTING_32
                buf[pos:pos + width] = _pack(width, rng.choice("<>"), rng.choice(values))
        elif op == "insert":
            room = max_len - n
            if room <= 0:
                continue
            size = 1 + rng.randrange(min(room, max(1, n), 128))
            pos = rng.randrange(n + 1)
            if rng.random() < 0.75 and size <= n:
                src = rng.randrange(n - size + 1)
                block = bytes(buf[src:src + size])
            else:
                block = bytes([rng.randrange(256)]) * size
            buf[pos:pos] = block
        elif op == "delete":
            if n < 2:
                continue
            size = 1 + rng.randrange(min(n - 1, 128))
            pos = rng.randrange(n - size + 1)
            del buf[pos:pos + size]
        elif op == "overwrite":
            size = 1 + rng.randrange(min(n, 128))
            pos = rng.randrange(n - size + 1)
            if rng.random() < 0.75:
                src = rng.randrange(n - size + 1)
                buf[pos:pos + size] = bytes(buf[src:src + size])
            else:
                buf[pos:pos + size] = bytes([rng.randrange(256)]) * size
        elif op == "splice":
            if not splice_pool:
                continue
            other = splice_pool[rng.randrange(len(splice_pool))]
            if not other:
                continue
            cut = 1 + rng.randrange(n)
            start = rng.randrange(len(other))
            buf = buf[:cut] + bytearray(other[start:])
            del buf[max_len:]
        else:
            raise ValueError(f"unknown havoc op: {op}")
    return bytes(buf)


def havoc_stage(data: bytes, rng: random.Random, splice_pool: Sequence[bytes] = (),
                budget: int = 256, max_len: int = MAX_INPUT_LEN,
                ops: Sequence[str] = HAVOC_OPS) -> Iterator[bytes]:
    for _ in range(budget):
        yield havoc_mutate(data, rng, splice_pool, max_len, ops)


def deterministic_count(length: int) -> int:
    """Closed-form size of the deterministic stream for an input of ``length`` bytes."""
    def pos(width: int) -> int:
        return max(0, length - width + 1)

    bits = sum(max(0, 8 * length - w + 1) for w in (1, 2, 4))
    byteflips = pos(1) + pos(2) + pos(4)
    arith = 2 * ARITH_MAX * pos(1) + 4 * ARITH_MAX * (pos(2) + pos(4))
    interesting = (len(INTERESTING_8) * pos(1) + 2 * len(INTERESTING_16) * pos(2)
                   + 2 * len(INTERESTING_32) * pos(4))
    return bits + byteflips + arith + interesting
