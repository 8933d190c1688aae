"""Compiled vs pure-Python kernels: trace recording, novelty check, and whole goat executions.

    python bench/bench_kernels.py [--execs N] [--repeat R]
"""

import argparse
import importlib
import random
import time

import numpy as np

from advfuzz import _kernels_py
from advfuzz.goat import SEEDS
from advfuzz.harness import MAP_SIZE, Executor
from advfuzz.mutators import havoc_mutate
from advfuzz.targets import get_target


def load_impls():
    impls = {"python": _kernels_py}
    try:
        impls["cython"] = importlib.import_module("advfuzz._kernels")
    except ImportError:
        print("compiled extension not built; only the fallback is measured")
    return impls


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_hits(impl, n, repeat):
    rng = np.random.default_rng(0)
    locations = rng.choice(MAP_SIZE, size=320, replace=False)
    sites = rng.integers(0, 320, size=n).tolist()
    tracer = impl.Tracer(locations, MAP_SIZE)

    def go():
        tracer.reset()
        hit = tracer.hit
        for s in sites:
            hit(s)

    return n / best_of(go, repeat)


def bench_new_bits(impl, n, repeat):
    rng = np.random.default_rng(1)
    tracer = impl.Tracer(rng.choice(MAP_SIZE, size=320, replace=False), MAP_SIZE)
    tracer.reset()
    for s in rng.integers(0, 320, size=2000).tolist():
        tracer.hit(s)
    seen = np.zeros(MAP_SIZE, dtype=np.uint8)
    tracer.claim(seen)

    def go():
        for _ in range(n):
            tracer.new_bits(seen)

    return n / best_of(go, repeat)


def make_inputs(n):
    rng = random.Random(2)
    return [havoc_mutate(rng.choice(SEEDS), rng, SEEDS) for _ in range(n)]


def bench_execs(impl, inputs, repeat):
    ex = Executor(get_target("goat"), tracer_cls=impl.Tracer)
    seen = np.zeros(MAP_SIZE, dtype=np.uint8)

    def go():
        for data in inputs:
            ex.run_raw(data)
            ex.tracer.new_bits(seen)

    return len(inputs) / best_of(go, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--execs", type=int, default=20000)
    ap.add_argument("--hits", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    inputs = make_inputs(args.execs)
    rows = []
    for name, impl in load_impls().items():
        rows.append((
            name,
            bench_hits(impl, args.hits, args.repeat),
            bench_new_bits(impl, 20000, args.repeat),
            bench_execs(impl, inputs, args.repeat),
        ))
    print(f"{'kernel':8} {'hits/s':>14} {'novelty/s':>14} {'goat execs/s':>14}")
    for name, h, nb, ex in rows:
        print(f"{name:8} {h:14,.0f} {nb:14,.0f} {ex:14,.0f}")
    if len(rows) == 2:
        py, cy = rows
        print(f"speedup  {cy[1] / py[1]:13.1f}x {cy[2] / py[2]:13.1f}x {cy[3] / py[3]:13.1f}x")


if __name__ == "__main__":
    main()
