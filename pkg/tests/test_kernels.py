"""The compiled kernels and the pure-Python fallback must agree exactly."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advfuzz import _kernels_py, kernels
from advfuzz.corpus import bucket_mask
from advfuzz.harness import MAP_SIZE, Executor
from advfuzz.targets import get_target

try:
    _compiled = importlib.import_module("advfuzz._kernels")
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

IMPLS = [_kernels_py] + ([_compiled] if _compiled is not None else [])
needs_compiled = pytest.mark.skipif(_compiled is None, reason="extension not built")


def test_selected_implementation():
    assert kernels.IMPLEMENTATION in ("cython", "python")
    if _compiled is not None and os.environ.get("ADVFUZZ_PURE_PYTHON") != "1":
        assert kernels.IMPLEMENTATION == "cython"


def test_env_forces_fallback():
    code = "from advfuzz import kernels; print(kernels.IMPLEMENTATION)"
    env = dict(os.environ, ADVFUZZ_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.IMPLEMENTATION)
def test_class_mask_table_matches_bucket(impl):
    table = impl.class_mask_table()
    assert [int(v) for v in table] == [bucket_mask(c) for c in range(256)]


def _trace(impl, sites, n_loc=40):
    locs = np.random.default_rng(5).choice(MAP_SIZE, n_loc, replace=False)
    tr = impl.Tracer(locs, MAP_SIZE)
    tr.reset()
    for s in sites:
        tr.hit(s)
    order = np.argsort(tr.touched())
    return np.asarray(tr.touched())[order], np.asarray(tr.counts())[order], tr


@needs_compiled
@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 39), max_size=3000))
def test_tracer_parity(sites):
    e1, c1, t1 = _trace(_kernels_py, sites)
    e2, c2, t2 = _trace(_compiled, sites)
    assert np.array_equal(e1, e2) and np.array_equal(c1, c2)
    seen1 = np.zeros(MAP_SIZE, np.uint8)
    seen2 = np.zeros(MAP_SIZE, np.uint8)
    assert t1.new_bits(seen1) == t2.new_bits(seen2)
    assert t1.claim(seen1) == t2.claim(seen2)
    assert np.array_equal(seen1, seen2)
    assert t1.new_bits(seen1) == t2.new_bits(seen2) == 0


@needs_compiled
@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 255), st.integers(1, 255)), max_size=64, unique_by=lambda p: p[0]),
       st.binary(min_size=256, max_size=256))
def test_sparse_kernel_parity(pairs, seen_bytes):
    edges = np.array([p[0] for p in pairs], dtype=np.uint32)
    counts = np.array([p[1] for p in pairs], dtype=np.uint8)
    base = np.zeros(MAP_SIZE, np.uint8)
    base[:256] = np.frombuffer(seen_bytes, np.uint8)
    a, b = base.copy(), base.copy()
    assert _kernels_py.new_bits_sparse(edges, counts, a) == _compiled.new_bits_sparse(edges, counts, b)
    assert _kernels_py.claim_sparse(edges, counts, a) == _compiled.claim_sparse(edges, counts, b)
    assert np.array_equal(a, b)


def _new_bits_oracle(edges, counts, seen):
    result = 0
    for e, c in zip(edges, counts):
        m = bucket_mask(int(c))
        if m and not (seen[e] & m):
            result = max(result, 2 if seen[e] == 0 else 1)
    return result


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.IMPLEMENTATION)
def test_new_bits_oracle(impl, nprng):
    for _ in range(200):
        edges = nprng.choice(64, nprng.integers(0, 10), replace=False).astype(np.uint32)
        counts = nprng.integers(1, 256, len(edges)).astype(np.uint8)
        seen = np.zeros(MAP_SIZE, np.uint8)
        seen[:64] = nprng.integers(0, 256, 64) * (nprng.random(64) < 0.5)
        assert impl.new_bits_sparse(edges, counts, seen.copy()) == _new_bits_oracle(edges, counts, seen)


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(st.binary(max_size=80))
def test_goat_execution_parity(data):
    goat = get_target("goat")
    r1 = Executor(goat, tracer_cls=_kernels_py.Tracer).execute(data)
    r2 = Executor(goat, tracer_cls=_compiled.Tracer).execute(data)
    assert r1.coverage == r2.coverage
    assert (r1.outcome, r1.bug_id) == (r2.outcome, r2.bug_id)
