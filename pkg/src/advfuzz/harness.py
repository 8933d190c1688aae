"""Instrumented in-process execution of fuzz targets."""

from __future__ import annotations

import enum
import hashlib
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from advfuzz import kernels
from advfuzz.errors import TargetCrash, TargetTimeout

MAP_SIZE = 1 << 16
DEFAULT_TIMEOUT = 0.050

# Bug id reported when a target fails outside its seeded bug sites.
UNCLASSIFIED_BUG = 255


def edge_index(prev_loc: int, cur_loc: int, map_size: int = MAP_SIZE) -> int:
    return ((prev_loc >> 1) ^ cur_loc) % map_size


class Outcome(enum.Enum):
    OK = "ok"
    CRASH = "crash"
    TIMEOUT = "timeout"


class CoverageMap:
    """Edge hit counters of one execution.

    Stored sparsely (sorted edge ids plus counters); ``hits`` materialises the
    dense ``map_size`` array on demand.
    """

    __slots__ = ("edges", "counts", "map_size")

    def __init__(self, edges=None, counts=None, map_size: int = MAP_SIZE):
        if edges is None:
            edges = np.zeros(0, dtype=np.uint32)
            counts = np.zeros(0, dtype=np.uint8)
        edges = np.asarray(edges, dtype=np.uint32)
        counts = np.asarray(counts, dtype=np.uint8)
        order = np.argsort(edges, kind="stable")
        self.edges = np.ascontiguousarray(edges[order])
        self.counts = np.ascontiguousarray(counts[order])
        self.map_size = map_size

    @classmethod
    def from_dense(cls, hits) -> CoverageMap:
        hits = np.asarray(hits, dtype=np.uint8)
        edges = np.flatnonzero(hits).astype(np.uint32)
        return cls(edges, hits[edges], map_size=hits.size)

    @property
    def hits(self) -> np.ndarray:
        dense = np.zeros(self.map_size, dtype=np.uint8)
        dense[self.edges] = self.counts
        return dense

    def __len__(self) -> int:
        return len(self.edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoverageMap):
            return NotImplemented
        return (
            self.map_size == other.map_size
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.counts, other.counts)
        )

    def edge_set_hash(self) -> str:
        return hashlib.blake2b(self.edges.tobytes(), digest_size=8).hexdigest()

    def __repr__(self) -> str:
        return f"CoverageMap(<{len(self.edges)} edges>)"


@dataclass
class ExecutionResult:
    coverage: CoverageMap
    outcome: Outcome
    bug_id: int = 0
    exec_micros: int = 1

    @property
    def crashed(self) -> bool:
        return self.outcome is Outcome.CRASH


@dataclass
class BugInfo:
    bug_id: int
    description: str
    trigger: bytes


@dataclass
class FuzzTarget:
    """A deterministic in-process program.

    ``run(data, hit)`` parses ``data`` and calls ``hit(site)`` at every
    instrumentation point; it raises :class:`TargetCrash` at seeded bugs.
    ``locations`` maps site numbers to location ids.
    """

    name: str
    run: Callable[[bytes, Callable[[int], None]], object]
    bug_manifest: list[BugInfo]
    locations: np.ndarray
    seeds: list[bytes] = field(default_factory=list)

    @property
    def n_sites(self) -> int:
        return len(self.locations)


def assign_locations(n_sites: int, seed: int) -> np.ndarray:
    """Distinct pseudo-random location ids, one per site."""
    rng = np.random.default_rng(seed)
    return rng.choice(MAP_SIZE, size=n_sites, replace=False).astype(np.uint32)


class Executor:
    """Runs one target repeatedly against a reused trace buffer.

    Not thread-safe; use one executor per thread or process. ``tracer_cls``
    overrides the selected kernel implementation.
    """

    def __init__(self, target: FuzzTarget, timeout: float = DEFAULT_TIMEOUT, tracer_cls=None):
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        self.target = target
        self.timeout = timeout
        self.tracer = (tracer_cls or kernels.Tracer)(target.locations, MAP_SIZE)
        self._hit = self.tracer.hit
        self._run = target.run

    def run_raw(self, data: bytes) -> tuple[Outcome, int, int]:
        """Execute and leave coverage in ``self.tracer``.

        Returns ``(outcome, bug_id, exec_micros)``.
        """
        tracer = self.tracer
        start = time.perf_counter()
        tracer.reset(start + self.timeout)
        try:
            self._run(data, self._hit)
            outcome, bug = Outcome.OK, 0
        except TargetCrash as crash:
            outcome, bug = Outcome.CRASH, crash.bug_id
        except TargetTimeout:
            outcome, bug = Outcome.TIMEOUT, 0
        except Exception:  # noqa: BLE001 - any target failure is a crash
            outcome, bug = Outcome.CRASH, UNCLASSIFIED_BUG
        micros = int((time.perf_counter() - start) * 1e6)
        return outcome, bug, max(micros, 1)

    def snapshot(self) -> CoverageMap:
        return CoverageMap(self.tracer.touched(), self.tracer.counts())

    def execute(self, data: bytes) -> ExecutionResult:
        outcome, bug, micros = self.run_raw(data)
        return ExecutionResult(self.snapshot(), outcome, bug, micros)


def execute(target: FuzzTarget, data: bytes, timeout: float = DEFAULT_TIMEOUT) -> ExecutionResult:
    """One sandboxed run on a fresh coverage map."""
    return Executor(target, timeout).execute(data)
