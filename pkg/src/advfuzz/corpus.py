"""Seed queue, global coverage, crash triage and campaign statistics."""

from __future__ import annotations

import csv
import enum
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from advfuzz import kernels
from advfuzz.harness import MAP_SIZE, CoverageMap

STATS_INTERVAL = 5.0
STATS_COLUMNS = ["t_seconds", "execs", "execs_per_sec", "paths", "crashes", "edges", "max_depth"]

# Upper bounds of the hit-count classes; class k covers (bound[k-1], bound[k]].
_BUCKET_BOUNDS = (0, 1, 2, 3, 7, 15, 31, 127, 255)


def bucket(hit_count: int) -> int:
    """Hit-count class index in 0..8."""
    if not 0 <= hit_count <= 255:
        raise ValueError(f"hit count out of range: {hit_count}")
    for idx, upper in enumerate(_BUCKET_BOUNDS):
        if hit_count <= upper:
            return idx
    raise AssertionError("unreachable")


def bucket_mask(hit_count: int) -> int:
    """Virgin-bit mask of a hit count (0 for an unhit edge)."""
    cls = bucket(hit_count)
    return 0 if cls == 0 else 1 << (cls - 1)


class Source(enum.Enum):
    SEED = "seed"
    DETERMINISTIC = "det"
    HAVOC = "havoc"
    ADVERSARIAL = "adv"


@dataclass
class QueueEntry:
    id: int
    input: bytes
    depth: int
    parent_id: int | None
    source: Source
    discovered_at: float
    exec_micros: int
    edges: np.ndarray = field(repr=False)
    passed_det: bool = False
    fuzz_level: int = 0


class GlobalCoverage:
    """Bucketed hit classes seen so far, plus per-edge queue frequencies."""

    def __init__(self, map_size: int = MAP_SIZE):
        self.virgin_bits = np.zeros(map_size, dtype=np.uint8)
        self.frequency = np.zeros(map_size, dtype=np.int64)

    @property
    def edge_frequency(self) -> dict[int, int]:
        idx = np.flatnonzero(self.frequency)
        return {int(e): int(self.frequency[e]) for e in idx}

    def edges_covered(self) -> int:
        return int(np.count_nonzero(self.virgin_bits))

    def copy(self) -> GlobalCoverage:
        other = GlobalCoverage(self.virgin_bits.size)
        other.virgin_bits[:] = self.virgin_bits
        other.frequency[:] = self.frequency
        return other


def is_interesting(cov: CoverageMap, glob: GlobalCoverage) -> bool:
    return kernels.new_bits_sparse(cov.edges, cov.counts, glob.virgin_bits) > 0


def claim(cov: CoverageMap, glob: GlobalCoverage) -> int:
    """Record the map's hit classes; returns 2 for a new edge, 1 for a new class only."""
    return kernels.claim_sparse(cov.edges, cov.counts, glob.virgin_bits)


def rarest_edges(frequency, n: int) -> list[int]:
    if n < 1:
        raise ValueError("n must be >= 1")
    freq = np.asarray(frequency)
    idx = np.flatnonzero(freq > 0)
    # lexsort: last key is primary
    order = np.lexsort((idx, freq[idx]))
    return [int(e) for e in idx[order[:n]]]


@dataclass
class CampaignStats:
    execs_total: int = 0
    execs_per_sec: float = 0.0
    paths_found: int = 0
    unique_crashes: int = 0
    max_depth: int = 0
    edges_covered: int = 0
    timeline: list[tuple] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "execs_total": self.execs_total,
            "execs_per_sec": self.execs_per_sec,
            "paths_found": self.paths_found,
            "unique_crashes": self.unique_crashes,
            "max_depth": self.max_depth,
            "edges_covered": self.edges_covered,
        }


class Corpus:
    """Single-writer store for everything the fuzz loop learns.

    With ``out_dir`` set, queue entries and unique crashes are written under
    ``queue/`` and ``crashes/`` and a stats row lands in ``stats.csv`` every
    ``STATS_INTERVAL`` seconds.
    """

    def __init__(self, out_dir: str | Path | None = None, clock=time.monotonic):
        self.entries: list[QueueEntry] = []
        self.glob = GlobalCoverage()
        self.stats = CampaignStats()
        self.crash_keys: set[tuple[int, str]] = set()
        self.crash_bugs: set[int] = set()
        self._inputs: set[bytes] = set()
        self._clock = clock
        self.started = clock()
        self._next_row = STATS_INTERVAL
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self._stats_file = None
        self._stats_writer = None
        if self.out_dir is not None:
            (self.out_dir / "queue").mkdir(parents=True, exist_ok=True)
            (self.out_dir / "crashes").mkdir(parents=True, exist_ok=True)
            self._stats_file = open(self.out_dir / "stats.csv", "w", newline="")
            self._stats_writer = csv.writer(self._stats_file)
            self._stats_writer.writerow(STATS_COLUMNS)

    def __len__(self) -> int:
        return len(self.entries)

    def elapsed(self) -> float:
        return self._clock() - self.started

    def contains(self, data: bytes) -> bool:
        return data in self._inputs

    def queue_path(self, entry: QueueEntry) -> Path | None:
        if self.out_dir is None:
            return None
        return self.out_dir / "queue" / f"id_{entry.id:06d}_{entry.source.value}"

    def add_entry(self, data: bytes, parent: QueueEntry | None, source: Source,
                  coverage: CoverageMap, exec_micros: int = 1) -> QueueEntry | None:
        """Queue an interesting input and claim its coverage.

        Returns None (and changes nothing) when the exact bytes are queued
        already.
        """
        if data in self._inputs:
            return None
        entry = QueueEntry(
            id=len(self.entries),
            input=bytes(data),
            depth=0 if parent is None else parent.depth + 1,
            parent_id=None if parent is None else parent.id,
            source=source,
            discovered_at=self.elapsed(),
            exec_micros=exec_micros,
            edges=coverage.edges.copy(),
        )
        claim(coverage, self.glob)
        self.glob.frequency[entry.edges] += 1
        self.entries.append(entry)
        self._inputs.add(entry.input)
        self.stats.paths_found = len(self.entries)
        self.stats.max_depth = max(self.stats.max_depth, entry.depth)
        path = self.queue_path(entry)
        if path is not None:
            path.write_bytes(entry.input)
        return entry

    def record_crash(self, data: bytes, bug_id: int, coverage: CoverageMap) -> bool:
        key = (bug_id, coverage.edge_set_hash())
        if key in self.crash_keys:
            return False
        self.crash_keys.add(key)
        self.crash_bugs.add(bug_id)
        self.stats.unique_crashes = len(self.crash_keys)
        if self.out_dir is not None:
            (self.out_dir / "crashes" / f"bug{bug_id}_{key[1]}").write_bytes(data)
        return True

    def rarest_edges(self, n: int) -> list[int]:
        return rarest_edges(self.glob.frequency, n)

    def tick(self, execs: int, force: bool = False) -> None:
        """Refresh rate counters; append a timeline row when one is due."""
        now = self.elapsed()
        self.stats.execs_total = execs
        self.stats.execs_per_sec = execs / now if now > 0 else 0.0
        if force or now >= self._next_row:
            while self._next_row <= now:
                self._next_row += STATS_INTERVAL
            self.stats.edges_covered = self.glob.edges_covered()
            row = (
                round(now, 3),
                execs,
                round(self.stats.execs_per_sec, 2),
                self.stats.paths_found,
                self.stats.unique_crashes,
                self.stats.edges_covered,
                self.stats.max_depth,
            )
            self.stats.timeline.append(row)
            if self._stats_writer is not None:
                self._stats_writer.writerow(row)
                self._stats_file.flush()

    def close(self) -> None:
        if self._stats_file is not None:
            self._stats_file.close()
            self._stats_file = None
