"""Byte inputs and coverage maps to fixed-width vectors, and back."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from advfuzz.errors import InputTooLarge
from advfuzz.harness import CoverageMap


@dataclass
class EncodedInput:
    values: np.ndarray
    original_len: int

    @property
    def width(self) -> int:
        return len(self.values)


def encode_input(data: bytes, width: int) -> EncodedInput:
    """Scale bytes into [0, 1] and zero-pad to ``width``."""
    if len(data) > width:
        raise InputTooLarge(f"input of {len(data)} bytes exceeds model width {width}")
    values = np.zeros(width, dtype=np.float64)
    values[: len(data)] = np.frombuffer(data, dtype=np.uint8) / 255.0
    return EncodedInput(values, len(data))


def encode_batch(inputs: Iterable[bytes], width: int) -> np.ndarray:
    inputs = list(inputs)
    out = np.zeros((len(inputs), width), dtype=np.float64)
    for i, data in enumerate(inputs):
        if len(data) > width:
            raise InputTooLarge(f"input of {len(data)} bytes exceeds model width {width}")
        out[i, : len(data)] = np.frombuffer(data, dtype=np.uint8)
    out /= 255.0
    return out


def decode_input(values, original_len: int) -> bytes:
    """Inverse of :func:`encode_input`; halves round up."""
    values = np.asarray(values, dtype=np.float64)[:original_len]
    scaled = np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5)
    return scaled.astype(np.uint8).tobytes()


@dataclass
class EdgeLabelSpace:
    groups: list[np.ndarray]
    edge_to_label: dict[int, int]

    @property
    def n_labels(self) -> int:
        return len(self.groups)

    def label_of(self, edge: int) -> int | None:
        return self.edge_to_label.get(int(edge))


def _edge_sets(corpus) -> list[np.ndarray]:
    out = []
    for item in corpus:
        if isinstance(item, CoverageMap):
            edges = item.edges[item.counts > 0]
        else:
            edges = np.asarray(item, dtype=np.uint32)
        out.append(np.unique(edges))
    return out


def build_label_space(corpus) -> EdgeLabelSpace:
    """Condense edges with identical activation across the corpus.

    ``corpus`` holds one CoverageMap (or array of hit edge ids) per entry.
    Groups are ordered by their smallest edge id.
    """
    sets = _edge_sets(corpus)
    if not sets:
        raise ValueError("label space needs at least one corpus entry")
    all_edges = np.unique(np.concatenate(sets)) if sets else np.zeros(0, np.uint32)
    if all_edges.size == 0:
        return EdgeLabelSpace([], {})
    col = {int(e): i for i, e in enumerate(all_edges)}
    active = np.zeros((len(sets), all_edges.size), dtype=bool)
    for row, edges in enumerate(sets):
        active[row, [col[int(e)] for e in edges]] = True
    packed = np.packbits(active, axis=0)
    by_pattern: dict[bytes, list[int]] = {}
    for j in range(all_edges.size):
        by_pattern.setdefault(packed[:, j].tobytes(), []).append(j)
    groups = sorted(
        (all_edges[idx].astype(np.uint32) for idx in by_pattern.values()),
        key=lambda g: int(g[0]),
    )
    edge_to_label = {int(e): label for label, g in enumerate(groups) for e in g}
    return EdgeLabelSpace(groups, edge_to_label)


def encode_coverage(cov, space: EdgeLabelSpace) -> np.ndarray:
    """Multi-hot label vector: label j set iff any edge of group j was hit."""
    out = np.zeros(space.n_labels, dtype=np.uint8)
    if isinstance(cov, CoverageMap):
        edges = cov.edges[cov.counts > 0]
    else:
        edges = np.asarray(cov)
    lookup = space.edge_to_label
    for e in edges.tolist():
        label = lookup.get(e)
        if label is not None:
            out[label] = 1
    return out


def label_matrix(corpus, space: EdgeLabelSpace) -> np.ndarray:
    return np.stack([encode_coverage(c, space) for c in corpus]) if len(corpus) else \
        np.zeros((0, space.n_labels), dtype=np.uint8)
