"""Saliency-map input crafting against the coverage surrogate.

The attack raises one target label's logit by nudging the most salient byte
positions of a seed upward, never touching positions past the seed's
length. FGSM is kept only as a contrast baseline for footprint measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from advfuzz.codec import EdgeLabelSpace, decode_input, encode_batch, encode_input, label_matrix
from advfuzz.corpus import rarest_edges
from advfuzz.surrogate import SurrogateModel, forward, input_gradient, predict_proba


@dataclass
class AttackConfig:
    theta: float = 0.25
    max_iters: int = 200
    n_targets: int = 50
    success_threshold: float = 0.9
    features_per_iter: int = 1

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must be in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.5 <= self.success_threshold < 1.0:
            raise ValueError("success_threshold must be in [0.5, 1)")
        if self.features_per_iter < 1:
            raise ValueError("features_per_iter must be >= 1")
        if self.n_targets < 1:
            raise ValueError("n_targets must be >= 1")


@dataclass
class SaliencyMap:
    scores: np.ndarray
    masked_len: int

    def best(self, k: int = 1) -> np.ndarray:
        """Indices of the ``k`` highest positive scores, best first."""
        positive = np.flatnonzero(self.scores > 0.0)
        if positive.size == 0:
            return positive
        order = np.argsort(-self.scores[positive], kind="stable")
        return positive[order[:k]]


def saliency(gradient, masked_len: int, direction: str = "increase") -> SaliencyMap:
    """Positive partials over the real input prefix; zero elsewhere."""
    if direction != "increase":
        raise ValueError("only the increase direction is supported")
    gradient = np.asarray(gradient, dtype=np.float64)
    if masked_len > len(gradient):
        raise ValueError("masked_len exceeds gradient length")
    scores = np.zeros_like(gradient)
    head = gradient[:masked_len]
    scores[:masked_len] = np.where(head > 0.0, head, 0.0)
    return SaliencyMap(scores, masked_len)


@dataclass
class AttackResult:
    status: str  # "success" | "exhausted" | "stalled"
    candidate: bytes | None
    iters: int
    probability: float
    modified: int = 0

    @property
    def success(self) -> bool:
        return self.status == "success"


def _target_prob(model: SurrogateModel, x: np.ndarray, label: int) -> float:
    logit = forward(model, x)[0][label]
    return 1.0 / (1.0 + math.exp(-logit)) if logit > -700 else 0.0


def jsma_attack(model: SurrogateModel, seed: bytes, target_label: int, cfg: AttackConfig) -> AttackResult:
    if not seed:
        raise ValueError("seed must be non-empty")
    if not 0 <= target_label < model.n_labels:
        raise IndexError(f"target label {target_label} outside 0..{model.n_labels - 1}")
    enc = encode_input(seed, model.width)
    x = enc.values.copy()
    length = enc.original_len
    frozen = np.zeros(model.width, dtype=bool)
    frozen[x >= 1.0] = True

    prob = _target_prob(model, x, target_label)
    best_x, best_prob = x.copy(), prob
    for it in range(cfg.max_iters + 1):
        if prob > cfg.success_threshold:
            cand = decode_input(x, length)
            return AttackResult("success", cand, it, prob, _changed(seed, cand))
        if it == cfg.max_iters:
            break
        grad = input_gradient(model, x, target_label)
        grad[frozen] = 0.0
        smap = saliency(grad, length)
        picks = smap.best(cfg.features_per_iter)
        if picks.size == 0:
            cand = decode_input(best_x, length)
            return AttackResult("stalled", cand, it, best_prob, _changed(seed, cand))
        x[picks] = np.minimum(x[picks] + cfg.theta, 1.0)
        frozen[picks[x[picks] >= 1.0]] = True
        prob = _target_prob(model, x, target_label)
        if prob > best_prob:
            best_x, best_prob = x.copy(), prob
    cand = decode_input(best_x, length)
    return AttackResult("exhausted", cand, cfg.max_iters, best_prob, _changed(seed, cand))


def _changed(a: bytes, b: bytes) -> int:
    return sum(1 for p, q in zip(a, b) if p != q)


def fgsm_attack(model: SurrogateModel, seed: bytes, target_label: int, epsilon: float) -> bytes:
    """One signed-gradient step over the whole padded width."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    enc = encode_input(seed, model.width)
    grad = input_gradient(model, enc.values, target_label)
    adv = np.clip(enc.values + epsilon * np.sign(grad), 0.0, 1.0)
    return decode_input(adv, model.width)


def footprint(seed: bytes, candidate: bytes, width: int) -> float:
    """Fraction of the padded width at which ``candidate`` differs from ``seed``."""
    a = np.zeros(width, dtype=np.uint8)
    b = np.zeros(width, dtype=np.uint8)
    a[: len(seed)] = np.frombuffer(seed, dtype=np.uint8)
    b[: len(candidate)] = np.frombuffer(candidate[:width], dtype=np.uint8)
    return float(np.count_nonzero(a != b)) / width


@dataclass
class Candidate:
    data: bytes
    target_edge: int
    target_label: int
    seed_id: int
    status: str
    iters: int
    source: str = field(default="adv")


@dataclass
class CorpusSnapshot:
    """Immutable view the ML side works from: inputs, ids and hit edges."""

    ids: list[int]
    inputs: list[bytes]
    edges: list[np.ndarray]
    frequency: np.ndarray

    @classmethod
    def from_corpus(cls, corpus) -> CorpusSnapshot:
        return cls(
            [e.id for e in corpus.entries],
            [e.input for e in corpus.entries],
            [e.edges.copy() for e in corpus.entries],
            corpus.glob.frequency.copy(),
        )

    def __len__(self) -> int:
        return len(self.ids)


def attack_batch(model: SurrogateModel, snapshot: CorpusSnapshot, space: EdgeLabelSpace,
                 cfg: AttackConfig, labels: np.ndarray | None = None,
                 priority=(), should_stop=None) -> list[Candidate]:
    """Craft candidates aimed at the ``cfg.n_targets`` rarest edges.

    For each target the seed is the queue entry that does not yet reach the
    target label and that the model rates most likely to. Edges in
    ``priority`` are attacked first. ``labels`` is the snapshot's label
    matrix if already computed. ``should_stop()`` is consulted between
    targets; a true value returns the candidates crafted so far.
    """
    if len(snapshot) == 0:
        return []
    if labels is None:
        labels = label_matrix(snapshot.edges, space)
    fits = [i for i, data in enumerate(snapshot.inputs) if 0 < len(data) <= model.width]
    if not fits:
        return []
    probs = predict_proba(model, encode_batch([snapshot.inputs[i] for i in fits], model.width))
    out: list[Candidate] = []
    seen_labels: set[int] = set()
    for edge in [*priority, *rarest_edges(snapshot.frequency, cfg.n_targets)]:
        if should_stop is not None and should_stop():
            break
        label = space.label_of(edge)
        if label is None or label in seen_labels:
            continue
        seen_labels.add(label)
        pool = [k for k, i in enumerate(fits) if not labels[i, label]]
        if not pool:
            continue
        k = max(pool, key=lambda k: probs[k, label])
        seed_index = fits[k]
        seed = snapshot.inputs[seed_index]
        result = jsma_attack(model, seed, label, cfg)
        if result.candidate is None or result.candidate == seed:
            continue
        out.append(Candidate(result.candidate, edge, label, snapshot.ids[seed_index],
                             result.status, result.iters))
    return out
