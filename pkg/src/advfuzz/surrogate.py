"""Feed-forward coverage surrogate: rectifier MLP with per-label sigmoid outputs.

Written directly on numpy so that the input gradient used by the attacks is
exact and cheap for a single sample.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from advfuzz.codec import EncodedInput

HIDDEN = (256, 256)
CHECKPOINT_VERSION = 1

DEFAULT_EPOCHS = 50
DEFAULT_BATCH = 32
DEFAULT_LR = 0.01
DEFAULT_RETRAIN_THRESHOLD = 100


class TrainingDiverged(FloatingPointError):
    pass


class TrainingInterrupted(Exception):
    """``on_epoch`` asked training to stop early."""


@dataclass
class SurrogateModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    train_meta: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_labels(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> SurrogateModel:
        return SurrogateModel(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            dict(self.train_meta),
        )


def init_model(layer_sizes, seed: int = 0) -> SurrogateModel:
    """He-scaled normal weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"bad layer sizes: {sizes}")
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)) for a, b in zip(sizes, sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return SurrogateModel(sizes, weights, biases, {"epochs": 0, "accuracy": None, "snapshot": None})


def new_model(width: int, n_labels: int, seed: int = 0) -> SurrogateModel:
    return init_model([width, *HIDDEN, n_labels], seed)


def rebuild_for_new_size(model: SurrogateModel, new_width: int, new_label_space, seed: int = 0) -> SurrogateModel:
    """Fresh parameters at the new dimensions; nothing is carried over."""
    if new_width < model.width:
        raise ValueError("surrogate width can only grow")
    hidden = model.layer_sizes[1:-1]
    return init_model([new_width, *hidden, new_label_space.n_labels], seed)


def _as_matrix(model: SurrogateModel, x) -> np.ndarray:
    values = x.values if isinstance(x, EncodedInput) else np.asarray(x, dtype=np.float64)
    if values.shape[-1] != model.width:
        raise ValueError(f"input width {values.shape[-1]} != model width {model.width}")
    return values


def sigmoid(z):
    # split form avoids overflow warnings for large |z|
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cache(model: SurrogateModel, x: np.ndarray):
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(model: SurrogateModel, x):
    """``(logits, probs)`` for one encoded input or a batch (rows)."""
    values = _as_matrix(model, x)
    logits = _forward_cache(model, values)[-1]
    return logits, sigmoid(np.asarray(logits, dtype=np.float64))


def predict_proba(model: SurrogateModel, x) -> np.ndarray:
    return forward(model, x)[1]


def bce_loss(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean over samples of the summed per-label binary cross-entropy."""
    per_cell = np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
    return float(per_cell.sum(axis=-1).mean())


def bitwise_accuracy(logits: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((logits > 0.0) == (y > 0.5)))


def train(model: SurrogateModel, X, Y, epochs: int = DEFAULT_EPOCHS, batch_size: int = DEFAULT_BATCH,
          learning_rate: float = DEFAULT_LR, seed: int = 0, history: list | None = None,
          on_epoch=None) -> dict:
    """Mini-batch gradient descent on the summed BCE; updates ``model`` in place.

    Returns ``{"bce_loss", "bitwise_accuracy"}`` measured on the full set
    after the last epoch. Per-epoch losses are appended to ``history`` when
    given. ``on_epoch()`` runs after every epoch; a true return value
    aborts with :class:`TrainingInterrupted`.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty training set")
    if X.shape[1] != model.width or Y.shape[1] != model.n_labels:
        raise ValueError(f"dataset shape {X.shape}/{Y.shape} does not fit {model.layer_sizes}")
    rng = np.random.default_rng(seed)
    with np.errstate(over="ignore", invalid="ignore"):
        return _train(model, X, Y, epochs, batch_size, learning_rate, rng, history, on_epoch)


def _train(model, X, Y, epochs, batch_size, learning_rate, rng, history, on_epoch) -> dict:
    n = len(X)
    weights, biases = model.weights, model.biases
    last = len(weights) - 1
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            acts = _forward_cache(model, X[idx])
            delta = (sigmoid(acts[-1]) - Y[idx]) / len(idx)
            for i in range(last, -1, -1):
                grad_w = acts[i].T @ delta
                grad_b = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ weights[i].T) * (acts[i] > 0.0)
                weights[i] -= learning_rate * grad_w
                biases[i] -= learning_rate * grad_b
        if history is not None:
            history.append(bce_loss(_forward_cache(model, X)[-1], Y))
        if on_epoch is not None and on_epoch():
            raise TrainingInterrupted
    logits = _forward_cache(model, X)[-1]
    loss = bce_loss(logits, Y)
    if not np.isfinite(loss) or not all(np.isfinite(w).all() for w in weights):
        raise TrainingDiverged(f"non-finite loss after training (loss={loss}, lr={learning_rate})")
    acc = bitwise_accuracy(logits, Y)
    model.train_meta["epochs"] = model.train_meta.get("epochs", 0) + epochs
    model.train_meta["accuracy"] = acc
    return {"bce_loss": loss, "bitwise_accuracy": acc}


def input_gradient(model: SurrogateModel, x, label: int) -> np.ndarray:
    """d logit[label] / d x, by reverse mode through the rectifiers."""
    if not 0 <= label < model.n_labels:
        raise IndexError(f"label {label} outside 0..{model.n_labels - 1}")
    values = _as_matrix(model, x)
    acts = _forward_cache(model, values)
    grad = model.weights[-1][:, label].copy()
    for i in range(len(model.weights) - 1, 0, -1):
        grad = grad * (acts[i] > 0.0)
        grad = model.weights[i - 1] @ grad
    return grad


@dataclass
class RetrainState:
    new_cases_since_train: int = 0
    saw_new_edge: bool = False
    saw_larger_input: bool = False
    cycle_ended: bool = False
    threshold_new_cases: int = DEFAULT_RETRAIN_THRESHOLD

    def clear(self) -> None:
        self.new_cases_since_train = 0
        self.saw_new_edge = False
        self.saw_larger_input = False
        self.cycle_ended = False


def should_retrain(state: RetrainState) -> bool:
    return (
        state.new_cases_since_train >= state.threshold_new_cases
        or state.saw_new_edge
        or state.saw_larger_input
        or state.cycle_ended
    )


def save_checkpoint(model: SurrogateModel, path: str | Path) -> None:
    """Versioned ``.npz`` dump, replaced atomically."""
    arrays = {"version": np.array(CHECKPOINT_VERSION), "layer_sizes": np.array(model.layer_sizes)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    meta = {k: v for k, v in model.train_meta.items() if v is not None}
    arrays["meta_keys"] = np.array(sorted(meta), dtype=str)
    arrays["meta_values"] = np.array([float(meta[k]) for k in sorted(meta)], dtype=np.float64)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> SurrogateModel:
    with np.load(Path(path)) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = [int(s) for s in data["layer_sizes"]]
        n = len(sizes) - 1
        weights = [data[f"w{i}"].copy() for i in range(n)]
        biases = [data[f"b{i}"].copy() for i in range(n)]
        meta = dict(zip(data["meta_keys"].tolist(), data["meta_values"].tolist()))
    return SurrogateModel(sizes, weights, biases, meta)
