"""ML side of an adversarial campaign.

A control loop consumes fuzz-loop signals, keeps its own replayed view of the
queue, retrains the surrogate when a trigger fires and sends crafted
candidates back. A second thread appends every signal to ``signals.log``.
"""

from __future__ import annotations

import logging
import os
import queue
import threading
import time
from collections import deque
from pathlib import Path

import numpy as np

from advfuzz.adversary import AttackConfig, CorpusSnapshot, attack_batch
from advfuzz.codec import build_label_space, encode_batch, label_matrix
from advfuzz.errors import ChannelClosed
from advfuzz.harness import MAP_SIZE, Executor
from advfuzz.protocol import Channel, Kind, Message, make_candidate
from advfuzz.surrogate import (
    RetrainState,
    TrainingDiverged,
    TrainingInterrupted,
    new_model,
    save_checkpoint,
    should_retrain,
    train,
)
from advfuzz.targets import get_target

log = logging.getLogger("advfuzz.ml")


class SignalJournal:
    """Append-only log written by its own thread."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._q: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._drain, name="signal-logger", daemon=True)
        self._thread.start()

    def record(self, direction: str, msg: Message) -> None:
        self._q.put(f"{time.time():.6f} {direction} {msg.encode().decode('ascii').rstrip()}")

    def event(self, text: str) -> None:
        self._q.put(f"{time.time():.6f} event {text}")

    def _drain(self) -> None:
        with open(self.path, "a") as fh:
            while True:
                line = self._q.get()
                if line is None:
                    return
                fh.write(line + "\n")
                fh.flush()

    def close(self) -> None:
        self._q.put(None)
        self._thread.join(5)


class MLComponent:
    def __init__(self, cfg, channel: Channel, journal: SignalJournal, out_dir: Path):
        self.cfg = cfg
        self.channel = channel
        self.journal = journal
        self.out_dir = out_dir
        self.executor = Executor(get_target(cfg.target), cfg.timeout)
        self.ids: list[int] = []
        self.inputs: list[bytes] = []
        self.edges: list[np.ndarray] = []
        self.frequency = np.zeros(MAP_SIZE, dtype=np.int64)
        self.state = RetrainState(threshold_new_cases=cfg.retrain_threshold)
        self.priority: deque[int] = deque(maxlen=64)
        self.model = None
        self.space = None
        self.width = 0
        self.retrains = 0
        self.sent = 0
        self.attack_cfg = AttackConfig(
            theta=cfg.theta,
            max_iters=cfg.max_iters,
            n_targets=cfg.n_targets,
            success_threshold=cfg.success_threshold,
            features_per_iter=cfg.features_per_iter,
        )
        self._stop = False

    def handle(self, msg: Message) -> None:
        kind = msg.kind
        if kind is Kind.NEW_INPUT:
            data = Path(msg.file_ref).read_bytes()
            cov = self.executor.execute(data).coverage
            self.ids.append(msg.entry_id)
            self.inputs.append(data)
            self.edges.append(cov.edges)
            self.frequency[cov.edges] += 1
            self.state.new_cases_since_train += 1
            if len(data) > self.width:
                self.state.saw_larger_input = True
        elif kind is Kind.NEW_EDGE:
            self.state.saw_new_edge = True
        elif kind is Kind.CYCLE_END:
            self.state.cycle_ended = True
            self.journal.event(f"cycle_end cycle={msg.cycle}")
        elif kind is Kind.PRIORITY_TARGET:
            self.priority.append(msg.edge)
        elif kind is Kind.SHUTDOWN:
            self._stop = True

    def _interrupted(self) -> bool:
        """Handle whatever arrived meanwhile; true once shutdown was requested."""
        for msg in self.channel.drain():
            self.handle(msg)
        return self._stop

    def _training_rows(self) -> list[int]:
        return [i for i, d in enumerate(self.inputs) if len(d) <= self.cfg.ml_max_width]

    def retrain(self, interruptible: bool = True) -> bool:
        rows = self._training_rows()
        if len(rows) < 2:
            return False
        edges = [self.edges[i] for i in rows]
        space = build_label_space(edges)
        if space.n_labels == 0:
            return False
        width = max(1, max(len(self.inputs[i]) for i in rows))
        X = encode_batch([self.inputs[i] for i in rows], width)
        Y = label_matrix(edges, space)
        model = new_model(width, space.n_labels, seed=self.cfg.seed + self.retrains)
        reason = self._reason()
        self.state.clear()
        started = time.monotonic()
        try:
            metrics = train(model, X, Y, epochs=self.cfg.epochs, batch_size=self.cfg.batch_size,
                            learning_rate=self.cfg.learning_rate, seed=self.cfg.seed + self.retrains,
                            on_epoch=self._interrupted if interruptible else None)
        except TrainingDiverged as exc:
            self.journal.event(f"retrain_failed error={exc}")
            return False
        except TrainingInterrupted:
            self.journal.event("retrain_interrupted")
            return False
        self.retrains += 1
        model.train_meta["snapshot"] = len(rows)
        self.model, self.space, self.width = model, space, width
        save_checkpoint(model, self.out_dir / "model.ckpt")
        self.journal.event(
            f"retrain n={self.retrains} reason={reason} samples={len(rows)} width={width} "
            f"labels={space.n_labels} acc={metrics['bitwise_accuracy']:.4f} "
            f"loss={metrics['bce_loss']:.4f} secs={time.monotonic() - started:.2f}"
        )
        return True

    def _reason(self) -> str:
        s = self.state
        parts = []
        if s.new_cases_since_train >= s.threshold_new_cases:
            parts.append("cases")
        if s.saw_new_edge:
            parts.append("edge")
        if s.saw_larger_input:
            parts.append("size")
        if s.cycle_ended:
            parts.append("cycle")
        return "+".join(parts) or "initial"

    def attack(self) -> int:
        if self.model is None:
            return 0
        rows = self._training_rows()
        snap = CorpusSnapshot(
            [self.ids[i] for i in rows],
            [self.inputs[i] for i in rows],
            [self.edges[i] for i in rows],
            self.frequency.copy(),
        )
        priority = list(self.priority)
        self.priority.clear()
        cands = attack_batch(self.model, snap, self.space, self.attack_cfg, priority=priority,
                             should_stop=self._interrupted)
        exchange = self.out_dir / "exchange"
        for cand in cands:
            msg = make_candidate(cand.data, cand.target_edge, cand.seed_id, exchange,
                                 f"cand_{self.sent:06d}", self.cfg.inline_limit)
            self.channel.send(msg)
            self.sent += 1
        self.journal.event(f"attack candidates={len(cands)} targets={self.attack_cfg.n_targets}")
        return len(cands)

    def run(self) -> None:
        while not self._stop:
            msg = self.channel.recv(timeout=0.2)
            if msg is not None:
                self.handle(msg)
                for more in self.channel.drain():
                    self.handle(more)
            if self._stop:
                break
            if should_retrain(self.state) and self.retrain():
                self.attack()
        if self.model is None:
            # short campaigns still leave a checkpoint behind
            self.retrain(interruptible=False)


def ml_main(sock, cfg, out_dir: Path) -> None:
    try:
        os.nice(cfg.ml_nice)
    except OSError:
        pass
    journal = SignalJournal(out_dir / "signals.log")
    channel = Channel(sock, journal=journal.record)
    component = MLComponent(cfg, channel, journal, out_dir)
    try:
        component.run()
    except ChannelClosed:
        pass
    finally:
        journal.event(f"stopped retrains={component.retrains} candidates={component.sent}")
        journal.close()
        channel.close()
