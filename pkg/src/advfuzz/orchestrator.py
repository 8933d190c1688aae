"""Campaign runtime: the fuzz loop plus, in adversarial mode, the ML component.

The two components run as separate OS processes joined by a local stream
socket. The fuzz loop owns the corpus; the ML component owns the surrogate.
Nothing else is shared.
"""

from __future__ import annotations

import json
import logging
import multiprocessing
import random
import socket
import tempfile
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from advfuzz.corpus import CampaignStats, Corpus, QueueEntry, Source
from advfuzz.errors import ChannelClosed, ConfigError
from advfuzz.harness import DEFAULT_TIMEOUT, Executor, Outcome
from advfuzz.mutators import MAX_INPUT_LEN, deterministic_stage, havoc_stage
from advfuzz.protocol import INLINE_LIMIT, Channel, Kind, Message
from advfuzz.targets import get_target

log = logging.getLogger("advfuzz")

BASELINE = "baseline"
ADVERSARIAL = "adversarial"


@dataclass
class CampaignConfig:
    target: str = "goat"
    mode: str = BASELINE
    budget_execs: int | None = None
    budget_secs: float | None = None
    seed: int = 0
    out: str | None = None
    trial: int = 0
    timeout: float = DEFAULT_TIMEOUT
    havoc_budget: int = 256
    skip_deterministic: bool = False
    max_len: int = MAX_INPUT_LEN
    poll_every: int = 1024
    # surrogate
    retrain_threshold: int = 100
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.01
    # attack
    n_targets: int = 50
    theta: float = 0.25
    max_iters: int = 200
    success_threshold: float = 0.9
    features_per_iter: int = 1
    # ML process
    ml_nice: int = 10
    ml_max_width: int = 1024
    inline_limit: int = INLINE_LIMIT
    shutdown_grace: float = 30.0

    def validate(self) -> None:
        if self.mode not in (BASELINE, ADVERSARIAL):
            raise ConfigError(f"mode must be {BASELINE!r} or {ADVERSARIAL!r}, got {self.mode!r}")
        if self.budget_execs is None and self.budget_secs is None:
            raise ConfigError("a budget (executions or seconds) is required")
        if self.budget_execs is not None and self.budget_execs < 1:
            raise ConfigError("budget_execs must be >= 1")
        if self.budget_secs is not None and self.budget_secs <= 0:
            raise ConfigError("budget_secs must be > 0")
        if self.timeout <= 0:
            raise ConfigError("timeout must be > 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class _BudgetExhausted(Exception):
    pass


class FuzzLoop:
    """Queue cycling with deterministic then havoc stages per entry.

    With a ``channel`` the loop reports queue growth to the ML component and
    executes any candidates it sends back before moving to the next entry
    (and every ``poll_every`` executions in between).
    """

    def __init__(self, cfg: CampaignConfig, corpus: Corpus, channel: Channel | None = None, target=None):
        self.cfg = cfg
        self.target = target if target is not None else get_target(cfg.target)
        self.corpus = corpus
        self.channel = channel
        self.ex = Executor(self.target, cfg.timeout)
        self.rng = random.Random(cfg.seed)
        self.execs = 0
        self.cycle = 0
        self.pool: list[bytes] = []
        self.candidates_received = 0
        self.candidates_accepted = 0
        self.ml_lost = False
        self._next_poll = cfg.poll_every
        self._polling = False
        self._limit = cfg.budget_execs if cfg.budget_execs is not None else float("inf")

    # -- execution ---------------------------------------------------------

    def run_one(self, data: bytes, parent: QueueEntry | None, source: Source) -> QueueEntry | None:
        if self.execs >= self._limit:
            raise _BudgetExhausted
        ex = self.ex
        outcome, bug, micros = ex.run_raw(data)
        self.execs += 1
        entry = None
        if outcome is Outcome.OK:
            if ex.tracer.new_bits(self.corpus.glob.virgin_bits):
                entry = self._queue(data, parent, source, micros)
        elif outcome is Outcome.CRASH:
            cov = ex.snapshot()
            if self.corpus.record_crash(data, bug, cov):
                self._prioritise(cov)
        if self.execs >= self._next_poll:
            self._next_poll = self.execs + self.cfg.poll_every
            self.poll()
        return entry

    def _queue(self, data, parent, source, micros) -> QueueEntry | None:
        cov = self.ex.snapshot()
        return self._announce(self.corpus.add_entry(data, parent, source, cov, micros), cov)

    def _announce(self, entry: QueueEntry | None, cov) -> QueueEntry | None:
        """Add to the splice pool and tell the ML side about the entry and its new edges."""
        if entry is None:
            return None
        self.pool.append(entry.input)
        if self.channel is not None:
            freq = self.corpus.glob.frequency
            self._send(Message.new_input(entry.id, str(self.corpus.queue_path(entry))))
            for edge in cov.edges[freq[cov.edges] == 1].tolist():
                self._send(Message.new_edge(edge))
        return entry

    def _prioritise(self, cov) -> None:
        """Point the ML side at the rarest queued edges on a fresh crash path."""
        if self.channel is None:
            return
        freq = self.corpus.glob.frequency
        known = [e for e in cov.edges.tolist() if freq[e] > 0]
        known.sort(key=lambda e: (freq[e], e))
        for edge in known[:3]:
            self._send(Message.priority_target(edge))

    # -- ML link -------------------------------------------------------------

    def _send(self, msg: Message) -> None:
        if self.channel is None:
            return
        try:
            self.channel.send(msg)
        except ChannelClosed:
            self._drop_channel()

    def _drop_channel(self) -> None:
        log.warning("ML component unreachable; continuing without it")
        self.channel = None
        self.ml_lost = True

    def poll(self) -> None:
        """Stats tick, time budget, and delivery of pending candidates."""
        if self._polling:
            return
        self._polling = True
        try:
            self.corpus.tick(self.execs)
            if self.cfg.budget_secs is not None and self.corpus.elapsed() >= self.cfg.budget_secs:
                raise _BudgetExhausted
            if self.channel is None:
                return
            try:
                self.channel.flush()
                msgs = self.channel.drain()
            except ChannelClosed:
                self._drop_channel()
                return
            cands = []
            for msg in msgs:
                if msg.kind is Kind.CANDIDATE:
                    try:
                        cands.append((msg.load_bytes(), msg.seed_id))
                    except OSError:
                        log.warning("candidate file %s unreadable", msg.file_ref)
            if cands:
                self.inject_candidates(cands)
        finally:
            self._polling = False

    def inject_candidates(self, candidates) -> int:
        """Execute candidates now; returns how many entered the queue.

        Items are raw bytes or ``(bytes, seed_id)`` pairs.
        """
        accepted = 0
        entries = self.corpus.entries
        for item in candidates:
            if isinstance(item, tuple):
                data, seed_id = item
            else:
                data, seed_id = item, None
            if not data:
                continue
            parent = entries[seed_id] if seed_id is not None and 0 <= seed_id < len(entries) else None
            self.candidates_received += 1
            if self.run_one(bytes(data[: self.cfg.max_len]), parent, Source.ADVERSARIAL) is not None:
                accepted += 1
        self.candidates_accepted += accepted
        return accepted

    # -- stages --------------------------------------------------------------

    def load_seeds(self, seeds) -> None:
        for data in seeds:
            if self.execs >= self._limit:
                raise _BudgetExhausted
            result = self.ex.execute(data)
            self.execs += 1
            if result.outcome is Outcome.CRASH:
                self.corpus.record_crash(data, result.bug_id, result.coverage)
                continue
            if result.outcome is Outcome.OK:
                self._queue_seed(data, result)
        if not self.corpus.entries:
            result = self.ex.execute(b"\x00")
            self.execs += 1
            self._queue_seed(b"\x00", result)

    def _queue_seed(self, data, result) -> None:
        self._announce(self.corpus.add_entry(data, None, Source.SEED, result.coverage, result.exec_micros),
                       result.coverage)

    def fuzz_one(self, entry: QueueEntry) -> None:
        if not entry.passed_det and entry.input and not self.cfg.skip_deterministic:
            for mutant in deterministic_stage(entry.input):
                self.run_one(mutant, entry, Source.DETERMINISTIC)
            entry.passed_det = True
        for mutant in havoc_stage(entry.input or b"\x00", self.rng, self.pool,
                                  self.cfg.havoc_budget, self.cfg.max_len):
            self.run_one(mutant, entry, Source.HAVOC)
        entry.fuzz_level += 1

    def run(self) -> CampaignStats:
        try:
            self.load_seeds(self.target.seeds)
            while True:
                idx = 0
                entries = self.corpus.entries
                while idx < len(entries):
                    self.poll()
                    self.fuzz_one(entries[idx])
                    idx += 1
                self.cycle += 1
                self._send(Message.cycle_end(self.cycle))
        except _BudgetExhausted:
            pass
        self.corpus.tick(self.execs, force=True)
        return self.corpus.stats


def _ml_entry(sock: socket.socket, cfg: CampaignConfig, out_dir: str) -> None:
    from advfuzz.mlworker import ml_main

    ml_main(sock, cfg, Path(out_dir))


def start_ml_component(cfg: CampaignConfig, out_dir: Path):
    """Fork the ML component; returns ``(process, channel)`` for the fuzz side."""
    fuzz_sock, ml_sock = socket.socketpair()
    ctx = multiprocessing.get_context("fork")
    proc = ctx.Process(target=_ml_entry, args=(ml_sock, cfg, str(out_dir)), daemon=True,
                       name="advfuzz-ml")
    proc.start()
    ml_sock.close()
    return proc, Channel(fuzz_sock)


def stop_ml_component(proc, channel: Channel | None, grace: float) -> None:
    if channel is not None:
        try:
            channel.send(Message.shutdown())
            deadline = time.monotonic() + grace
            while channel.pending_out and time.monotonic() < deadline:
                channel.flush()
                time.sleep(0.01)
        except ChannelClosed:
            pass
    proc.join(grace)
    if proc.is_alive():
        log.warning("ML component did not stop in %.0fs; terminating", grace)
        proc.terminate()
        proc.join(5)
    if channel is not None:
        channel.close()


def run_campaign(cfg: CampaignConfig, on_start=None) -> CampaignStats:
    """Run one campaign to its budget and persist the final summary.

    ``on_start(loop, ml_process)`` is called once everything is wired up;
    tests use it to interfere with the ML component.
    """
    cfg.validate()
    target = get_target(cfg.target)
    if cfg.out is None:
        cfg.out = tempfile.mkdtemp(prefix="advfuzz-")
    out_dir = Path(cfg.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out_dir} is not writable: {exc}") from exc

    corpus = Corpus(out_dir)
    proc = None
    channel = None
    if cfg.mode == ADVERSARIAL:
        proc, channel = start_ml_component(cfg, out_dir)
    loop = FuzzLoop(cfg, corpus, channel, target)
    if on_start is not None:
        on_start(loop, proc)
    try:
        stats = loop.run()
    finally:
        if proc is not None:
            stop_ml_component(proc, loop.channel, cfg.shutdown_grace)
        corpus.close()
    summary = {
        "mode": cfg.mode,
        "target": cfg.target,
        "trial": cfg.trial,
        "seed": cfg.seed,
        "cycles": loop.cycle,
        "elapsed_secs": round(corpus.elapsed(), 3),
        "mean_depth": (sum(e.depth for e in corpus.entries) / len(corpus.entries)) if corpus.entries else 0.0,
        "crash_bugs": sorted(corpus.crash_bugs),
        "candidates_received": loop.candidates_received,
        "candidates_accepted": loop.candidates_accepted,
        "ml_lost": loop.ml_lost,
        "config": asdict(cfg),
        **stats.as_dict(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return stats
