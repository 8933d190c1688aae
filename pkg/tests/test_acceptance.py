"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL ...`` line before asserting.
Criteria 6 and 7 share one set of five paired 2M-execution campaigns.
"""

import json
import os
import random
import signal
import socket
import statistics
import threading
import time

import numpy as np
import pytest

from advfuzz.adversary import (
    AttackConfig,
    CorpusSnapshot,
    attack_batch,
    fgsm_attack,
    footprint,
    jsma_attack,
)
from advfuzz.codec import build_label_space, encode_batch, encode_input, label_matrix
from advfuzz.corpus import Corpus, bucket, bucket_mask, rarest_edges
from advfuzz.harness import Executor
from advfuzz.mutators import havoc_mutate
from advfuzz.orchestrator import ADVERSARIAL, BASELINE, CampaignConfig, FuzzLoop, run_campaign
from advfuzz.protocol import Channel, Message
from advfuzz.surrogate import _forward_cache, init_model, input_gradient, new_model, predict_proba, train
from advfuzz.targets import get_target


def _signal_later(delay, pid, sig):
    def fire():
        try:
            os.kill(pid, sig)
        except ProcessLookupError:
            pass

    timer = threading.Timer(delay, fire)
    timer.daemon = True
    timer.start()


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")


def goat_setup(seed, execs=20_000):
    corpus = Corpus()
    FuzzLoop(CampaignConfig(budget_execs=execs, seed=seed), corpus).run()
    snap = CorpusSnapshot.from_corpus(corpus)
    space = build_label_space(snap.edges)
    width = max(len(d) for d in snap.inputs)
    X = encode_batch(snap.inputs, width)
    Y = label_matrix(snap.edges, space)
    model = new_model(width, space.n_labels, seed=seed)
    metrics = train(model, X, Y, seed=seed)
    return corpus, snap, space, model, X, Y, metrics


# -- 1 -----------------------------------------------------------------------


def _fd_gradients(model, x, h=1e-4):
    """Central differences for every label at once: shape (width, labels).

    Also returns a mask of coordinates whose +-h probe keeps every hidden
    unit's on/off state; elsewhere the probe straddles a rectifier kink and
    the difference quotient is not a derivative of anything.
    """
    eye = np.eye(model.width) * h
    plus = _forward_cache(model, x + eye)
    minus = _forward_cache(model, x - eye)
    here = _forward_cache(model, x[None, :])
    smooth = np.ones(model.width, dtype=bool)
    for layer in range(1, len(model.weights)):
        state = here[layer][0] > 0
        smooth &= np.all((plus[layer] > 0) == state, axis=1) & np.all((minus[layer] > 0) == state, axis=1)
    return (plus[-1] - minus[-1]) / (2 * h), smooth


def test_c1_gradient_matches_finite_differences(capsys):
    rng = np.random.default_rng(11)
    started = time.perf_counter()
    worst = 0.0
    checked = skipped = 0
    for k in range(20):
        width = int(rng.integers(8, 65))
        labels = int(rng.integers(2, 17))
        model = new_model(width, labels, seed=k)
        for b in model.biases:
            b[:] = rng.normal(0, 0.1, size=b.shape)
        for _ in range(10):
            x = rng.random(width)
            fd, smooth = _fd_gradients(model, x)
            checked += int(smooth.sum()) * labels
            skipped += int((~smooth).sum()) * labels
            for label in range(labels):
                g = input_gradient(model, x, label)[smooth]
                ref = fd[smooth, label]
                err = np.abs(g - ref) / np.maximum(np.maximum(np.abs(g), np.abs(ref)), 1e-8)
                if err.size:
                    worst = max(worst, float(err.max()))
    elapsed = time.perf_counter() - started
    ok = worst < 1e-4 and elapsed < 10 and checked > 0.9 * (checked + skipped)
    report(capsys, 1, ok, f"max relative error {worst:.2e} (< 1e-4) over {checked} partials, "
                          f"{skipped} kink-straddling probes excluded, {elapsed:.1f}s (< 10s)")
    assert ok


# -- 2 -----------------------------------------------------------------------


def synthetic_oracle(n=2000, width=32, seed=0):
    rng = np.random.default_rng(seed)
    raw = rng.integers(0, 256, size=(n, width))
    return raw / 255.0, (raw > 128).astype(np.float64)


def test_c2_surrogate_accuracy_bar(capsys):
    X, Y = synthetic_oracle()
    started = time.perf_counter()
    a = train(new_model(32, 32, seed=0), X, Y, epochs=50, seed=0)
    elapsed = time.perf_counter() - started
    b = train(new_model(32, 32, seed=0), X, Y, epochs=50, seed=0)
    repro = a == b
    ok = a["bitwise_accuracy"] >= 0.94 and repro and elapsed < 60
    report(capsys, 2, ok, f"bitwise accuracy {a['bitwise_accuracy']:.4f} (>= 0.94), "
                          f"reproducible={repro}, {elapsed:.1f}s (< 60s)")
    assert ok


# -- 3 -----------------------------------------------------------------------


def test_c3_jsma_structure(capsys, goat_surrogate, goat_corpus):
    rng = np.random.default_rng(3)
    pyrng = random.Random(3)
    gmodel, gspace, _ = goat_surrogate
    inputs = [e.input for e in goat_corpus.entries if e.input]
    violations = []
    statuses = {}
    for k in range(200):
        if k % 2:
            model, seed = gmodel, pyrng.choice(inputs)
            label = int(rng.integers(gmodel.n_labels))
        else:
            width = int(rng.integers(4, 40))
            model = init_model([width, int(rng.integers(4, 32)), int(rng.integers(1, 6))], seed=k)
            seed = bytes(rng.integers(0, 256, size=int(rng.integers(1, width + 1))).tolist())
            label = int(rng.integers(model.n_labels))
        cfg = AttackConfig(theta=float(rng.uniform(0.01, 1.0)), max_iters=int(rng.integers(1, 60)),
                           features_per_iter=int(rng.integers(1, 4)))
        res = jsma_attack(model, seed, label, cfg)
        statuses[res.status] = statuses.get(res.status, 0) + 1
        cand = res.candidate
        changed = sum(1 for a, b in zip(seed, cand) if a != b)
        if len(cand) != len(seed):
            violations.append((k, "length"))
        if changed > cfg.features_per_iter * res.iters:
            violations.append((k, "changes", changed, res.iters))
        padded = encode_input(cand, model.width).values
        if np.any(padded[len(seed):] != 0):
            violations.append((k, "beyond length"))
    ok = not violations
    report(capsys, 3, ok, f"200 attacks {statuses}, violations={violations[:3]}")
    assert ok


# -- 4 -----------------------------------------------------------------------


def test_c4_jsma_vs_fgsm_footprint(capsys):
    held = 0
    lines = []
    for rep in range(10):
        corpus, snap, space, model, X, Y, _ = goat_setup(rep)
        probs = predict_proba(model, X)
        js, fg = [], []
        for edge in rarest_edges(corpus.glob.frequency, 20):
            label = space.label_of(edge)
            pool = [i for i in range(len(X)) if not Y[i, label] and snap.inputs[i]]
            seed = snap.inputs[max(pool, key=lambda i: probs[i, label])]
            js.append(footprint(seed, jsma_attack(model, seed, label, AttackConfig()).candidate, model.width))
            fg.append(footprint(seed, fgsm_attack(model, seed, label, 0.25), model.width))
        mj, mf = statistics.median(js), statistics.median(fg)
        held += mj <= 0.10 and mf >= 0.50
        lines.append(f"{mj:.3f}/{mf:.3f}")
    ok = held >= 9
    report(capsys, 4, ok, f"direction held {held}/10 (>= 9); median jsma/fgsm per rep: {' '.join(lines)}")
    assert ok


# -- 5 -----------------------------------------------------------------------


def test_c5_transfer_beats_havoc(capsys):
    goat = get_target("goat")
    wins = 0
    lines = []
    for rep in range(5):
        corpus, snap, space, model, X, Y, _ = goat_setup(rep)
        cands = attack_batch(model, snap, space, AttackConfig())
        seeds = dict(zip(snap.ids, snap.inputs))
        ex = Executor(goat)
        rng = random.Random(1000 + rep)
        adv = ctl = 0
        for c in cands:
            adv += c.target_edge in set(ex.execute(c.data).coverage.edges.tolist())
            mutant = havoc_mutate(seeds[c.seed_id], rng, snap.inputs)
            ctl += c.target_edge in set(ex.execute(mutant).coverage.edges.tolist())
        wins += adv > ctl
        lines.append(f"{adv}v{ctl}/{len(cands)}")
    ok = wins >= 4
    report(capsys, 5, ok, f"adversarial beat havoc in {wins}/5 reps (>= 4); "
                          f"hits adv v havoc / batch: {' '.join(lines)}")
    assert ok


# -- 6 and 7 --------------------------------------------------------------------

AB_TRIALS = 5
AB_EXECS = 2_000_000


@pytest.fixture(scope="module")
def ab_trials(tmp_path_factory):
    root = tmp_path_factory.mktemp("ab")
    results = {BASELINE: [], ADVERSARIAL: []}
    for trial in range(AB_TRIALS):
        for mode in (BASELINE, ADVERSARIAL):
            out = root / f"{mode}_{trial}"
            run_campaign(CampaignConfig(mode=mode, budget_execs=AB_EXECS, seed=trial, trial=trial, out=str(out)))
            results[mode].append(json.loads((out / "summary.json").read_text()))
    return results


@pytest.mark.slow
def test_c6_campaign_direction(capsys, ab_trials):
    base, adv = ab_trials[BASELINE], ab_trials[ADVERSARIAL]
    paths = sum(a["paths_found"] >= b["paths_found"] for a, b in zip(adv, base))
    crashes = sum(a["unique_crashes"] >= b["unique_crashes"] for a, b in zip(adv, base))
    depth_b = statistics.mean(b["mean_depth"] for b in base)
    depth_a = statistics.mean(a["mean_depth"] for a in adv)
    ok = paths >= 4 and crashes >= 4 and depth_a <= depth_b
    pairs = " ".join(f"{a['paths_found']}/{b['paths_found']}:{a['unique_crashes']}/{b['unique_crashes']}"
                     for a, b in zip(adv, base))
    accepted = sum(a["candidates_accepted"] for a in adv)
    received = sum(a["candidates_received"] for a in adv)
    report(capsys, 6, ok, f"paths adv>=base {paths}/5, crashes adv>=base {crashes}/5, mean depth "
                          f"{depth_a:.3f} <= {depth_b:.3f}; pairs paths:crashes adv/base {pairs}; "
                          f"candidates accepted {accepted}/{received}")
    assert ok


@pytest.mark.slow
def test_c7_overhead_bound(capsys, ab_trials):
    base = statistics.mean(b["execs_per_sec"] for b in ab_trials[BASELINE])
    adv = statistics.mean(a["execs_per_sec"] for a in ab_trials[ADVERSARIAL])
    ratio = adv / base
    ok = ratio >= 0.75
    report(capsys, 7, ok, f"adversarial/baseline execs/sec {adv:.0f}/{base:.0f} = {ratio:.3f} (>= 0.75)")
    assert ok


# -- 8 -----------------------------------------------------------------------


def test_c8_corpus_invariants(capsys, tmp_path):
    goat = get_target("goat")
    corpus = Corpus(tmp_path)
    FuzzLoop(CampaignConfig(budget_execs=50_000, seed=8), corpus).run()
    corpus.close()
    ex = Executor(goat)
    brute = {}
    for entry in corpus.entries:
        for e in ex.execute(entry.input).coverage.edges.tolist():
            brute[e] = brute.get(e, 0) + 1
    freq_ok = corpus.glob.edge_frequency == brute

    before = (corpus.stats.unique_crashes, set(corpus.crash_keys))
    replays = 0
    for path in sorted((tmp_path / "crashes").iterdir()):
        res = ex.execute(path.read_bytes())
        corpus.record_crash(path.read_bytes(), res.bug_id, res.coverage)
        replays += 1
    dedup_ok = (corpus.stats.unique_crashes, set(corpus.crash_keys)) == before and replays == before[0]

    ranges = [(0, 0), (1, 1), (2, 2), (3, 3), (4, 7), (8, 15), (16, 31), (32, 127), (128, 255)]
    table_ok = all(
        bucket(c) == next(i for i, (lo, hi) in enumerate(ranges) if lo <= c <= hi)
        and bucket_mask(c) == (0 if bucket(c) == 0 else 1 << (bucket(c) - 1))
        for c in range(256)
    )
    ok = freq_ok and dedup_ok and table_ok
    report(capsys, 8, ok, f"frequency consistency={freq_ok} ({len(corpus)} entries), "
                          f"crash replay idempotent={dedup_ok} ({replays} files), bucket table={table_ok}")
    assert ok


# -- 9 -----------------------------------------------------------------------


def _two_sender_stress(total=10_000):
    """Both ends of a real socket send at once from separate processes."""
    per_side = total // 2
    parent_sock, child_sock = socket.socketpair()
    pid = os.fork()
    if pid == 0:  # pragma: no cover - child process
        parent_sock.close()
        ch = Channel(child_sock)
        got = []
        sent = 0
        try:
            while sent < per_side or len(got) < per_side:
                if sent < per_side:
                    ch.send(Message.new_edge(sent % 65536))
                    sent += 1
                got += ch.drain()
            while ch.pending_out:
                ch.flush()
            ok = [m.seq for m in got] == list(range(per_side)) and \
                [m.edge for m in got] == [i % 65536 for i in range(per_side)]
            ch.send(Message.cycle_end(1 if ok else 0))
            while ch.pending_out:
                ch.flush()
            ch.recv(timeout=10)  # wait for the parent to close
        except Exception:
            pass
        os._exit(0)
    child_sock.close()
    ch = Channel(parent_sock)
    got = []
    sent = 0
    deadline = time.monotonic() + 60
    while (sent < per_side or len(got) < per_side + 1) and time.monotonic() < deadline:
        if sent < per_side:
            ch.send(Message.new_edge(sent % 65536))
            sent += 1
        got += ch.drain()
    ch.close()
    os.waitpid(pid, 0)
    data = got[:per_side]
    verdict = got[per_side].cycle if len(got) > per_side else None
    parent_ok = [m.seq for m in data] == list(range(per_side)) and \
        [m.edge for m in data] == [i % 65536 for i in range(per_side)]
    return parent_ok, verdict == 1, len(data) + (per_side if verdict == 1 else 0)


def _windows_alive(stats_csv, after):
    rows = [line.split(",") for line in stats_csv.read_text().splitlines()[1:]]
    pts = [(float(r[0]), int(r[1])) for r in rows]
    pts = [p for p in pts if p[0] >= after - 5]
    windows = []
    for i, (t0, e0) in enumerate(pts):
        later = [p for p in pts[i + 1:] if p[0] >= t0 + 10 - 1e-6]
        if later:
            windows.append(later[0][1] - e0)
    return windows


def test_c9_transport_and_liveness(capsys, tmp_path):
    parent_ok, child_ok, delivered = _two_sender_stress()

    kill_at = 5.0

    def kill_later(loop, proc):
        _signal_later(kill_at, proc.pid, signal.SIGKILL)

    out = tmp_path / "killed"
    run_campaign(CampaignConfig(mode=ADVERSARIAL, budget_secs=35, seed=9, out=str(out)), on_start=kill_later)
    windows = _windows_alive(out / "stats.csv", kill_at)
    summary = json.loads((out / "summary.json").read_text())

    def wedge(loop, proc):
        os.kill(proc.pid, signal.SIGSTOP)
        _signal_later(25, proc.pid, signal.SIGCONT)

    wedged = tmp_path / "wedged"
    run_campaign(CampaignConfig(mode=ADVERSARIAL, budget_secs=22, seed=9, out=str(wedged), shutdown_grace=2),
                 on_start=wedge)
    wedge_windows = _windows_alive(wedged / "stats.csv", 0)

    live = bool(windows) and min(windows) > 0 and bool(wedge_windows) and min(wedge_windows) > 0
    ok = parent_ok and child_ok and delivered == 10_000 and live and summary["ml_lost"]
    report(capsys, 9, ok, f"stress delivered {delivered}/10000 gap-free both senders={parent_ok and child_ok}; "
                          f"after kill min execs per 10s window {min(windows) if windows else None} "
                          f"over {len(windows)} windows, ml_lost={summary['ml_lost']}; wedged min "
                          f"{min(wedge_windows) if wedge_windows else None} over {len(wedge_windows)} windows")
    assert ok


# -- 10 ----------------------------------------------------------------------


def _pairwise_groups(sets):
    edges = sorted(set().union(*sets))
    label = {}
    groups = []
    for i, a in enumerate(edges):
        if a in label:
            continue
        group = [a]
        label[a] = len(groups)
        for b in edges[i + 1:]:
            if b not in label and all((a in s) == (b in s) for s in sets):
                group.append(b)
                label[b] = label[a]
        groups.append(group)
    return groups


def test_c10_condensation_oracle(capsys):
    rng = np.random.default_rng(10)
    mismatches = 0
    for _ in range(50):
        n = int(rng.integers(1, 30))
        universe = int(rng.integers(1, 80))
        density = float(rng.uniform(0.05, 0.6))
        sets = [set(np.flatnonzero(rng.random(universe) < density).tolist()) for _ in range(n)]
        if not any(sets):
            sets[0].add(0)
        space = build_label_space([sorted(s) for s in sets])
        mismatches += [g.tolist() for g in space.groups] != _pairwise_groups(sets)
    ok = mismatches == 0
    report(capsys, 10, ok, f"50 random corpora, {mismatches} mismatches against the pairwise oracle")
    assert ok
