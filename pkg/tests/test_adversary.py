import numpy as np
import pytest

from advfuzz.adversary import (
    AttackConfig,
    CorpusSnapshot,
    attack_batch,
    fgsm_attack,
    footprint,
    jsma_attack,
    saliency,
)
from advfuzz.codec import encode_input
from advfuzz.surrogate import forward, init_model


def test_saliency_examples(nprng):
    assert np.all(saliency(np.array([-1.0, -2.0, -0.5]), 3).scores == 0)
    smap = saliency(np.array([3.0, -1.0, 2.0]), 2)
    assert smap.scores.tolist() == [3.0, 0.0, 0.0]
    for _ in range(50):
        g = nprng.normal(size=20)
        n = int(nprng.integers(1, 21))
        smap = saliency(g, n)
        assert np.all(smap.scores[n:] == 0)
        best = smap.best()
        if (g[:n] > 0).any():
            assert best[0] == int(np.argmax(np.where(g[:n] > 0, g[:n], -np.inf)))
        else:
            assert best.size == 0
    with pytest.raises(ValueError):
        saliency(np.zeros(3), 4)


def test_config_validation():
    for bad in (dict(theta=0), dict(theta=1.5), dict(max_iters=0), dict(success_threshold=0.4),
                dict(success_threshold=1.0), dict(n_targets=0), dict(features_per_iter=0)):
        with pytest.raises(ValueError):
            AttackConfig(**bad)


def _linear(width, row, bias):
    m = init_model([width, 1], seed=0)
    m.weights[0][:] = 0
    m.weights[0][:, 0] = row
    m.biases[0][:] = bias
    return m


def test_already_confident_is_immediate_success():
    m = _linear(4, [0, 0, 0, 0], 10.0)
    res = jsma_attack(m, b"ab", 0, AttackConfig())
    assert res.status == "success" and res.iters == 0 and res.candidate == b"ab"


def test_zero_gradient_stalls():
    m = _linear(4, [0, 0, 0, 0], -5.0)
    res = jsma_attack(m, b"ab", 0, AttackConfig())
    assert res.status == "stalled" and res.iters == 0


def test_linear_walk_matches_arithmetic():
    # logit = 10*x0 - 5; success needs sigmoid > 0.9, i.e. x0 > (5 + ln 9) / 10
    m = _linear(3, [10.0, 0.0, 0.0], -5.0)
    cfg = AttackConfig(theta=0.25)
    need = (5 + np.log(9)) / 10
    expected = int(np.floor(need / 0.25)) + 1
    res = jsma_attack(m, b"\x00\x00", 0, cfg)
    assert res.status == "success" and res.iters == expected
    assert res.candidate == bytes([round(min(expected * 0.25, 1) * 255), 0])


def test_linear_logit_monotone():
    m = _linear(6, [1.0, 3.0, -2.0, 0.5, 2.0, 0.0], -30.0)
    x = encode_input(b"\x10\x20\x30\x40\x50", 6).values
    cfg = AttackConfig(max_iters=1)
    prev = forward(m, x)[0][0]
    seed = b"\x10\x20\x30\x40\x50"
    for _ in range(8):
        res = jsma_attack(m, seed, 0, cfg)
        if res.candidate == seed:
            break
        cur = forward(m, encode_input(res.candidate, 6).values)[0][0]
        assert cur > prev
        prev, seed = cur, res.candidate


def test_out_of_range_label():
    m = _linear(3, [1.0, 0, 0], 0.0)
    with pytest.raises(IndexError):
        jsma_attack(m, b"a", 1, AttackConfig())
    with pytest.raises(ValueError):
        jsma_attack(m, b"", 0, AttackConfig())


def test_fgsm_examples():
    m = _linear(4, [0, 0, 0, 0], 0.0)
    assert fgsm_attack(m, b"ab", 0, 0.3) == b"ab\x00\x00"
    m = _linear(4, [1, 1, 1, 1], 0.0)
    assert fgsm_attack(m, b"ab", 0, 1.0) == b"\xff" * 4
    with pytest.raises(ValueError):
        fgsm_attack(m, b"ab", 0, 0.0)


def test_footprint():
    assert footprint(b"ab", b"ab", 8) == 0.0
    assert footprint(b"ab", b"ac\x01\x00", 4) == 0.5


def test_attack_batch_empty_and_single(goat_surrogate, goat_corpus):
    model, space, _ = goat_surrogate
    empty = CorpusSnapshot([], [], [], goat_corpus.glob.frequency.copy())
    assert attack_batch(model, empty, space, AttackConfig()) == []
    snap = CorpusSnapshot.from_corpus(goat_corpus)
    cands = attack_batch(model, snap, space, AttackConfig(n_targets=1))
    assert len(cands) <= 1


def test_attack_batch_candidates_are_masked(goat_surrogate, goat_corpus):
    model, space, _ = goat_surrogate
    snap = CorpusSnapshot.from_corpus(goat_corpus)
    by_id = dict(zip(snap.ids, snap.inputs))
    for c in attack_batch(model, snap, space, AttackConfig(n_targets=20)):
        seed = by_id[c.seed_id]
        assert len(c.data) == len(seed) and c.data != seed
        assert c.status in ("success", "exhausted", "stalled")
        assert c.source == "adv"
