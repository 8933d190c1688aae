import random

import numpy as np
import pytest

from advfuzz.codec import build_label_space, encode_batch, label_matrix
from advfuzz.corpus import Corpus
from advfuzz.orchestrator import CampaignConfig, FuzzLoop
from advfuzz.surrogate import new_model, train
from advfuzz.targets import get_target


@pytest.fixture(scope="session")
def goat():
    return get_target("goat")


@pytest.fixture(scope="session")
def goat_corpus():
    """Queue of a short deterministic baseline run on the goat."""
    corpus = Corpus()
    FuzzLoop(CampaignConfig(budget_execs=20_000, seed=0), corpus).run()
    return corpus


@pytest.fixture(scope="session")
def goat_surrogate(goat_corpus):
    inputs = [e.input for e in goat_corpus.entries]
    edges = [e.edges for e in goat_corpus.entries]
    space = build_label_space(edges)
    width = max(len(d) for d in inputs)
    model = new_model(width, space.n_labels, seed=0)
    metrics = train(model, encode_batch(inputs, width), label_matrix(edges, space), seed=0)
    return model, space, metrics


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)
