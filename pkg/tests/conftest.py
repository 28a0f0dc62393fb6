from pathlib import Path

import numpy as np
import pytest

from mpcn import data
from mpcn.config import MpcnConfig
from mpcn.model import MPCN
from mpcn.synthetic import planted_corpus, planted_model

DATA_DIR = Path(__file__).parent / "data"
FIXTURE = DATA_DIR / "fixture20.jsonl"


def random_banks(rng, n_owners, n_reviews, n_words, vocab, empty_reviews=0.3, fill=0.7):
    """Token banks with some padded reviews and ragged word lengths."""
    tokens = np.zeros((n_owners, n_reviews, n_words), dtype=np.int64)
    mask = rng.random((n_owners, n_reviews)) > empty_reviews
    mask[:, 0] |= ~mask.any(axis=1)
    for o in range(n_owners):
        for r in np.flatnonzero(mask[o]):
            length = max(1, int(rng.binomial(n_words, fill)))
            tokens[o, r, :length] = rng.integers(2, vocab, size=length)
    return tokens, mask


def small_mpcn(seed=0, n_owners=4, n_reviews=4, n_words=5, vocab=12, precision=64, **overrides):
    cfg = dict(d=6, n_pointers=3, layers=1, aggregation="neural", fm_factors=3, dropout=0.0,
               precision=precision)
    cfg.update(overrides)
    rng = np.random.default_rng(seed)
    ut, ur = random_banks(rng, n_owners, n_reviews, n_words, vocab)
    it, ir = random_banks(rng, n_owners, n_reviews, n_words, vocab)
    return MPCN(MpcnConfig(**cfg), vocab, ut, ur, it, ir, rating_mean=3.5, seed=seed)


def randomize(model, seed=0, scale=0.5):
    """Move every parameter away from its initial values (avoids near-zero gradients)."""
    rng = np.random.default_rng(seed)
    for p in model.params.values():
        p.data[...] = rng.normal(0, scale, p.shape)


def planted_pairs(n=64, n_users=16, n_items=16, seed=0):
    """``n`` distinct (user, item) pairs rated by a planted biased-MF model."""
    rng = np.random.default_rng(seed)
    flat = rng.choice(n_users * n_items, size=n, replace=False)
    users, items = flat // n_items, flat % n_items
    truth = planted_model(n_users, n_items, seed=seed)
    ratings = np.array([truth.rating(u, i) for u, i in zip(users, items)])
    return data.Batch(users, items, ratings, np.arange(n))


@pytest.fixture(scope="session")
def fixture_dataset():
    inter, _ = data.parse_corpus(FIXTURE)
    return data.prepare(inter, k=4, seed=0)


@pytest.fixture(scope="session")
def planted_dataset():
    inter, _ = planted_corpus(n_users=60, n_items=30, per_user=(6, 9), background_vocab=100, seed=5)
    return data.prepare(inter, k=5, seed=5, min_count=3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
