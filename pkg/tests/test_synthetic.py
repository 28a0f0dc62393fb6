import numpy as np

from mpcn import data
from mpcn.synthetic import background_words, planted_corpus, write_jsonl


def test_corpus_is_reproducible_and_well_formed(tmp_path):
    a, model = planted_corpus(n_users=30, n_items=20, background_vocab=50, seed=1)
    b, _ = planted_corpus(n_users=30, n_items=20, background_vocab=50, seed=1)
    assert a == b
    assert all(1 <= it.rating <= 5 and it.rating == int(it.rating) for it in a)
    assert len({(it.user_id, it.item_id) for it in a}) == len(a)
    path = tmp_path / "c.jsonl"
    write_jsonl(a, path)
    parsed, skipped = data.parse_corpus(path)
    assert parsed == a and skipped == 0


def test_timestamps_increase_per_user():
    rows, _ = planted_corpus(n_users=10, n_items=15, background_vocab=20, seed=2)
    last = {}
    for it in rows:
        assert it.timestamp > last.get(it.user_id, -1)
        last[it.user_id] = it.timestamp


def test_sentiment_words_track_the_rating():
    rows, _ = planted_corpus(n_users=80, n_items=40, background_vocab=50, seed=3)
    hi = np.mean([("excellent" in it.review_text or "love" in it.review_text) for it in rows if it.rating == 5])
    lo = np.mean([("excellent" in it.review_text or "love" in it.review_text) for it in rows if it.rating <= 2])
    assert hi > 0.5 > lo


def test_background_words_are_distinct():
    words = background_words(500, seed=0)
    assert len(set(words)) == 500
