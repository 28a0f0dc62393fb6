"""Planted-model review corpora for tests, demos and scaled experiments.

Ratings come from a biased matrix-factorization model. Review text mixes
sentiment words tied to the rating, aspect words tied to the item's latent
factors, taste words tied to the user's factors, and filler, so a
text-only model has real signal to find.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Interaction

SENTIMENT = {
    1: ["terrible", "awful", "broke", "refund", "worst", "useless"],
    2: ["disappointing", "poor", "flimsy", "meh", "mediocre", "lacking"],
    3: ["okay", "average", "decent", "fine", "acceptable", "fair"],
    4: ["good", "nice", "solid", "happy", "recommend", "pleased"],
    5: ["excellent", "amazing", "love", "perfect", "fantastic", "superb"],
}
ASPECTS = [
    (["battery", "charge", "power"], ["screen", "display", "bright"]),
    (["sound", "bass", "loud"], ["quiet", "soft", "calm"]),
    (["fast", "speed", "quick"], ["sturdy", "durable", "solid"]),
    (["cheap", "price", "value"], ["premium", "luxury", "quality"]),
    (["spicy", "flavor", "bold"], ["sweet", "mild", "smooth"]),
    (["design", "style", "color"], ["simple", "plain", "basic"]),
]
FILLER = ["the", "a", "it", "this", "was", "is", "and", "i", "for", "with", "my", "of",
          "product", "item", "bought", "use", "after", "really", "very", "just"]
_SYLLABLES = ["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "do", "gu", "ri", "ba", "fe"]


def background_words(n: int, seed: int = 0) -> list[str]:
    """``n`` distinct pseudo-words standing in for a natural long-tail vocabulary."""
    rng = np.random.default_rng(seed)
    words: list[str] = []
    seen = set(FILLER)
    while len(words) < n:
        w = "".join(rng.choice(_SYLLABLES, size=int(rng.integers(2, 4))))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


@dataclass
class PlantedModel:
    global_mean: float
    user_bias: np.ndarray
    item_bias: np.ndarray
    user_factors: np.ndarray
    item_factors: np.ndarray

    def rating(self, u: int, i: int) -> float:
        r = (self.global_mean + self.user_bias[u] + self.item_bias[i]
             + self.user_factors[u] @ self.item_factors[i])
        return float(np.clip(r, 1.0, 5.0))


def planted_model(n_users: int, n_items: int, n_factors: int = 3, seed: int = 0) -> PlantedModel:
    rng = np.random.default_rng(seed)
    return PlantedModel(
        3.6,
        rng.normal(0, 0.4, n_users),
        rng.normal(0, 0.5, n_items),
        rng.normal(0, 0.6, (n_users, n_factors)),
        rng.normal(0, 0.6, (n_items, n_factors)),
    )


def _review(rng, rating: float, uf: np.ndarray, itf: np.ndarray, length: int,
            background: list[str], zipf: np.ndarray) -> str:
    level = int(np.clip(np.rint(rating), 1, 5))
    words = []
    for _ in range(length):
        r = rng.random()
        if r < 0.25:
            words.append(rng.choice(SENTIMENT[level]))
        elif r < 0.5:
            k = rng.integers(len(itf))
            pos, neg = ASPECTS[k % len(ASPECTS)]
            words.append(rng.choice(pos if itf[k] > 0 else neg))
        elif r < 0.6:
            k = rng.integers(len(uf))
            pos, neg = ASPECTS[(k + 3) % len(ASPECTS)]
            words.append(rng.choice(pos if uf[k] > 0 else neg))
        elif r < 0.8 or not background:
            words.append(rng.choice(FILLER))
        else:
            words.append(background[rng.choice(len(background), p=zipf)])
    return " ".join(words)


def planted_corpus(
    n_users: int = 600,
    n_items: int = 250,
    per_user: tuple[int, int] = (6, 12),
    n_factors: int = 3,
    integer_ratings: bool = True,
    review_length: tuple[int, int] = (12, 40),
    background_vocab: int = 3000,
    rating_noise: float = 0.8,
    seed: int = 0,
) -> tuple[list[Interaction], PlantedModel]:
    """Interactions whose ratings and review texts follow a planted model.

    Items are drawn with a mild popularity skew, each user rates a random
    number of distinct items within ``per_user``, timestamps increase per
    user, and each rating gets Gaussian noise of scale ``rating_noise``
    before rounding. A fifth of the tokens come from a Zipf-distributed background
    vocabulary of ``background_vocab`` pseudo-words.
    """
    model = planted_model(n_users, n_items, n_factors, seed)
    rng = np.random.default_rng(seed + 1)
    pop = rng.pareto(2.0, n_items) + 1
    pop /= pop.sum()
    background = background_words(background_vocab, seed)
    zipf = 1.0 / np.arange(1, background_vocab + 1)
    zipf /= zipf.sum()
    out: list[Interaction] = []
    for u in range(n_users):
        n = int(rng.integers(per_user[0], per_user[1] + 1))
        items = rng.choice(n_items, size=min(n, n_items), replace=False, p=pop)
        t = int(rng.integers(1_300_000_000, 1_400_000_000))
        for i in items:
            r = model.rating(u, int(i)) + rng.normal(0, rating_noise)
            r = float(np.clip(np.rint(r) if integer_ratings else r, 1, 5))
            text = _review(rng, r, model.user_factors[u], model.item_factors[i],
                           int(rng.integers(review_length[0], review_length[1] + 1)),
                           background, zipf)
            t += int(rng.integers(3600, 90 * 86400))
            out.append(Interaction(f"u{u}", f"i{int(i)}", r, text, t))
    return out, model


def write_jsonl(interactions, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for it in interactions:
            fh.write(json.dumps({
                "user_id": it.user_id, "item_id": it.item_id, "rating": it.rating,
                "review_text": it.review_text, "timestamp": it.timestamp,
            }) + "\n")
