"""Corpus ingestion, filtering, time split, vocabulary and review banks."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import CheckpointError, DataFormatError

logger = logging.getLogger(__name__)

PAD, UNK = 0, 1
MAX_REVIEWS = 20
MAX_WORDS = 30
MIN_TOKEN_COUNT = 10
SNAPSHOT_VERSION = 1

_FIELD_ALIASES = {
    "user_id": ("user_id", "reviewerID"),
    "item_id": ("item_id", "asin", "business_id"),
    "rating": ("rating", "overall", "stars"),
    "review_text": ("review_text", "reviewText", "text"),
    "timestamp": ("timestamp", "unixReviewTime"),
}
_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    rating: float
    review_text: str
    timestamp: int


def _lookup(obj: dict, name: str):
    for key in _FIELD_ALIASES[name]:
        if key in obj:
            return obj[key]
    raise KeyError(name)


def _parse_line(line: str) -> Interaction:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("not an object")
    rating = float(_lookup(obj, "rating"))
    if not math.isfinite(rating) or not 1 <= rating <= 5:
        raise ValueError(f"rating {rating} outside 1-5")
    text = _lookup(obj, "review_text")
    if not isinstance(text, str):
        raise ValueError("review text is not a string")
    ts = _lookup(obj, "timestamp")
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or not math.isfinite(ts):
        raise ValueError("timestamp is not numeric")
    return Interaction(str(_lookup(obj, "user_id")), str(_lookup(obj, "item_id")),
                       rating, text, int(ts))


def parse_corpus(path, max_bad_fraction: float = 0.1) -> tuple[list[Interaction], int]:
    """Read a JSON-lines review corpus.

    Returns the interactions in file order and the number of malformed lines
    that were skipped. Blank lines are ignored. Raises
    :class:`DataFormatError` when more than ``max_bad_fraction`` of the
    non-blank lines are malformed.
    """
    out: list[Interaction] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(_parse_line(line))
            except (ValueError, KeyError, TypeError) as exc:
                skipped += 1
                logger.debug("line %d skipped: %s", lineno, exc)
    total = len(out) + skipped
    if total and skipped / total > max_bad_fraction:
        raise DataFormatError(f"{path}: {skipped} of {total} lines malformed")
    if skipped:
        logger.warning("%s: skipped %d malformed lines", path, skipped)
    return out, skipped


def k_core_filter(interactions: Sequence[Interaction], k: int) -> list[Interaction]:
    """Maximal sub-list in which every user and item has at least ``k`` interactions."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    alive = [True] * len(interactions)
    by_user: dict[str, list[int]] = defaultdict(list)
    by_item: dict[str, list[int]] = defaultdict(list)
    for n, it in enumerate(interactions):
        by_user[it.user_id].append(n)
        by_item[it.item_id].append(n)
    ucount = {u: len(v) for u, v in by_user.items()}
    icount = {i: len(v) for i, v in by_item.items()}
    queue = [("u", u) for u, c in ucount.items() if c < k]
    queue += [("i", i) for i, c in icount.items() if c < k]
    removed = set(queue)
    while queue:
        side, key = queue.pop()
        rows = by_user[key] if side == "u" else by_item[key]
        for n in rows:
            if not alive[n]:
                continue
            alive[n] = False
            it = interactions[n]
            other = ("i", it.item_id) if side == "u" else ("u", it.user_id)
            counts = icount if side == "u" else ucount
            counts[other[1]] -= 1
            if counts[other[1]] < k and other not in removed:
                removed.add(other)
                queue.append(other)
    return [it for it, keep in zip(interactions, alive) if keep]


def sample_users(interactions: Sequence[Interaction], n_users: int, seed: int) -> list[Interaction]:
    """Keep all interactions of ``n_users`` users drawn uniformly with ``seed``."""
    users = sorted({it.user_id for it in interactions})
    if n_users >= len(users):
        return list(interactions)
    rng = np.random.default_rng(seed)
    keep = set(rng.choice(users, size=n_users, replace=False).tolist())
    return [it for it in interactions if it.user_id in keep]


@dataclass
class DatasetSplit:
    """Interactions plus index lists of the train/dev/test parts (input order)."""

    interactions: list[Interaction]
    train: list[int]
    dev: list[int]
    test: list[int]

    def part(self, name: str) -> list[int]:
        if name not in ("train", "dev", "test"):
            raise KeyError(name)
        return getattr(self, name)


def time_split(interactions: Sequence[Interaction]) -> DatasetSplit:
    """Per user: last interaction to test, penultimate to dev, the rest to train.

    Users with fewer than three interactions go entirely to train. Equal
    timestamps keep input order.
    """
    by_user: dict[str, list[int]] = defaultdict(list)
    for n, it in enumerate(interactions):
        by_user[it.user_id].append(n)
    role = ["train"] * len(interactions)
    for rows in by_user.values():
        if len(rows) < 3:
            continue
        rows = sorted(rows, key=lambda n: (interactions[n].timestamp, n))
        role[rows[-1]] = "test"
        role[rows[-2]] = "dev"
    parts = {"train": [], "dev": [], "test": []}
    for n, r in enumerate(role):
        parts[r].append(n)
    return DatasetSplit(list(interactions), parts["train"], parts["dev"], parts["test"])


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.itos[:2] != ["<pad>", "<unk>"]:
            raise ValueError("vocabulary must start with <pad>, <unk>")
        self.stoi = {t: n for n, t in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokenize(text)]


def build_vocab(train_interactions: Sequence[Interaction], min_count: int = MIN_TOKEN_COUNT) -> Vocabulary:
    """Tokens seen at least ``min_count`` times, most frequent first, ties alphabetical."""
    counts = Counter()
    for it in train_interactions:
        counts.update(tokenize(it.review_text))
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(["<pad>", "<unk>"] + kept)


@dataclass(frozen=True)
class ReviewBank:
    """One owner's capped review list; ``source`` holds interaction indices (-1 = padding)."""

    owner_id: str
    tokens: np.ndarray
    review_mask: np.ndarray
    source: np.ndarray

    @property
    def word_mask(self) -> np.ndarray:
        return self.tokens != PAD


@dataclass
class Banks:
    """Stacked review banks for one side (users or items)."""

    owner_ids: list[str]
    tokens: np.ndarray        # (owners, max_reviews, max_words) int
    review_mask: np.ndarray   # (owners, max_reviews) bool
    source: np.ndarray        # (owners, max_reviews) int, -1 where padded
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {o: n for n, o in enumerate(self.owner_ids)}

    def __len__(self) -> int:
        return len(self.owner_ids)

    def __getitem__(self, owner_id: str) -> ReviewBank:
        n = self.index[owner_id]
        return ReviewBank(owner_id, self.tokens[n], self.review_mask[n], self.source[n])

    @property
    def word_mask(self) -> np.ndarray:
        return self.tokens != PAD


def _bank_for(rows, encoded, interactions, max_reviews, max_words):
    tokens = np.zeros((max_reviews, max_words), dtype=np.int32)
    mask = np.zeros(max_reviews, dtype=bool)
    source = np.full(max_reviews, -1, dtype=np.int64)
    # newest first; among equal timestamps the later line counts as newer
    rows = sorted(rows, key=lambda n: (interactions[n].timestamp, n), reverse=True)
    slot = 0
    for n in rows:
        ids = encoded[n]
        if not ids:
            continue
        if slot == max_reviews:
            break
        ids = ids[:max_words]
        tokens[slot, :len(ids)] = ids
        mask[slot] = True
        source[slot] = n
        slot += 1
    return tokens, mask, source


def build_banks(split: DatasetSplit, vocab: Vocabulary,
                max_reviews: int = MAX_REVIEWS, max_words: int = MAX_WORDS) -> tuple[Banks, Banks]:
    """User and item review banks from training reviews only.

    Every user and item that occurs anywhere in the split gets a bank, empty
    when it has no training reviews. Reviews that tokenize to nothing are
    skipped.
    """
    inter = split.interactions
    encoded = {n: vocab.encode(inter[n].review_text) for n in split.train}
    users = sorted({it.user_id for it in inter})
    items = sorted({it.item_id for it in inter})
    per_user: dict[str, list[int]] = defaultdict(list)
    per_item: dict[str, list[int]] = defaultdict(list)
    for n in split.train:
        per_user[inter[n].user_id].append(n)
        per_item[inter[n].item_id].append(n)

    def stack(owners, groups):
        parts = [_bank_for(groups.get(o, []), encoded, inter, max_reviews, max_words) for o in owners]
        if not parts:
            return Banks([], np.zeros((0, max_reviews, max_words), np.int32),
                         np.zeros((0, max_reviews), bool), np.zeros((0, max_reviews), np.int64))
        t, m, s = zip(*parts)
        return Banks(list(owners), np.stack(t), np.stack(m), np.stack(s))

    return stack(users, per_user), stack(items, per_item)


@dataclass
class Batch:
    user: np.ndarray    # rows into the user banks
    item: np.ndarray    # rows into the item banks
    rating: np.ndarray
    rows: np.ndarray    # interaction indices

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class Dataset:
    """A prepared corpus: split, vocabulary and both bank sides."""

    split: DatasetSplit
    vocab: Vocabulary
    user_banks: Banks
    item_banks: Banks
    seed: int = 0
    k_core: int = 5

    def examples(self, part: str) -> Batch:
        rows = np.asarray(self.split.part(part), dtype=np.int64)
        inter = self.split.interactions
        return Batch(
            np.array([self.user_banks.index[inter[n].user_id] for n in rows], dtype=np.int64),
            np.array([self.item_banks.index[inter[n].item_id] for n in rows], dtype=np.int64),
            np.array([inter[n].rating for n in rows], dtype=np.float64),
            rows,
        )

    def train_mean(self) -> float:
        if not self.split.train:
            raise ValueError("empty training set")
        return float(np.mean([self.split.interactions[n].rating for n in self.split.train]))

    def stats(self) -> dict:
        return {
            "users": len(self.user_banks),
            "items": len(self.item_banks),
            "interactions": len(self.split.interactions),
            "train": len(self.split.train),
            "dev": len(self.split.dev),
            "test": len(self.split.test),
            "vocab": len(self.vocab),
        }


def batch_iter(examples: Batch, batch_size: int = 128, rng: np.random.Generator | None = None) -> Iterator[Batch]:
    """Minibatches over ``examples``; shuffled when ``rng`` is given, last batch may be short."""
    n = len(examples)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        sel = order[start:start + batch_size]
        yield Batch(examples.user[sel], examples.item[sel], examples.rating[sel], examples.rows[sel])


def prepare(interactions: Sequence[Interaction], k: int = 5, seed: int = 0,
            min_count: int = MIN_TOKEN_COUNT, max_reviews: int = MAX_REVIEWS,
            max_words: int = MAX_WORDS) -> Dataset:
    """k-core filter, time split, vocabulary and banks in one call."""
    kept = k_core_filter(interactions, k)
    if not kept:
        raise DataFormatError(f"no interactions survive the {k}-core filter")
    split = time_split(kept)
    vocab = build_vocab([split.interactions[n] for n in split.train], min_count)
    ub, ib = build_banks(split, vocab, max_reviews, max_words)
    return Dataset(split, vocab, ub, ib, seed=seed, k_core=k)


# ----------------------------------------------------------------------------
# snapshot I/O


def _banks_to_json(b: Banks) -> dict:
    return {
        "owner_ids": b.owner_ids,
        "tokens": b.tokens.tolist(),
        "review_mask": b.review_mask.astype(int).tolist(),
        "source": b.source.tolist(),
    }


def _banks_from_json(obj: dict) -> Banks:
    return Banks(list(obj["owner_ids"]),
                 np.asarray(obj["tokens"], dtype=np.int32),
                 np.asarray(obj["review_mask"], dtype=bool),
                 np.asarray(obj["source"], dtype=np.int64))


def dumps_snapshot(ds: Dataset) -> str:
    inter = ds.split.interactions
    obj = {
        "format_version": SNAPSHOT_VERSION,
        "seed": ds.seed,
        "k_core": ds.k_core,
        "interactions": [[it.user_id, it.item_id, it.rating, it.review_text, it.timestamp] for it in inter],
        "train": ds.split.train,
        "dev": ds.split.dev,
        "test": ds.split.test,
        "vocab": ds.vocab.itos,
        "user_banks": _banks_to_json(ds.user_banks),
        "item_banks": _banks_to_json(ds.item_banks),
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def save_snapshot(ds: Dataset, path) -> None:
    Path(path).write_text(dumps_snapshot(ds), encoding="utf-8")


def load_snapshot(path) -> Dataset:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    version = obj.get("format_version")
    if version != SNAPSHOT_VERSION:
        raise CheckpointError(f"{path}: snapshot format {version}, expected {SNAPSHOT_VERSION}")
    inter = [Interaction(u, i, float(r), t, int(ts)) for u, i, r, t, ts in obj["interactions"]]
    split = DatasetSplit(inter, list(obj["train"]), list(obj["dev"]), list(obj["test"]))
    return Dataset(split, Vocabulary(list(obj["vocab"])),
                   _banks_from_json(obj["user_banks"]), _banks_from_json(obj["item_banks"]),
                   seed=int(obj["seed"]), k_core=int(obj["k_core"]))


def leaked_reviews(ds: Dataset) -> list[tuple[int, str]]:
    """Dev/test interactions whose review is present in some bank.

    Checks bank provenance and, for reviews whose encoding no training review
    shares, whether that token sequence occurs in any bank row of either
    side. Returns ``(interaction index, side)``.
    """
    held_out = set(ds.split.dev) | set(ds.split.test)
    found = []
    for side, banks in (("user", ds.user_banks), ("item", ds.item_banks)):
        for n in np.unique(banks.source[banks.review_mask]):
            if int(n) in held_out:
                found.append((int(n), side))
    inter = ds.split.interactions
    width = ds.user_banks.tokens.shape[-1]
    train_seqs = {tuple(ds.vocab.encode(inter[n].review_text)[:width]) for n in ds.split.train}
    bank_rows = {}
    for side, banks in (("user", ds.user_banks), ("item", ds.item_banks)):
        for row in banks.tokens[banks.review_mask]:
            bank_rows.setdefault(tuple(int(t) for t in row[row != PAD]), side)
    for n in sorted(held_out):
        ids = tuple(ds.vocab.encode(inter[n].review_text)[:width])
        # a train review with the same encoding makes the text check ambiguous
        if not ids or ids in train_seqs:
            continue
        if ids in bank_rows:
            found.append((n, bank_rows[ids]))
    return found
