"""Pointer-behaviour statistics and affinity-matrix export for trained models."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Batch, batch_iter
from .errors import ConfigError

CONDITIONS = ("all_unique", "one_repeated", "all_repeated", "one_to_many")


def classify_pointers(pairs: list[tuple[int, int]]) -> dict[str, bool]:
    """Bucket one example's (user review, item review) pointer pairs.

    ``all_unique``, ``one_repeated`` and ``all_repeated`` partition the
    examples: no index repeats on either side; every head picked the same
    pair; anything in between. ``one_to_many`` is an independent flag set
    when some review on one side is paired with two or more distinct reviews
    on the other.
    """
    if len(pairs) < 2:
        raise ConfigError("pointer conditions need at least two pointers")
    users = [a for a, _ in pairs]
    items = [b for _, b in pairs]
    n = len(pairs)
    all_unique = len(set(users)) == n and len(set(items)) == n
    all_repeated = len(set(pairs)) == 1
    partners_a, partners_b = defaultdict(set), defaultdict(set)
    for a, b in pairs:
        partners_a[a].add(b)
        partners_b[b].add(a)
    one_to_many = any(len(v) >= 2 for v in partners_a.values()) or \
        any(len(v) >= 2 for v in partners_b.values())
    return {
        "all_unique": all_unique,
        "one_repeated": not all_unique and not all_repeated,
        "all_repeated": all_repeated,
        "one_to_many": one_to_many,
    }


@dataclass
class PointerBehaviorReport:
    n_pointers: int
    n_samples: int
    all_unique: float
    one_repeated: float
    all_repeated: float
    one_to_many: float
    note: str = ("conditions all_unique/one_repeated/all_repeated partition the sample; "
                 "one_to_many is an overlapping flag")

    def to_dict(self) -> dict:
        return asdict(self)


def trace_examples(model, examples: Batch, batch_size: int = 256, keep_matrices: bool = False):
    """Deterministic evaluation-mode traces for every example, in order."""
    for batch in batch_iter(examples, batch_size):
        _, trace = model.forward(batch.user, batch.item, training=False, keep_matrices=keep_matrices)
        for n in range(len(batch)):
            yield batch.rows[n], trace.example(n)


def pointer_behavior(model, ds, sample_size: int = 1000, seed: int = 0, part: str = "test") -> PointerBehaviorReport:
    """Percentages of sampled held-out pairs falling under each pointer condition."""
    if model.n_heads < 2:
        raise ConfigError("pointer behaviour needs n_pointers >= 2")
    ex = ds.examples(part)
    if len(ex) == 0:
        raise ValueError(f"no {part} examples")
    rng = np.random.default_rng(seed)
    take = np.sort(rng.choice(len(ex), size=min(sample_size, len(ex)), replace=False))
    ex = Batch(ex.user[take], ex.item[take], ex.rating[take], ex.rows[take])
    counts = dict.fromkeys(CONDITIONS, 0)
    n = 0
    for _, tr in trace_examples(model, ex):
        for k, v in classify_pointers(tr.pointers).items():
            counts[k] += int(v)
        n += 1
    pct = {k: 100.0 * v / n for k, v in counts.items()}
    return PointerBehaviorReport(model.n_heads, n, **pct)


def export_traces(model, ds, part: str, path, with_matrices: bool = False) -> int:
    """Write one JSON line per example: ids, per-head pointers, optionally affinities."""
    inter = ds.split.interactions
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row, tr in trace_examples(model, ds.examples(part), keep_matrices=with_matrices):
            rec = {
                "user_id": inter[row].user_id,
                "item_id": inter[row].item_id,
                "pointers": [{"pa": a, "pb": b} for a, b in tr.pointers],
            }
            if with_matrices:
                rec["s_matrices"] = tr.s.tolist()
            fh.write(json.dumps(rec) + "\n")
            count += 1
    return count


def export_affinity(model, ds, user_id: str, item_id: str, out_dir) -> list[Path]:
    """One CSV per head with the review-level affinity matrix, plus ``pointers.json``.

    Masked rows and columns appear as the -1e9 sentinel. ``pointers.json``
    lists the selected indices and the pointed review texts.
    """
    if user_id not in ds.user_banks.index:
        raise KeyError(f"unknown user {user_id!r}")
    if item_id not in ds.item_banks.index:
        raise KeyError(f"unknown item {item_id!r}")
    if not model.config.use_review_coattention:
        raise ConfigError("model has no review-level co-attention to export")
    u, i = ds.user_banks.index[user_id], ds.item_banks.index[item_id]
    _, trace = model.forward(np.array([u]), np.array([i]), training=False, keep_matrices=True)
    tr = trace.example(0)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for h, s in enumerate(tr.s):
        path = out / f"head{h}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows([[repr(float(x)) for x in row] for row in s])
        files.append(path)
    inter = ds.split.interactions

    def text(banks, owner, idx):
        src = int(banks.source[owner, idx])
        return inter[src].review_text if src >= 0 else None

    meta = {
        "user_id": user_id,
        "item_id": item_id,
        "pointers": [
            {"head": h, "pa": a, "pb": b,
             "user_review": text(ds.user_banks, u, a), "item_review": text(ds.item_banks, i, b)}
            for h, (a, b) in enumerate(tr.pointers)
        ],
    }
    path = out / "pointers.json"
    path.write_text(json.dumps(meta, indent=2), encoding="utf-8")
    files.append(path)
    return files


def read_affinity_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        return np.array([[float(x) for x in row] for row in csv.reader(fh)])
