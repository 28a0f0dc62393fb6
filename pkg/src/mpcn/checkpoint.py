"""Versioned checkpoints: model kind, config, metadata and a flat list of named arrays."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines import BASELINES
from .config import BaselineConfig, MpcnConfig
from .errors import CheckpointError
from .model import MPCN

CHECKPOINT_VERSION = 1


def dataset_fingerprint(ds) -> str:
    """Digest of the vocabulary and bank owners a model was trained against."""
    h = hashlib.sha256()
    for part in (ds.vocab.itos, ds.user_banks.owner_ids, ds.item_banks.owner_ids):
        h.update(json.dumps(part).encode())
    return h.hexdigest()[:16]


def to_json(model, ds=None, meta: dict | None = None) -> str:
    params = [
        {"name": name, "shape": list(p.shape), "dtype": str(p.dtype),
         "data": p.data.reshape(-1).tolist()}
        for name, p in model.params.items()
    ]
    obj = {
        "format_version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "config": asdict(model.config),
        "fingerprint": dataset_fingerprint(ds) if ds is not None else None,
        "meta": meta or {},
        "params": params,
    }
    return json.dumps(obj, separators=(",", ":"))


def save(model, path, ds=None, meta: dict | None = None) -> None:
    Path(path).write_text(to_json(model, ds, meta), encoding="utf-8")


def read(path) -> dict:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint format {obj.get('format_version')}, "
                              f"expected {CHECKPOINT_VERSION}")
    return obj


def build_model(kind: str, config: dict, ds, seed: int = 0):
    if kind == "mpcn":
        return MPCN.for_dataset(MpcnConfig(**config), ds, seed)
    if kind in BASELINES:
        return BASELINES[kind].for_dataset(BaselineConfig(**config), ds, seed)
    raise CheckpointError(f"unknown model kind {kind!r}")


def load(path, ds):
    """Rebuild the model stored at ``path`` against dataset ``ds``.

    Returns ``(model, metadata)``; raises :class:`CheckpointError` when the
    dataset, names or shapes do not match.
    """
    obj = read(path)
    fp = obj.get("fingerprint")
    if fp is not None and fp != dataset_fingerprint(ds):
        raise CheckpointError(f"{path}: checkpoint was trained on a different snapshot")
    model = build_model(obj["kind"], obj["config"], ds)
    stored = {p["name"]: p for p in obj["params"]}
    if list(stored) != list(model.params):
        raise CheckpointError(f"{path}: parameter names differ from the model layout")
    for name, p in model.params.items():
        entry = stored[name]
        if tuple(entry["shape"]) != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {entry['shape']}, model expects {p.shape}")
        p.data[...] = np.asarray(entry["data"], dtype=p.dtype).reshape(p.shape)
    return model, obj["meta"]
