"""Adam, the MSE + L2 objective, and the early-stopping training loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .config import TrainConfig
from .data import Batch, batch_iter
from .errors import NumericError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on ``params[name].data``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NumericError(f"gradient of {name!r} has {bad} non-finite entries")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= update.astype(p.data.dtype, copy=False)


def evaluate_mse(model, examples: Batch, batch_size: int = 512) -> float:
    """Mean squared error in evaluation mode (no dropout, noise-free pointers)."""
    if len(examples) == 0:
        raise ValueError("cannot evaluate on an empty set")
    total = 0.0
    for batch in batch_iter(examples, batch_size):
        pred = model.predict(batch, training=False).data.astype(np.float64)
        total += float(np.sum((pred - batch.rating) ** 2))
    return total / len(examples)


def objective(model, batch: Batch, l2: float, rng, exclude=()) -> tuple:
    """MSE + l2 * ||theta||^2 over the regularised parameters."""
    pred = model.predict(batch, training=True, rng=rng)
    data_loss = ad.mse(pred, batch.rating)
    reg = [p for n, p in model.params.items() if n not in exclude]
    if l2 > 0 and reg:
        return ad.add(data_loss, ad.scale(ad.sum_of_squares(reg), l2)), data_loss
    return data_loss, data_loss


@dataclass
class TrainResult:
    best_epoch: int
    best_dev_mse: float
    history: list[dict]
    stopped_early: bool
    best_params: dict[str, np.ndarray]


def train(model, train_examples: Batch, dev_examples: Batch | None, config: TrainConfig,
          history_path=None) -> TrainResult:
    """Train with Adam and early stopping; the model ends holding the best-dev parameters.

    Without dev examples the training MSE drives model selection. Each epoch
    appends ``{epoch, train_mse, dev_mse, wall_ms, lr}`` to ``history_path``
    when given.
    """
    config.validate()
    if len(train_examples) == 0:
        raise ValueError("empty training set")
    shuffle_rng, model_rng = ad.spawn(config.seed, 2)
    state = AdamState(config.beta1, config.beta2, config.eps)
    history: list[dict] = []
    best = (np.inf, 0, None)
    stopped = False
    fh = open(history_path, "w", encoding="utf-8") if history_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            t0 = time.perf_counter()
            sq, n = 0.0, 0
            for batch in batch_iter(train_examples, config.batch_size, shuffle_rng):
                model.zero_grad()
                with Tape() as tape:
                    loss, data_loss = objective(model, batch, config.l2, model_rng, config.l2_exclude)
                tape.backward(loss)
                grads = {k: p.grad for k, p in model.params.items() if p.grad is not None}
                adam_step(model.params, grads, state, config.lr)
                sq += float(data_loss.data) * len(batch)
                n += len(batch)
            train_mse = sq / n
            if dev_examples is not None and len(dev_examples):
                dev_mse = evaluate_mse(model, dev_examples)
            else:
                dev_mse = evaluate_mse(model, train_examples)
            wall = round((time.perf_counter() - t0) * 1000) if config.record_wall_time else None
            rec = {"epoch": epoch, "train_mse": train_mse, "dev_mse": dev_mse, "wall_ms": wall, "lr": config.lr}
            history.append(rec)
            if fh:
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
            logger.info("epoch %d train %.4f dev %.4f", epoch, train_mse, dev_mse)
            if dev_mse < best[0]:
                best = (dev_mse, epoch, {k: p.data.copy() for k, p in model.params.items()})
            elif epoch - best[1] >= config.patience:
                stopped = True
                break
    finally:
        if fh:
            fh.close()
    for k, arr in best[2].items():
        model.params[k].data[...] = arr
    return TrainResult(best[1], best[0], history, stopped, best[2])


def read_history(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
