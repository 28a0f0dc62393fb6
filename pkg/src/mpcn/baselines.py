"""Interaction-only baselines: biased MF, FM over [p_u; q_i], and a pyramidal MLP."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import BaselineConfig
from .model import RatingModel, _init, fm_predict


class _IdModel(RatingModel):
    def __init__(self, config: BaselineConfig, n_users: int, n_items: int,
                 rating_mean: float = 0.0, seed: int = 0):
        super().__init__()
        self.config = config.validate()
        self.n_users = n_users
        self.n_items = n_items
        self.rating_mean = float(rating_mean)
        rng = np.random.default_rng(seed)
        dt, d = self.config.dtype, self.config.d
        self.add_param("P", _init(rng, (n_users, d), 0.1, dt))
        self.add_param("Q", _init(rng, (n_items, d), 0.1, dt))
        self._build(rng, rating_mean)

    @classmethod
    def for_dataset(cls, config: BaselineConfig, ds, seed: int = 0):
        return cls(config, len(ds.user_banks), len(ds.item_banks), ds.train_mean(), seed)

    def _build(self, rng, rating_mean):
        raise NotImplementedError

    def _lookup(self, users, items) -> tuple[Tensor, Tensor]:
        users, items = np.asarray(users), np.asarray(items)
        if users.size and (users.min() < 0 or users.max() >= self.n_users):
            raise KeyError("unknown user id")
        if items.size and (items.min() < 0 or items.max() >= self.n_items):
            raise KeyError("unknown item id")
        return ad.take(self.params["P"], users), ad.take(self.params["Q"], items)

    def predict(self, batch, training: bool = False, rng=None) -> Tensor:
        return self.score(batch.user, batch.item, training, rng)


class MF(_IdModel):
    """p_u . q_i + b_u + b_i + global mean (biases optional)."""

    kind = "mf"

    def _build(self, rng, rating_mean):
        if self.config.mf_bias:
            dt = self.config.dtype
            self.add_param("bu", np.zeros(self.n_users, dt))
            self.add_param("bi", np.zeros(self.n_items, dt))

    def score(self, users, items, training=False, rng=None) -> Tensor:
        p, q = self._lookup(users, items)
        out = ad.sum(ad.mul(p, q), axis=-1)
        if self.config.mf_bias:
            out = ad.add(out, ad.take(self.params["bu"], np.asarray(users)))
            out = ad.add(out, ad.take(self.params["bi"], np.asarray(items)))
            out = ad.add(out, self.rating_mean)
        return out


class FMBaseline(_IdModel):
    kind = "fm"

    def _build(self, rng, rating_mean):
        dt, n = self.config.dtype, 2 * self.config.d
        self.add_param("fm.w0", np.asarray(rating_mean, dt))
        self.add_param("fm.w", _init(rng, (n,), 0.01, dt))
        self.add_param("fm.v", _init(rng, (n, self.config.fm_factors), 0.01, dt))

    def score(self, users, items, training=False, rng=None) -> Tensor:
        p, q = self._lookup(users, items)
        P = self.params
        return fm_predict(ad.concat([p, q], -1), P["fm.w0"], P["fm.w"], P["fm.v"])


class MLP(_IdModel):
    """[p_u; q_i] -> 2d -> d -> d/2 -> 1 with ReLU between layers."""

    kind = "mlp"

    def _build(self, rng, rating_mean):
        dt, d = self.config.dtype, self.config.d
        widths = [2 * d, d, d // 2]
        for n, (a, b) in enumerate(zip(widths, widths[1:] + [1])):
            self.add_param(f"mlp.W{n}", _init(rng, (a, b), np.sqrt(2.0 / a), dt))
            self.add_param(f"mlp.b{n}", np.full(b, rating_mean if b == 1 else 0.0, dt))

    def score(self, users, items, training=False, rng=None) -> Tensor:
        p, q = self._lookup(users, items)
        P = self.params
        h = ad.concat([p, q], -1)
        for n in range(3):
            h = ad.add(ad.matmul(h, P[f"mlp.W{n}"]), P[f"mlp.b{n}"])
            if n < 2:
                h = ad.dropout(ad.relu(h), self.config.dropout, training, rng)
        return ad.reshape(h, h.shape[:-1])


BASELINES = {"mf": MF, "fm": FMBaseline, "mlp": MLP}
