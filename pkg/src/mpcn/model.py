"""Multi-pointer co-attention rating model.

All functions work on a leading batch axis ``B``. Shapes used below:
``R`` reviews per bank, ``W`` words per review, ``d`` embedding size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import MASK_VALUE, Tensor
from .config import MpcnConfig
from .data import PAD
from .errors import ConfigError, ShapeError


class RatingModel:
    """Shared plumbing: a named, ordered parameter dict and a batched predictor."""

    kind = "base"

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} registered twice")
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def predict(self, batch, training: bool = False, rng=None) -> Tensor:
        raise NotImplementedError


def _init(rng, shape, scale, dtype):
    return (rng.standard_normal(shape) * scale).astype(dtype)


# ----------------------------------------------------------------------------
# building blocks


def feed_forward(x: Tensor, layers: list[tuple[Tensor, Tensor]], dropout=0.0, training=False, rng=None) -> Tensor:
    """Stack of ReLU(xW + b) layers; no layers means identity."""
    for W, b in layers:
        x = ad.relu(ad.add(ad.matmul(x, W), b))
        x = ad.dropout(x, dropout, training, rng)
    return x


def fm_predict(x: Tensor, w0: Tensor, w: Tensor, v: Tensor) -> Tensor:
    """Second-order factorization machine over the rows of ``x`` (B, n).

    Pairwise term via 0.5 * sum_f[(sum_i v_if x_i)^2 - sum_i v_if^2 x_i^2].
    """
    n = x.shape[-1]
    if w.shape != (n,) or v.shape[0] != n:
        raise ShapeError(f"fm: input width {n} vs w {w.shape}, v {v.shape}")
    linear = ad.reshape(ad.matmul(x, ad.reshape(w, (n, 1))), x.shape[:-1])
    xv = ad.matmul(x, v)
    x2v2 = ad.matmul(ad.square(x), ad.square(v))
    pair = ad.scale(ad.sum(ad.sub(ad.square(xv), x2v2), axis=-1), 0.5)
    return ad.add(ad.add(linear, pair), w0)


def fm_naive(x: np.ndarray, w0: float, w: np.ndarray, v: np.ndarray) -> float:
    """Direct O(k n^2) evaluation of the FM sum for a single vector."""
    total = w0 + float(np.dot(w, x))
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            total += float(np.dot(v[i], v[j])) * x[i] * x[j]
    return total


def embed_words(table: Tensor, tokens: np.ndarray) -> Tensor:
    """Word vectors of every token, zeroed at PAD: (..., W) -> (..., W, d)."""
    word_mask = (tokens != PAD)[..., None].astype(table.dtype)
    return ad.mul(ad.take(table, tokens), word_mask)


def embed_reviews(table: Tensor, tokens: np.ndarray) -> Tensor:
    """Each review as the sum of its word vectors: (B, R, W) -> (B, R, d)."""
    return ad.sum(embed_words(table, tokens), axis=-2)


def review_gate(x: Tensor, Wg: Tensor, bg: Tensor, Wu: Tensor, bu: Tensor, review_mask=None) -> Tensor:
    """sigmoid(x Wg + bg) * tanh(x Wu + bu) per review; masked rows stay zero."""
    gate = ad.sigmoid(ad.add(ad.matmul(x, Wg), bg))
    value = ad.tanh(ad.add(ad.matmul(x, Wu), bu))
    out = ad.mul(gate, value)
    if review_mask is not None:
        out = ad.mul(out, np.asarray(review_mask)[..., None].astype(x.dtype))
    return out


def affinity(a: Tensor, b: Tensor, M: Tensor, ff, mask_a=None, mask_b=None,
             dropout=0.0, training=False, rng=None) -> Tensor:
    """s_ij = F(a_i)^T M F(b_j), with entries touching a masked row/column set to -1e9."""
    fa = feed_forward(a, ff, dropout, training, rng)
    fb = feed_forward(b, ff, dropout, training, rng)
    s = ad.matmul(ad.matmul(fa, M), ad.swap_last(fb))
    if mask_a is not None or mask_b is not None:
        ma = np.ones(a.shape[:-1], bool) if mask_a is None else np.asarray(mask_a, bool)
        mb = np.ones(b.shape[:-1], bool) if mask_b is None else np.asarray(mask_b, bool)
        s = ad.where(ma[..., :, None] & mb[..., None, :], s, MASK_VALUE)
    return s


def select_pointers(s: Tensor, tau: float, rng=None, training: bool = False, hard: bool = True,
                    noise: tuple[np.ndarray, np.ndarray] | None = None,
                    mask_a=None, mask_b=None) -> tuple[Tensor, Tensor]:
    """Gumbel pointers over user reviews (row maxima) and item reviews (column maxima)."""
    live = s.data > MASK_VALUE / 2
    if not np.all(live.any(axis=(-1, -2))):
        raise ShapeError("select_pointers: affinity matrix is fully masked")
    pooled_a = ad.max(s, axis=-1)
    pooled_b = ad.max(s, axis=-2)
    na, nb = noise if noise is not None else (None, None)
    pa = ad.st_gumbel_softmax(pooled_a, tau, rng, hard=hard, training=training, noise=na, mask=mask_a)
    pb = ad.st_gumbel_softmax(pooled_b, tau, rng, hard=hard, training=training, noise=nb, mask=mask_b)
    return pa, pb


def gather_review(pointer: Tensor, words: Tensor) -> Tensor:
    """Word matrix of the pointed review as pointer x stacked bank: (B, R), (B, R, W, d) -> (B, W, d)."""
    return ad.einsum("br,brwd->bwd", pointer, words)


def word_coattention(a: Tensor, b: Tensor, M: Tensor, ff, mask_a, mask_b,
                     dropout=0.0, training=False, rng=None, return_weights=False):
    """Mean-pooled word-level co-attention between two selected reviews.

    ``mask_a``/``mask_b`` mark real words (B, W). Returns the attended
    vectors (B, d) for both sides and, optionally, the attention weights and
    the raw affinity matrix.
    """
    mask_a = np.asarray(mask_a, bool)
    mask_b = np.asarray(mask_b, bool)
    w = affinity(a, b, M, ff, dropout=dropout, training=training, rng=rng)
    dt = a.dtype
    cols = mask_b.astype(dt)[:, None, :]
    rows = mask_a.astype(dt)[:, :, None]
    mean_a = ad.mul(ad.sum(ad.mul(w, cols), axis=-1), (1.0 / mask_b.sum(-1, keepdims=True)).astype(dt))
    mean_b = ad.mul(ad.sum(ad.mul(w, rows), axis=-2), (1.0 / mask_a.sum(-1, keepdims=True)).astype(dt))
    att_a = ad.softmax(mean_a, -1, mask=mask_a)
    att_b = ad.softmax(mean_b, -1, mask=mask_b)
    out_a = ad.einsum("bw,bwd->bd", att_a, a)
    out_b = ad.einsum("bw,bwd->bd", att_b, b)
    if return_weights:
        return out_a, out_b, (att_a, att_b, w)
    return out_a, out_b


def aggregate_pointers(outputs: list[Tensor], sum_embedding: Tensor, scheme: str,
                       W: Tensor | None = None, b: Tensor | None = None,
                       dropout=0.0, training=False, rng=None) -> Tensor:
    """Combine per-pointer vectors plus the whole-bank sum embedding."""
    if scheme == "concat":
        return ad.concat(outputs + [sum_embedding], axis=-1)
    if scheme == "additive":
        total = sum_embedding
        for o in outputs:
            total = ad.add(total, o)
        return total
    if scheme == "neural":
        if W is None or b is None:
            raise ConfigError("neural aggregation needs W and b")
        h = ad.relu(ad.add(ad.matmul(ad.concat(outputs + [sum_embedding], axis=-1), W), b))
        return ad.dropout(h, dropout, training, rng)
    raise ConfigError(f"unknown aggregation scheme {scheme!r}")


def _fallback_first(mask: np.ndarray) -> np.ndarray:
    """Mark position 0 valid wherever a row has no valid position."""
    mask = np.array(mask, dtype=bool, copy=True)
    empty = ~mask.any(axis=-1)
    mask[empty, ..., 0] = True
    return mask


# ----------------------------------------------------------------------------
# the model


@dataclass
class ForwardTrace:
    """Pointer choices and affinity matrices for a batch."""

    pa: np.ndarray            # (B, H) user-review index per head
    pb: np.ndarray            # (B, H) item-review index per head
    s: np.ndarray | None      # (B, H, R, R) review-level affinities
    word: np.ndarray | None   # (B, H, W, W) word-level affinities

    def example(self, n: int) -> "PointerTrace":
        return PointerTrace(
            [(int(a), int(b)) for a, b in zip(self.pa[n], self.pb[n])],
            None if self.s is None else self.s[n],
            None if self.word is None else self.word[n],
        )


@dataclass
class PointerTrace:
    pointers: list[tuple[int, int]]
    s: np.ndarray | None
    word: np.ndarray | None


class MPCN(RatingModel):
    """Review-bank rating model with Gumbel review pointers and word co-attention.

    ``user_tokens``/``item_tokens`` are the stacked banks (owners, R, W) and
    ``*_review_mask`` their review validity bits; batches address them by row.
    """

    kind = "mpcn"

    def __init__(self, config: MpcnConfig, vocab_size: int, user_tokens, user_review_mask,
                 item_tokens, item_review_mask, rating_mean: float = 0.0, seed: int = 0):
        super().__init__()
        self.config = config.validate()
        self.vocab_size = vocab_size
        self.user_tokens = np.asarray(user_tokens)
        self.user_review_mask = np.asarray(user_review_mask, bool)
        self.item_tokens = np.asarray(item_tokens)
        self.item_review_mask = np.asarray(item_review_mask, bool)
        self._build(np.random.default_rng(seed), rating_mean)

    @classmethod
    def for_dataset(cls, config: MpcnConfig, ds, seed: int = 0) -> "MPCN":
        return cls(config, len(ds.vocab), ds.user_banks.tokens, ds.user_banks.review_mask,
                   ds.item_banks.tokens, ds.item_banks.review_mask, ds.train_mean(), seed)

    @property
    def n_heads(self) -> int:
        return self.config.n_pointers if self.config.use_review_coattention else 1

    def _build(self, rng, rating_mean):
        c, dt = self.config, self.config.dtype
        d = c.d
        xavier = np.sqrt(1.0 / d)
        self.add_param("embed", _init(rng, (self.vocab_size, d), 0.1, dt))
        if c.use_gates:
            self.add_param("gate.Wg", _init(rng, (d, d), xavier, dt))
            self.add_param("gate.bg", np.zeros(d, dt))
            self.add_param("gate.Wu", _init(rng, (d, d), xavier, dt))
            self.add_param("gate.bu", np.zeros(d, dt))
        if c.use_review_coattention:
            for h in range(c.n_pointers):
                self.add_param(f"head{h}.M", _init(rng, (d, d), xavier, dt))
                for j in range(c.layers):
                    self.add_param(f"head{h}.F{j}.W", _init(rng, (d, d), xavier, dt))
                    self.add_param(f"head{h}.F{j}.b", np.full(d, 0.01, dt))
        if c.use_word_coattention:
            self.add_param("word.M", _init(rng, (d, d), xavier, dt))
            for j in range(c.layers):
                self.add_param(f"word.F{j}.W", _init(rng, (d, d), xavier, dt))
                self.add_param(f"word.F{j}.b", np.full(d, 0.01, dt))
        parts = self.n_heads + 1
        if c.aggregation == "neural":
            self.add_param("agg.W", _init(rng, (parts * d, d), np.sqrt(1.0 / (parts * d)), dt))
            self.add_param("agg.b", np.full(d, 0.01, dt))
        out_dim = parts * d if c.aggregation == "concat" else d
        if c.use_fm:
            n = 2 * out_dim
            self.add_param("fm.w0", np.asarray(rating_mean, dt))
            self.add_param("fm.w", _init(rng, (n,), 0.01, dt))
            self.add_param("fm.v", _init(rng, (n, c.fm_factors), 0.01, dt))

    def _ff(self, prefix):
        return [(self.params[f"{prefix}.F{j}.W"], self.params[f"{prefix}.F{j}.b"])
                for j in range(self.config.layers)]

    def predict(self, batch, training: bool = False, rng=None) -> Tensor:
        return self.forward(batch.user, batch.item, training, rng)[0]

    def forward(self, user_rows, item_rows, training: bool = False, rng=None,
                pointer_mode: str = "hard", noise: np.ndarray | None = None,
                keep_matrices: bool = False) -> tuple[Tensor, ForwardTrace]:
        """Predict ratings for bank rows; see :meth:`forward_tokens`."""
        return self.forward_tokens(
            self.user_tokens[user_rows], self.user_review_mask[user_rows],
            self.item_tokens[item_rows], self.item_review_mask[item_rows],
            training, rng, pointer_mode, noise, keep_matrices)

    def forward_tokens(self, ut, ur, it, ir, training: bool = False, rng=None,
                       pointer_mode: str = "hard", noise: np.ndarray | None = None,
                       keep_matrices: bool = False) -> tuple[Tensor, ForwardTrace]:
        """Full forward pass over explicit banks.

        ``pointer_mode="soft"`` feeds the relaxed Gumbel-softmax weights
        forward instead of the one-hot pointers (training mode only), which
        makes the whole pass smooth for gradient checks. ``noise`` optionally
        fixes the Gumbel perturbations, shape (heads, 2, B, R).
        """
        if pointer_mode not in ("hard", "soft"):
            raise ConfigError(f"unknown pointer mode {pointer_mode!r}")
        c, P = self.config, self.params
        ut, it = np.asarray(ut), np.asarray(it)
        if ut.ndim != 3 or it.ndim != 3 or ut.shape[0] != it.shape[0]:
            raise ShapeError(f"banks must be (B, R, W); got {ut.shape} and {it.shape}")
        if ut.max(initial=0) >= self.vocab_size or it.max(initial=0) >= self.vocab_size:
            raise IndexError("token id outside the vocabulary")
        B = ut.shape[0]
        ur = _fallback_first(ur)
        ir = _fallback_first(ir)
        drop = c.dropout
        hard = pointer_mode == "hard"

        words_a = embed_words(P["embed"], ut)           # (B, R, W, d)
        words_b = embed_words(P["embed"], it)
        xa = ad.sum(words_a, axis=-2)                   # (B, R, d)
        xb = ad.sum(words_b, axis=-2)
        sum_a = ad.sum(xa, axis=-2)                     # (B, d)
        sum_b = ad.sum(xb, axis=-2)
        if c.use_gates:
            gate = (P["gate.Wg"], P["gate.bg"], P["gate.Wu"], P["gate.bu"])
            xa = ad.dropout(review_gate(xa, *gate, ur), drop, training, rng)
            xb = ad.dropout(review_gate(xb, *gate, ir), drop, training, rng)

        heads = self.n_heads
        pa_idx = np.zeros((B, heads), np.int64)
        pb_idx = np.zeros((B, heads), np.int64)
        s_keep = [] if keep_matrices else None
        w_keep = [] if keep_matrices and c.use_word_coattention else None
        out_a, out_b = [], []
        for h in range(heads):
            if c.use_review_coattention:
                s = affinity(xa, xb, P[f"head{h}.M"], self._ff(f"head{h}"), ur, ir, drop, training, rng)
                hn = None if noise is None else (noise[h, 0], noise[h, 1])
                pa, pb = select_pointers(s, c.tau, rng, training, hard, hn, ur, ir)
                pa_idx[:, h] = np.argmax(pa.data, axis=-1)
                pb_idx[:, h] = np.argmax(pb.data, axis=-1)
                if s_keep is not None:
                    s_keep.append(s.data.copy())
                sel_a, sel_b = gather_review(pa, words_a), gather_review(pb, words_b)
                wm_a = _fallback_first(ut[np.arange(B), pa_idx[:, h]] != PAD)
                wm_b = _fallback_first(it[np.arange(B), pb_idx[:, h]] != PAD)
            else:
                # no review pointers: the whole bank is one long word sequence
                R, W = ut.shape[1:]
                sel_a = ad.reshape(words_a, (B, R * W, c.d))
                sel_b = ad.reshape(words_b, (B, R * W, c.d))
                wm_a = _fallback_first(ut.reshape(B, -1) != PAD)
                wm_b = _fallback_first(it.reshape(B, -1) != PAD)
            if c.use_word_coattention:
                a_h, b_h, (_, _, w) = word_coattention(
                    sel_a, sel_b, P["word.M"], self._ff("word"), wm_a, wm_b,
                    drop, training, rng, return_weights=True)
                if w_keep is not None:
                    w_keep.append(w.data.copy())
            elif c.use_review_coattention:
                a_h = ad.einsum("br,brd->bd", pa, xa)
                b_h = ad.einsum("br,brd->bd", pb, xb)
            else:
                a_h, b_h = ad.mean(sel_a, axis=1), ad.mean(sel_b, axis=1)
            out_a.append(a_h)
            out_b.append(b_h)

        agg = (P.get("agg.W"), P.get("agg.b"))
        af = aggregate_pointers(out_a, sum_a, c.aggregation, *agg, drop, training, rng)
        bf = aggregate_pointers(out_b, sum_b, c.aggregation, *agg, drop, training, rng)
        if c.use_fm:
            pred = fm_predict(ad.concat([af, bf], -1), P["fm.w0"], P["fm.w"], P["fm.v"])
        else:
            pred = ad.sum(ad.mul(af, bf), axis=-1)
        trace = ForwardTrace(pa_idx, pb_idx,
                             np.stack(s_keep, 1) if s_keep else None,
                             np.stack(w_keep, 1) if w_keep else None)
        return pred, trace

    def sample_noise(self, rng, batch_size: int) -> np.ndarray:
        R = self.user_tokens.shape[1]
        return ad.gumbel_noise(rng, (self.n_heads, 2, batch_size, R), self.config.dtype)
