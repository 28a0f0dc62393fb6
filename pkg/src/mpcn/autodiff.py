"""A small tape-based reverse-mode differentiation engine over numpy arrays.

Only the operations the recommender needs are provided. Every op accepts an
optional leading batch shape, so one tape can hold a whole minibatch.

Recording happens only while a :class:`Tape` is active::

    with Tape() as tape:
        loss = mse(model(x), y)
    tape.backward(loss)

Outside a tape the ops run as plain numpy and build no graph.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError, ConfigError

MASK_VALUE = -1e9

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """Dense array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "fc":
            arr = arr.astype(np.float64 if dtype is None else dtype)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("out", "inputs", "backward", "op")

    def __init__(self, out, inputs, backward, op):
        self.out = out
        self.inputs = inputs
        self.backward = backward
        self.op = op


class Tape:
    """Ordered record of executed ops; consumed by a single backward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()
        self._used = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, out: Tensor, inputs: tuple, backward: Callable, op: str) -> None:
        self.nodes.append(_Node(out, inputs, backward, op))
        self._produced.add(id(out))

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(op: str, out_data: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
    if not np.all(np.isfinite(out_data)):
        raise NumericError(f"{op}: non-finite value in forward output")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = _active_tape()
    if requires and tape is not None:
        tape._record(out, inputs, backward, op)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf on the tape.

    Leaves that take part in the tape but receive no gradient are given a
    zero ``.grad``.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape._used:
        raise RuntimeError("tape already consumed by a previous backward pass")
    if id(loss) not in tape._produced:
        raise RuntimeError("loss was not produced on this tape")
    tape._used = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        for t in node.inputs:
            if t.requires_grad and id(t) not in tape._produced:
                leaves[id(t)] = t
        if g is None:
            continue
        in_grads = node.backward(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    for key, leaf in leaves.items():
        g = grads.get(key)
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        if g is not None:
            leaf.grad = leaf.grad + g.astype(leaf.data.dtype, copy=False)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return a, b


# ----------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    """Hadamard product (numpy broadcasting allowed)."""
    a, b = _pair(a, b)
    _broadcast_check("mul", a, b)
    ad, bd = a.data, b.data
    return _make("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


hadamard = mul


def scale(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _make("square", ad * ad, (a,), lambda g: (2 * g * ad,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _make("sigmoid", y, (a,), lambda g: (g * y * (1 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _make("tanh", y, (a,), lambda g: (g * (1 - y * y),))


def relu(a: Tensor) -> Tensor:
    on = a.data > 0
    return _make("relu", np.where(on, a.data, 0).astype(a.dtype), (a,),
                 lambda g: (g * on,))


def elementwise(op: str, *args):
    """Dispatch by name: sigmoid, tanh, relu, hadamard, add, scale."""
    table = {
        "sigmoid": sigmoid,
        "tanh": tanh,
        "relu": relu,
        "hadamard": mul,
        "add": add,
        "scale": scale,
    }
    if op not in table:
        raise ConfigError(f"unknown elementwise op {op!r}")
    return table[op](*args)


def where(valid, a: Tensor, fill: float) -> Tensor:
    """Keep ``a`` where ``valid`` is true, else the constant ``fill``."""
    valid = np.asarray(valid, dtype=bool)
    try:
        shape = np.broadcast_shapes(valid.shape, a.shape)
    except ValueError:
        raise ShapeError(f"where: mask {valid.shape} vs operand {a.shape}") from None
    if shape != a.shape:
        raise ShapeError(f"where: mask {valid.shape} would broadcast operand {a.shape}")
    out = np.where(valid, a.data, a.dtype.type(fill))
    return _make("where", out, (a,), lambda g: (g * valid,))


# ----------------------------------------------------------------------------
# contractions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} differ") from None
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _make("matmul", ad @ bd, (a, b), bw)


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum without ellipsis.

    Every index of an operand must appear in the other operand or in the
    output, which keeps each gradient expressible as a single einsum.
    """
    lhs, out = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for mine, other in ((sa, sb), (sb, sa)):
        for ch in mine:
            if ch not in other and ch not in out:
                raise ShapeError(f"einsum: index {ch!r} is summed within one operand")
    ad, bd = a.data, b.data
    try:
        res = np.einsum(subscripts, ad, bd)
    except ValueError as exc:
        raise ShapeError(f"einsum {subscripts}: {a.shape} and {b.shape}: {exc}") from None

    def bw(g):
        ga = np.einsum(f"{out},{sb}->{sa}", g, bd) if a.requires_grad else None
        gb = np.einsum(f"{out},{sa}->{sb}", g, ad) if b.requires_grad else None
        return ga, gb

    return _make("einsum", res, (a, b), bw)


# ----------------------------------------------------------------------------
# reductions


def _check_axis(op: str, x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for shape {x.shape}")
    axis %= x.ndim
    if x.shape[axis] == 0:
        raise ShapeError(f"{op}: reduction over empty axis {axis}")
    return axis


def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    if axis is None:
        shape = x.shape
        return _make("sum", np.asarray(x.data.sum()), (x,),
                     lambda g: (np.broadcast_to(g, shape).copy(),))
    axis = _check_axis("sum", x, axis)
    shape = x.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make("sum", x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.shape[_check_axis("mean", x, axis)]
    return scale(sum(x, axis, keepdims), 1.0 / n)


def max(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Max along ``axis``; the gradient goes to the first maximal entry."""
    axis = _check_axis("max", x, axis)
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)
    shape = x.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        gx = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(gx, idx, g, axis=axis)
        return (gx,)

    return _make("max", out if keepdims else np.squeeze(out, axis), (x,), bw)


def reduce(x: Tensor, axis: int, kind: str) -> Tensor:
    if kind == "max":
        return max(x, axis)
    if kind == "mean":
        return mean(x, axis)
    if kind == "sum":
        return sum(x, axis)
    raise ConfigError(f"unknown reduction {kind!r}")


# ----------------------------------------------------------------------------
# softmax family


def _masked_logits(x: np.ndarray, mask, axis: int) -> np.ndarray:
    if mask is None:
        return x
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not np.all(mask.any(axis=axis)):
        raise ShapeError("softmax: every position along the axis is masked")
    return x + np.where(mask, 0, MASK_VALUE).astype(x.dtype)


def _softmax(z: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_backward(g: np.ndarray, y: np.ndarray, axis: int) -> np.ndarray:
    return y * (g - (g * y).sum(axis=axis, keepdims=True))


def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Softmax along ``axis``; positions where ``mask`` is false get -1e9 added."""
    axis = _check_axis("softmax", x, axis)
    y = _softmax(_masked_logits(x.data, mask, axis), axis)
    return _make("softmax", y, (x,), lambda g: (_softmax_backward(g, y, axis),))


def gumbel_noise(rng: np.random.Generator, shape, dtype=np.float64) -> np.ndarray:
    """g = -log(-log(u)) with u ~ Uniform(0, 1), kept strictly inside (0, 1)."""
    tiny = np.finfo(np.float64).tiny
    u = rng.random(shape)
    u = np.clip(u, tiny, 1.0 - np.finfo(np.float64).epsneg)
    return (-np.log(-np.log(u))).astype(dtype)


def _one_hot_argmax(y: np.ndarray, axis: int) -> np.ndarray:
    idx = np.expand_dims(np.argmax(y, axis=axis), axis)
    out = np.zeros_like(y)
    np.put_along_axis(out, idx, 1, axis=axis)
    return out


def st_gumbel_softmax(
    logits: Tensor,
    tau: float = 1.0,
    rng: np.random.Generator | None = None,
    hard: bool = True,
    training: bool = True,
    noise: np.ndarray | None = None,
    mask=None,
) -> Tensor:
    """Straight-through Gumbel-softmax over the last axis.

    In training the logits are perturbed by Gumbel noise (drawn from ``rng``
    unless ``noise`` is given) and divided by ``tau`` before the softmax.
    With ``hard`` the forward value is the one-hot argmax of that softmax
    while the backward pass is the softmax Jacobian. Outside training no noise
    is used and the output is the one-hot argmax of the logits.
    """
    if not tau > 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    axis = logits.ndim - 1
    if training:
        if noise is None:
            if rng is None:
                raise ConfigError("st_gumbel_softmax needs rng or explicit noise in training")
            noise = gumbel_noise(rng, logits.shape, logits.dtype)
        elif noise.shape != logits.shape:
            raise ShapeError(f"noise {noise.shape} does not match logits {logits.shape}")
        z = (logits.data + noise.astype(logits.dtype)) / logits.dtype.type(tau)
    else:
        z = logits.data / logits.dtype.type(tau)
    y = _softmax(_masked_logits(z, mask, axis), axis)
    inv_tau = logits.dtype.type(1.0 / tau)

    def bw(g):
        return (_softmax_backward(g, y, axis) * inv_tau,)

    out = _one_hot_argmax(y, axis) if (hard or not training) else y
    return _make("st_gumbel_softmax", out, (logits,), bw)


# ----------------------------------------------------------------------------
# shape & indexing


def take(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradient scatters back with accumulation."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"take: id out of range for table with {table.shape[0]} rows")
    shape = table.shape

    def bw(g):
        gt = np.zeros(shape, dtype=g.dtype)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, *shape[1:]))
        return (gt,)

    return _make("take", table.data[ids], (table,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from None
    return _make("reshape", out, (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = list(xs)
    axis %= xs[0].ndim
    try:
        out = np.concatenate([t.data for t in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in xs]} along axis {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in xs])[:-1]
    return _make("concat", out, tuple(xs), lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = list(xs)
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in xs]
    return concat(expanded, axis=axis)


# ----------------------------------------------------------------------------
# regularisation & losses


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not 0 <= rate < 1:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1 - rate)
    return _make("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error; ``target`` is treated as a constant."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target
    n = diff.size
    return _make("mse", np.asarray((diff * diff).sum() / n), (pred,),
                 lambda g: (g * 2 * diff / n,))


def sum_of_squares(xs: Iterable[Tensor]) -> Tensor:
    total = None
    for t in xs:
        s = sum(square(t))
        total = s if total is None else add(total, s)
    return total


# ----------------------------------------------------------------------------
# random streams


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Seeded PCG64 stream; identical seed and call order give identical draws."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams derived from one seed."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# ----------------------------------------------------------------------------
# finite-difference checking


def numerical_grad(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. ``x`` (perturbed in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """||a - n|| / max(||a||, ||n||, floor)."""
    num = np.linalg.norm(analytic - numeric)
    den = np.max([np.linalg.norm(analytic), np.linalg.norm(numeric), floor])
    return float(num / den)


def gradcheck(
    fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    report=None,
) -> dict[str, float]:
    """Compare tape gradients of scalar ``fn()`` with central differences.

    Returns the relative error per named parameter. When ``report`` is a
    writable text stream, one line per parameter is written to it.
    """
    for p in params.values():
        p.grad = None
    with Tape() as tape:
        loss = fn()
    backward(loss, tape)
    errors = {}
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numerical_grad(lambda: float(fn().data), p.data, eps)
        errors[name] = relative_error(analytic, numeric)
        if report is not None:
            report.write(f"{name:<24s} shape={str(p.shape):<14s} rel_err={errors[name]:.3e}\n")
    return errors


def check_ops(seed: int = 0, points: int = 25, report=None) -> dict[str, float]:
    """Finite-difference check of every differentiable op at random points.

    Returns the worst relative error seen per op; writes a plain-text line per
    op when ``report`` is given.
    """
    rng = make_rng(seed)

    def rand(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True)

    def max_input(shape):
        # keep the argmax well separated so the check never straddles a tie
        while True:
            x = rng.standard_normal(shape)
            top2 = np.sort(x, axis=-1)[..., -2:]
            if np.all(top2[..., 1] - top2[..., 0] > 1e-3):
                return Tensor(x, requires_grad=True)

    def relu_input(shape):
        x = rng.standard_normal(shape)
        x[np.abs(x) < 1e-3] += 1e-2
        return Tensor(x, requires_grad=True)

    cases = {
        "matmul": lambda: (lambda a, b: matmul(a, b), [rand(2, 3, 4), rand(4, 5)]),
        "einsum": lambda: (lambda a, b: einsum("br,brd->bd", a, b), [rand(2, 3), rand(2, 3, 4)]),
        "add": lambda: (add, [rand(3, 4), rand(4)]),
        "sub": lambda: (sub, [rand(3, 4), rand(3, 1)]),
        "hadamard": lambda: (mul, [rand(3, 4), rand(3, 4)]),
        "scale": lambda: (lambda a: scale(a, 0.7), [rand(3, 4)]),
        "square": lambda: (square, [rand(3, 4)]),
        "sigmoid": lambda: (sigmoid, [rand(3, 4)]),
        "tanh": lambda: (tanh, [rand(3, 4)]),
        "relu": lambda: (relu, [relu_input((3, 4))]),
        "sum": lambda: (lambda a: sum(a, 1), [rand(3, 4)]),
        "mean": lambda: (lambda a: mean(a, 0), [rand(3, 4)]),
        "max": lambda: (lambda a: max(a, -1), [max_input((3, 4))]),
        "softmax": lambda: (lambda a: softmax(a, -1), [rand(3, 4)]),
        "masked_softmax": lambda: (
            lambda a: softmax(a, -1, mask=np.array([True, False, True, True])), [rand(3, 4)]),
        "where": lambda: (lambda a: where(np.array([True, False, True, False]), a, -5.0), [rand(3, 4)]),
        "take": lambda: (lambda a: take(a, np.array([[0, 2], [2, 2]])), [rand(3, 4)]),
        "concat": lambda: (lambda a, b: concat([a, b], -1), [rand(3, 2), rand(3, 4)]),
        "transpose": lambda: (lambda a: transpose(a, (1, 0, 2)), [rand(2, 3, 4)]),
        "reshape": lambda: (lambda a: reshape(a, (4, 3)), [rand(3, 4)]),
        "gumbel_soft": lambda: (
            lambda a, n=gumbel_noise(rng, (3, 4)): st_gumbel_softmax(
                a, 0.5, hard=False, training=True, noise=n), [rand(3, 4)]),
        "dropout": lambda: (
            lambda a, s=int(rng.integers(1 << 31)): dropout(a, 0.2, True, make_rng(s)), [rand(3, 4)]),
    }
    worst: dict[str, float] = {}
    for name, build in cases.items():
        worst[name] = 0.0
        for _ in range(points):
            f, args = build()
            probe = rng.standard_normal(f(*args).shape)

            def fn(f=f, args=args, probe=probe):
                return sum(mul(f(*args), Tensor(probe)))

            errs = gradcheck(fn, {f"arg{i}": a for i, a in enumerate(args)})
            worst[name] = float(np.max([worst[name], *errs.values()]))
        if report is not None:
            report.write(f"{name:<16s} points={points} max_rel_err={worst[name]:.3e}\n")
    return worst


__all__ = [
    "MASK_VALUE", "Tensor", "Tape", "backward", "as_tensor",
    "add", "sub", "mul", "hadamard", "scale", "square", "sigmoid", "tanh", "relu",
    "elementwise", "where", "matmul", "einsum", "sum", "mean", "max", "reduce",
    "softmax", "gumbel_noise", "st_gumbel_softmax", "take", "reshape", "transpose",
    "swap_last", "concat", "stack", "dropout", "mse", "sum_of_squares",
    "make_rng", "spawn", "numerical_grad", "relative_error", "gradcheck", "check_ops",
]
