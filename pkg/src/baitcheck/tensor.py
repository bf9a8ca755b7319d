"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to one gradient per parent.
:func:`backward` orders the reachable graph topologically (the tape) and
walks it in reverse, accumulating into ``.grad`` of leaf tensors that
require gradients.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "Tensor", "tensor", "constant", "backward", "tape",
    "add", "sub", "mul", "div", "neg", "matmul", "elementwise",
    "relu", "sigmoid", "tanh", "exp", "log", "clip",
    "sum", "mean", "max", "softmax", "layer_norm",
    "reshape", "transpose", "swapaxes", "concat", "stack", "getitem",
    "embedding", "unfold1d", "lstm", "gradient_check",
]

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=DTYPE):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.op = "leaf"

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self):
        return len(self.data)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self)

    def backward(self):
        backward(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], grad_fn: Callable, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(*shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError as exc:
        raise ShapeError(f"shapes {shapes} are not broadcastable") from exc


# ---------------------------------------------------------------------------
# tape and backward


def tape(root: Tensor) -> list[Tensor]:
    """Topologically ordered list of the nodes ``root`` depends on.

    Every node appears after all of its parents. Iterative, so deep
    recurrent graphs do not hit the interpreter recursion limit.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf that requires it with d(loss)/d(leaf).

    Gradients accumulate across calls and across multiple uses of a leaf.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast(a.shape, b.shape)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast(a.shape, b.shape)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast(a.shape, b.shape)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_broadcast(a.shape, b.shape)
    out = a.data / b.data
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)), "div")


def neg(a) -> Tensor:
    a = _t(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def relu(x) -> Tensor:
    x = _t(x)
    on = x.data > 0
    return _node(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,), "relu")


def sigmoid(x) -> Tensor:
    x = _t(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def tanh(x) -> Tensor:
    x = _t(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(x) -> Tensor:
    x = _t(x)
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    x = _t(x)
    return _node(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; zero gradient where clamped."""
    x = _t(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _node(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


_UNARY = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}
_BINARY = {"add": add, "mul": mul, "sub": sub}


def elementwise(kind: str, *args) -> Tensor:
    """Dispatch by name: relu/sigmoid/tanh take one argument, add/mul/sub two."""
    if kind in _UNARY:
        if len(args) != 1:
            raise ConfigError(f"{kind} takes one argument")
        return _UNARY[kind](args[0])
    if kind in _BINARY:
        if len(args) != 2:
            raise ConfigError(f"{kind} takes two arguments")
        return _BINARY[kind](*args)
    raise ConfigError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes with broadcasting of the
    leading axes. A 1-D left operand is treated as a single row."""
    a, b = _t(a), _t(b)
    if a.ndim == 1:
        return reshape(matmul(reshape(a, (1, a.shape[0])), b), b.shape[:-2] + (b.shape[-1],))
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    _check_broadcast(a.shape[:-2], b.shape[:-2])

    def grad(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), grad, "matmul")


# ---------------------------------------------------------------------------
# reductions


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = _t(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def grad(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(out, (x,), grad, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _t(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return sum(x, axis, keepdims) * (1.0 / n)


def max(x, axis: int = -1) -> Tensor:  # noqa: A001
    """Max over one axis; the gradient is shared evenly among tied maxima."""
    x = _t(x)
    out = x.data.max(axis=axis)

    def grad(g):
        hit = x.data == np.expand_dims(out, axis)
        share = hit / hit.sum(axis=axis, keepdims=True)
        return (share * np.expand_dims(g, axis),)

    return _node(out, (x,), grad, "max")


def softmax(x, axis: int = -1) -> Tensor:
    x = _t(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _node(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),), "softmax")


def layer_norm(x, gain=None, bias=None, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gain * x_hat + bias``."""
    x = _t(x)
    gain = _t(np.ones(x.shape[-1])) if gain is None else _t(gain)
    bias = _t(np.zeros(x.shape[-1])) if bias is None else _t(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def grad(g):
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _node(out, (x, gain, bias), grad, "layer_norm")


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x, shape) -> Tensor:
    x = _t(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = _t(x)
    inverse = None if axes is None else tuple(np.argsort(axes))
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(x, a: int, b: int) -> Tensor:
    x = _t(x)
    return _node(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),), "swapaxes")


def getitem(x, idx) -> Tensor:
    x = _t(x)

    def grad(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(x.data[idx], (x,), grad, "getitem")


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [_t(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _node(out, xs, lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [_t(x) for x in xs]
    try:
        out = np.stack([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    return _node(out, xs,
                 lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(xs))), "stack")


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add gradient."""
    table = _t(table)
    ids = np.asarray(ids, dtype=np.int64)

    def grad(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (gt,)

    return _node(table.data[ids], (table,), grad, "embedding")


def unfold1d(x, window: int) -> Tensor:
    """Sliding windows over axis -2: (..., L, d) -> (..., L - window + 1, window * d)."""
    x = _t(x)
    L, d = x.shape[-2], x.shape[-1]
    if not 1 <= window <= L:
        raise ShapeError(f"window {window} does not fit a length-{L} sequence")
    n = L - window + 1
    idx = np.arange(n)[:, None] + np.arange(window)[None, :]
    out = x.data[..., idx, :].reshape(x.shape[:-2] + (n, window * d))

    def grad(g):
        gx = np.zeros_like(x.data)
        g = g.reshape(x.shape[:-2] + (n, window, d))
        for k in range(window):
            gx[..., k:k + n, :] += g[..., :, k, :]
        return (gx,)

    return _node(out, (x,), grad, "unfold1d")


# ---------------------------------------------------------------------------
# fused recurrent op


def lstm(seq, W, U, b, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over axis -2 of ``seq`` (N, L, d), zero initial
    state, gate order (input, forget, cell, output).

    ``W`` is (d, 4H), ``U`` is (H, 4H), ``b`` is (4H,). Returns every hidden
    state, (N, L, H). With ``reverse`` the sequence is read back to front and
    the outputs are re-reversed so position t still lines up with input t.
    Backpropagation through time is done by hand inside one tape node.
    """
    seq, W, U, b = _t(seq), _t(W), _t(U), _t(b)
    if seq.ndim != 3:
        raise ShapeError(f"lstm expects (N, L, d) input, got {seq.shape}")
    N, L, d = seq.shape
    H = U.shape[0]
    if W.shape != (d, 4 * H) or U.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ShapeError(f"lstm weights {W.shape}, {U.shape}, {b.shape} do not fit input width {d}, hidden {H}")

    xs = seq.data[:, ::-1] if reverse else seq.data
    xw = xs @ W.data + b.data
    hs = np.zeros((N, L + 1, H))
    cs = np.zeros((N, L + 1, H))
    gates = np.zeros((N, L, 4 * H))
    tcs = np.zeros((N, L, H))
    Ud = U.data
    for t in range(L):
        z = xw[:, t] + hs[:, t] @ Ud
        ifo = 0.5 * (1.0 + np.tanh(0.5 * z))
        gc = np.tanh(z[:, 2 * H:3 * H])
        i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 3 * H:]
        c = f * cs[:, t] + i * gc
        tc = np.tanh(c)
        cs[:, t + 1] = c
        hs[:, t + 1] = o * tc
        gates[:, t, :H], gates[:, t, H:2 * H] = i, f
        gates[:, t, 2 * H:3 * H], gates[:, t, 3 * H:] = gc, o
        tcs[:, t] = tc
    out = hs[:, 1:]
    if reverse:
        out = out[:, ::-1]

    def grad(g):
        g = g[:, ::-1] if reverse else g
        dxw = np.zeros_like(xw)
        dU = np.zeros_like(Ud)
        dh_next = np.zeros((N, H))
        dc_next = np.zeros((N, H))
        for t in range(L - 1, -1, -1):
            i, f = gates[:, t, :H], gates[:, t, H:2 * H]
            gc, o = gates[:, t, 2 * H:3 * H], gates[:, t, 3 * H:]
            tc = tcs[:, t]
            dh = g[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate([
                dc * gc * i * (1.0 - i),
                dc * cs[:, t] * f * (1.0 - f),
                dc * i * (1.0 - gc * gc),
                dh * tc * o * (1.0 - o),
            ], axis=1)
            dxw[:, t] = dz
            dU += hs[:, t].T @ dz
            dh_next = dz @ Ud.T
            dc_next = dc * f
        dW = np.einsum("nld,nlk->dk", xs, dxw)
        db = dxw.sum(axis=(0, 1))
        dseq = dxw @ W.data.T
        if reverse:
            dseq = dseq[:, ::-1]
        return dseq, dW, dU, db

    return _node(np.ascontiguousarray(out), (seq, W, U, b), grad, "lstm")


# ---------------------------------------------------------------------------
# finite-difference verification


def gradient_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5,
                   kink_tol: float | None = None, max_coords: int | None = None,
                   seed: int = 0) -> float:
    """Max relative error between autodiff and central differences.

    ``f`` maps a tensor to a scalar tensor. Relative error per coordinate is
    ``|a - b| / max(|a|, |b|, 1e-8)``. Coordinates where ``|x| < 10 * eps``
    are skipped (relu kinks at the input), as are coordinates whose one-sided
    differences disagree by more than ``kink_tol`` (a kink inside ``f``).
    ``max_coords`` checks a seeded random subset of coordinates.
    """
    base = np.array(_t(x).data, dtype=np.float64)
    probe = Tensor(base.copy(), requires_grad=True)
    backward(f(probe))
    analytic = np.zeros_like(base) if probe.grad is None else probe.grad

    def value(arr):
        return f(Tensor(arr)).item()

    coords = np.arange(base.size)
    if max_coords is not None and base.size > max_coords:
        coords = np.sort(np.random.default_rng(seed).choice(base.size, max_coords, replace=False))

    f0 = value(base)
    flat = base.reshape(-1)
    worst = 0.0
    for k in coords:
        if abs(flat[k]) < 10 * eps:
            continue
        old = flat[k]
        flat[k] = old + eps
        fp = value(base)
        flat[k] = old - eps
        fm = value(base)
        flat[k] = old
        num = (fp - fm) / (2 * eps)
        if kink_tol is not None:
            fwd, bwd = (fp - f0) / eps, (f0 - fm) / eps
            if abs(fwd - bwd) > kink_tol * np.maximum(1.0, abs(num)):
                continue
        a = analytic.reshape(-1)[k]
        rel = abs(a - num) / np.maximum(np.maximum(abs(a), abs(num)), 1e-8)
        worst = np.maximum(worst, rel)
    return float(worst)
