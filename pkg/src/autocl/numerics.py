"""Minimal dense-tensor engine with reverse-mode autodiff on float64 arrays.

Every operation appends a node to an append-only ``Tape`` (a Wengert list), so
nodes are topologically ordered by construction and ``backward`` is a single
reverse sweep over creation order. All storage is numpy float64; any operation
that produces a non-finite entry raises :class:`NumericError` immediately.

The primitive set is closed: ops below are the only graph nodes, and each one
is registered in ``GRAD_CHECK_CASES`` so the finite-difference sweep covers the
whole engine. No dynamic shapes beyond leading batch/time axes are supported.
"""

from __future__ import annotations

import weakref
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError

Array = np.ndarray

_FD_FLOOR = 1e-8  # denominator floor for relative gradient errors


def _as_f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


class Tape:
    """Append-only operation record owning every tensor created on it."""

    __slots__ = ("nodes",)

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []

    def _register(self, t: "Tensor") -> int:
        self.nodes.append(t)
        return len(self.nodes) - 1

    def leaf(self, data, requires_grad: bool = True, name: str = "") -> "Tensor":
        """Create an input node (trainable parameter when requires_grad)."""
        return Tensor(self, _as_f64(data).copy(), (), None, requires_grad, name)

    def constant(self, data, name: str = "") -> "Tensor":
        """Create a non-trainable input node."""
        return Tensor(self, _as_f64(data), (), None, False, name)


class Tensor:
    """A node on a tape: float64 payload plus links to its parents."""

    __slots__ = ("tape", "data", "parents", "vjp", "requires_grad", "name", "index")

    def __init__(
        self,
        tape: Tape,
        data: Array,
        parents: tuple["Tensor", ...],
        vjp: Callable[[Array], tuple[Array | None, ...]] | None,
        requires_grad: bool,
        name: str = "",
    ) -> None:
        if not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite values produced by '{name or 'input'}'")
        self.tape = tape
        self.data = data
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.name = name
        self.index = tape._register(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self.name or 'leaf'})"

    # arithmetic sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(self.tape, other), self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(self, other)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(_wrap(self.tape, other), self)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)


def _wrap(tape: Tape, x) -> Tensor:
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise NumericError("operands live on different tapes")
        return x
    return tape.constant(x)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _wrap(a.tape, b)
    if isinstance(b, Tensor):
        return _wrap(b.tape, a), b
    raise TypeError("at least one operand must be a Tensor")


def _node(name: str, data: Array, parents: tuple[Tensor, ...], vjp) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(parents[0].tape, data, parents, vjp if req else None, req, name)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a gradient back to ``shape`` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data + b.data
    return _node(
        "add",
        out,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data - b.data
    return _node(
        "sub",
        out,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def multiply(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data * b.data
    return _node(
        "multiply",
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def divide(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data
    return _node(
        "divide",
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def negate(a: Tensor) -> Tensor:
    return _node("negate", -a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    """Elementwise a**p for a constant exponent p."""
    p = float(p)
    out = a.data**p
    return _node("power", out, (a,), lambda g: (g * p * a.data ** (p - 1.0),))


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root with 0 subgradient at 0 (keeps masked-out
    zero-distance pairs from poisoning the backward pass with inf*0)."""
    out = np.sqrt(a.data)

    def vjp(g: Array):
        safe = np.where(a.data > 0.0, a.data, 1.0)
        return (np.where(a.data > 0.0, g * 0.5 / np.sqrt(safe), 0.0),)

    return _node("sqrt", out, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)
    return _node("log", out, (a,), lambda g: (g / a.data,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    return _node("relu", out, (a,), lambda g: (g * (a.data > 0.0),))


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b) -> Tensor:
    """numpy-semantics matmul with batch broadcasting; operands must be >=2-D."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise NumericError("matmul operands must have ndim >= 2")
    out = a.data @ b.data

    def vjp(g: Array):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node("matmul", out, (a, b), vjp)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    return _node("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = tuple(tensors)
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g: Array):
        pieces = []
        for i in range(len(ts)):
            key = [slice(None)] * g.ndim
            key[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(key)])
        return tuple(pieces)

    return _node("concat", out, ts, vjp)


def slice_(a: Tensor, key) -> Tensor:
    """Basic slicing (slice objects / full axes only, so shapes stay static)."""
    if not isinstance(key, tuple):
        key = (key,)
    if not all(isinstance(k, slice) for k in key):
        raise NumericError("slice_ supports slice objects only")
    out = a.data[key]

    def vjp(g: Array):
        gx = np.zeros_like(a.data)
        gx[key] = g
        return (gx,)

    return _node("slice", out, (a,), vjp)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    ax = (axis,) if isinstance(axis, int) else axis

    def vjp(g: Array):
        if ax is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, tuple(sorted(x % a.ndim for x in ax)))
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node("sum", out, (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    ax = (axis,) if isinstance(axis, int) else axis
    count = a.data.size if ax is None else int(np.prod([a.shape[x % a.ndim] for x in ax]))

    def vjp(g: Array):
        if ax is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, tuple(sorted(x % a.ndim for x in ax)))
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _node("mean", out, (a,), vjp)


def softmax(a: Tensor) -> Tensor:
    """Stable softmax over the trailing axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g: Array):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - dot) * out,)

    return _node("softmax", out, (a,), vjp)


def layer_norm(x: Tensor, gain, offset, eps: float = 1e-5) -> Tensor:
    """Normalize the trailing axis to zero mean / unit variance, then affine."""
    gain = _wrap(x.tape, gain)
    offset = _wrap(x.tape, offset)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + offset.data
    n = x.shape[-1]

    def vjp(g: Array):
        gh = g * gain.data
        gx = (inv / n) * (n * gh - gh.sum(axis=-1, keepdims=True) - xhat * (gh * xhat).sum(axis=-1, keepdims=True))
        ggain = _unbroadcast(g * xhat, gain.shape)
        goffset = _unbroadcast(g, offset.shape)
        return gx, ggain, goffset

    return _node("layer_norm", out, (x, gain, offset), vjp)


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale trailing-axis vectors to unit L2 norm; zero vectors stay zero."""
    n = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    denom = np.maximum(n, eps)
    out = x.data / denom

    def vjp(g: Array):
        big = n > eps
        proj = (g - out * (g * out).sum(axis=-1, keepdims=True)) / denom
        return (np.where(big, proj, g / eps),)

    return _node("l2_normalize", out, (x,), vjp)


def conv1d_dilated(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Dilated 1-D convolution over the time axis with symmetric "same" padding.

    out[n, t, o] = b[o] + sum_{k,i} x[n, t + (k - K//2)*dilation, i] * w[k, i, o]

    x: (B, T, Cin), w: (K, Cin, Cout), b: (Cout,); out-of-range taps read zero.
    """
    if x.ndim != 3 or w.ndim != 3 or b.ndim != 1:
        raise NumericError("conv1d_dilated expects x(B,T,Ci), w(K,Ci,Co), b(Co)")
    d = int(dilation)
    if d < 1:
        raise NumericError("dilation must be >= 1")
    K = w.shape[0]
    B, T, Ci = x.shape
    pad_l = (K // 2) * d
    pad_r = (K - 1 - K // 2) * d
    xp = np.pad(x.data, ((0, 0), (pad_l, pad_r), (0, 0)))
    out = np.broadcast_to(b.data, (B, T, w.shape[2])).copy()
    for k in range(K):
        out += xp[:, k * d : k * d + T, :] @ w.data[k]

    def vjp(g: Array):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(w.data)
        for k in range(K):
            gxp[:, k * d : k * d + T, :] += g @ w.data[k].T
            gw[k] = np.tensordot(xp[:, k * d : k * d + T, :], g, axes=([0, 1], [0, 1]))
        gx = gxp[:, pad_l : pad_l + T, :]
        gb = g.sum(axis=(0, 1))
        return gx, gw, gb

    return _node("conv1d_dilated", out, (x, w, b), vjp)


def pool1d(x: Tensor, kernel: int, op: str = "avg") -> Tensor:
    """Non-overlapping pooling over time (stride = kernel, ceil mode).

    The trailing partial window is pooled over its actual length; max-pool
    gradients route to the lowest argmax index per window.
    """
    if x.ndim != 3:
        raise NumericError("pool1d expects x(B,T,C)")
    k = int(kernel)
    if k < 2:
        raise NumericError("pool kernel must be >= 2")
    if op not in ("avg", "max"):
        raise NumericError(f"unknown pool op '{op}'")
    B, T, C = x.shape
    n_full = T // k
    rem = T - n_full * k
    full = x.data[:, : n_full * k, :].reshape(B, n_full, k, C)
    parts = []
    if op == "avg":
        if n_full:
            parts.append(full.mean(axis=2))
        if rem:
            parts.append(x.data[:, n_full * k :, :].mean(axis=1, keepdims=True))
    else:
        if n_full:
            parts.append(full.max(axis=2))
        if rem:
            parts.append(x.data[:, n_full * k :, :].max(axis=1, keepdims=True))
        idx_full = full.argmax(axis=2) if n_full else None
        idx_rem = x.data[:, n_full * k :, :].argmax(axis=1) if rem else None
    out = np.concatenate(parts, axis=1)

    def vjp(g: Array):
        gx = np.zeros_like(x.data)
        g_full = g[:, :n_full, :]
        if op == "avg":
            if n_full:
                gx[:, : n_full * k, :] = np.repeat(g_full / k, k, axis=1)
            if rem:
                gx[:, n_full * k :, :] = g[:, n_full:, :] / rem
        else:
            if n_full:
                gf = np.zeros_like(full)
                np.put_along_axis(gf, idx_full[:, :, None, :], g_full[:, :, None, :], axis=2)
                gx[:, : n_full * k, :] = gf.reshape(B, n_full * k, C)
            if rem:
                gr = np.zeros((B, rem, C))
                np.put_along_axis(gr, idx_rem[:, None, :], g[:, n_full:, :], axis=1)
                gx[:, n_full * k :, :] = gr
        return (gx,)

    return _node("pool1d_" + op, out, (x,), vjp)


# ---------------------------------------------------------------------------
# backward pass and finite-difference checking


def backward(loss: Tensor) -> dict[Tensor, Array]:
    """Reverse sweep from a scalar loss; returns {trainable leaf: gradient}.

    Same tape, same loss node => bit-identical gradients: the sweep visits
    nodes in strictly decreasing creation order and accumulates with plain
    additions, so there is no nondeterministic reduction order.
    """
    if loss.data.size != 1:
        raise NumericError("backward requires a scalar loss")
    nodes = loss.tape.nodes
    grads: list[Array | None] = [None] * (loss.index + 1)
    grads[loss.index] = np.ones_like(loss.data)
    leaf_grads: dict[Tensor, Array] = {}
    for i in range(loss.index, -1, -1):
        g = grads[i]
        if g is None:
            continue
        node = nodes[i]
        if not node.requires_grad:
            continue
        if not node.parents:
            leaf_grads[node] = g
            continue
        parent_grads = node.vjp(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(pg)):
                raise NumericError(f"non-finite gradient out of '{node.name}'")
            if grads[parent.index] is None:
                grads[parent.index] = pg.copy() if pg.base is not None else pg
            else:
                grads[parent.index] = grads[parent.index] + pg
        grads[i] = None
    # leaves the loss never touched still get (zero) gradients
    for node in nodes:
        if node.requires_grad and not node.parents and node not in leaf_grads:
            leaf_grads[node] = np.zeros_like(node.data)
    return leaf_grads


def grad_check(
    function: Callable[[Tensor], Tensor],
    point,
    step: float = 1e-6,
) -> float:
    """Max elementwise relative error between reverse-mode and central
    finite-difference gradients of a scalar-valued function at ``point``.

    error = |a - n| / max(|a|, |n|, 1e-8), maximized over coordinates.
    """
    point = _as_f64(point)

    def eval_at(arr: Array) -> float:
        tape = Tape()
        out = function(tape.leaf(arr))
        if out.data.size != 1:
            raise NumericError("grad_check requires a scalar-valued function")
        return float(out.data)

    tape = Tape()
    x = tape.leaf(point)
    out = function(x)
    if out.data.size != 1:
        raise NumericError("grad_check requires a scalar-valued function")
    analytic = backward(out).get(x)
    if analytic is None:
        analytic = np.zeros_like(point)
    numeric = np.empty_like(point)
    flat = point.ravel()
    nflat = numeric.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = eval_at(point)
        flat[i] = orig - step
        lo = eval_at(point)
        flat[i] = orig
        nflat[i] = (hi - lo) / (2.0 * step)
    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        raise NumericError("non-finite gradient during grad_check")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _FD_FLOOR)
    return float((np.abs(analytic - numeric) / denom).max())


# ---------------------------------------------------------------------------
# registry of per-primitive gradient-check cases
#
# Each entry maps a case name to a builder(seed) -> (function, point); the
# function closes over frozen random co-inputs so analytic and numeric passes
# evaluate the same map. Outputs are reduced to a scalar through a fixed
# random weighting, which catches transposition mistakes a plain sum hides.


def _reduce(t: Tensor, w: Array) -> Tensor:
    return sum_(multiply(t, t.tape.constant(w)))


def _case_unary(op, low: float | None = None, shift: float = 0.0):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        point = rng.normal(size=(2, 3)) + shift
        if low is not None:
            point = np.abs(point) + low
        w = rng.normal(size=point.shape)
        return (lambda x: _reduce(op(x), w)), point

    return build


def _case_binary(op, which: int):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(2, 1, 3))
        b = rng.normal(size=(4, 3))
        other = b if which == 0 else a
        point = a if which == 0 else b
        w = rng.normal(size=(2, 4, 3))

        def f(x: Tensor) -> Tensor:
            o = x.tape.constant(other)
            args = (x, o) if which == 0 else (o, x)
            return _reduce(op(*args), w)

        return f, point

    return build


def _case_divide(which: int):
    # divisor magnitudes held away from 0 so central differences stay valid
    def build(seed: int):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(2, 1, 3))
        b = rng.uniform(0.5, 2.0, size=(4, 3)) * rng.choice([-1.0, 1.0], size=(4, 3))
        other = b if which == 0 else a
        point = a if which == 0 else b
        w = rng.normal(size=(2, 4, 3))

        def f(x: Tensor) -> Tensor:
            o = x.tape.constant(other)
            args = (x, o) if which == 0 else (o, x)
            return _reduce(divide(*args), w)

        return f, point

    return build


def _case_matmul(which: int):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(2, 3, 4))
        b = rng.normal(size=(4, 5))
        point = a if which == 0 else b
        other = b if which == 0 else a
        w = rng.normal(size=(2, 3, 5))

        def f(x: Tensor) -> Tensor:
            o = x.tape.constant(other)
            out = matmul(x, o) if which == 0 else matmul(o, x)
            return _reduce(out, w)

        return f, point

    return build


def _case_conv(which: str):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 6, 3))
        wgt = rng.normal(size=(3, 3, 4))
        bias = rng.normal(size=(4,))
        w = rng.normal(size=(2, 6, 4))
        pieces = {"x": x, "w": wgt, "b": bias}
        point = pieces[which]

        def f(t: Tensor) -> Tensor:
            tape = t.tape
            args = {k: (t if k == which else tape.constant(v)) for k, v in pieces.items()}
            return _reduce(conv1d_dilated(args["x"], args["w"], args["b"], dilation=2), w)

        return f, point

    return build


def _case_pool(op: str):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        point = rng.normal(size=(2, 7, 3))  # 7 = 2 full windows of 3 + partial
        w = rng.normal(size=(2, 3, 3))
        return (lambda x: _reduce(pool1d(x, 3, op), w)), point

    return build


def _case_layer_norm(which: str):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(2, 3, 5))
        gain = rng.normal(size=(5,)) + 1.5
        offset = rng.normal(size=(5,))
        w = rng.normal(size=x.shape)
        pieces = {"x": x, "gain": gain, "offset": offset}
        point = pieces[which]

        def f(t: Tensor) -> Tensor:
            tape = t.tape
            args = {k: (t if k == which else tape.constant(v)) for k, v in pieces.items()}
            return _reduce(layer_norm(args["x"], args["gain"], args["offset"]), w)

        return f, point

    return build


def _case_concat(seed: int):
    rng = np.random.default_rng(seed)
    point = rng.normal(size=(2, 3))
    other = rng.normal(size=(2, 2))
    w = rng.normal(size=(2, 5))
    return (lambda x: _reduce(concat([x, x.tape.constant(other)], axis=1), w)), point


def _case_slice(seed: int):
    rng = np.random.default_rng(seed)
    point = rng.normal(size=(3, 6, 2))
    w = rng.normal(size=(3, 3, 2))
    return (lambda x: _reduce(slice_(x, (slice(None), slice(1, 4))), w)), point


def _case_transpose(seed: int):
    rng = np.random.default_rng(seed)
    point = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(4, 2, 3))
    return (lambda x: _reduce(transpose(x, (2, 0, 1)), w)), point


def _case_reshape(seed: int):
    rng = np.random.default_rng(seed)
    point = rng.normal(size=(2, 6))
    w = rng.normal(size=(2, 3, 2))
    return (lambda x: _reduce(reshape(x, (2, 3, 2)), w)), point


def _case_reduce(op, axis, keepdims: bool):
    def build(seed: int):
        rng = np.random.default_rng(seed)
        point = rng.normal(size=(2, 3, 4))
        probe = op(Tape().leaf(point), axis=axis, keepdims=keepdims)
        w = rng.normal(size=probe.shape)
        return (lambda x: _reduce(op(x, axis=axis, keepdims=keepdims), w)), point

    return build


GRAD_CHECK_CASES: dict[str, Callable[[int], tuple[Callable[[Tensor], Tensor], Array]]] = {
    "add/a": _case_binary(add, 0),
    "add/b": _case_binary(add, 1),
    "sub/a": _case_binary(sub, 0),
    "sub/b": _case_binary(sub, 1),
    "multiply/a": _case_binary(multiply, 0),
    "multiply/b": _case_binary(multiply, 1),
    "divide/a": _case_divide(0),
    "divide/b": _case_divide(1),
    "negate": _case_unary(negate),
    "power": _case_unary(lambda x: power(x, 3.0)),
    "sqrt": _case_unary(sqrt, low=0.5),
    "exp": _case_unary(exp),
    "log": _case_unary(log, low=0.5),
    "tanh": _case_unary(tanh),
    "relu": _case_unary(relu, shift=0.3),
    "softmax": _case_unary(softmax),
    "l2_normalize": _case_unary(l2_normalize, low=0.3),
    "matmul/a": _case_matmul(0),
    "matmul/b": _case_matmul(1),
    "conv1d_dilated/x": _case_conv("x"),
    "conv1d_dilated/w": _case_conv("w"),
    "conv1d_dilated/b": _case_conv("b"),
    "pool1d_avg": _case_pool("avg"),
    "pool1d_max": _case_pool("max"),
    "layer_norm/x": _case_layer_norm("x"),
    "layer_norm/gain": _case_layer_norm("gain"),
    "layer_norm/offset": _case_layer_norm("offset"),
    "concat": _case_concat,
    "slice": _case_slice,
    "transpose": _case_transpose,
    "reshape": _case_reshape,
    "sum": _case_reduce(sum_, None, False),
    "sum/axis": _case_reduce(sum_, 1, False),
    "sum/keepdims": _case_reduce(sum_, (0, 2), True),
    "mean": _case_reduce(mean, None, False),
    "mean/axis": _case_reduce(mean, -1, True),
}


def run_gradient_sweep(seeds: Iterable[int], step: float = 1e-6) -> dict[str, float]:
    """grad_check every registered primitive case; returns worst error per case."""
    worst: dict[str, float] = {}
    for name, builder in GRAD_CHECK_CASES.items():
        errs = []
        for seed in seeds:
            f, point = builder(seed)
            errs.append(grad_check(f, point, step))
        worst[name] = max(errs)
    return worst
