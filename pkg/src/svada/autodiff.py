"""Minimal reverse-mode autodiff on numpy arrays.

A ``Tape`` records one forward pass as an append-only list of nodes;
``backward`` walks the list in reverse insertion order.  Compute is float32
by default; grad checks run the numeric side on float64 shadow copies.
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np

DEBUG = False  # when True, forward ops assert finiteness and log positivity


class ShapeMismatch(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""

    def __init__(self, op: str, a, b):
        super().__init__(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


class Tensor:
    """n-d float array, optionally attached to the active tape via a node id."""

    __slots__ = ("data", "node")

    def __init__(self, data, node: Optional[int] = None, dtype=np.float32):
        self.data = np.asarray(data, dtype=dtype)
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, None, dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, node={self.node})"

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
        return mul(self, -1.0)


class Tape:
    """Append-only record of one forward pass.

    ``nodes[i]`` is ``(input_ids, backward_fn)``; the node id of the output
    equals ``i``.  Topological order is insertion order by construction.
    """

    def __init__(self):
        self.nodes: list[tuple[tuple[int, ...], Optional[Callable]]] = []
        self.grads: dict[int, np.ndarray] = {}

    def watch(self, t: Tensor) -> Tensor:
        """Attach a leaf tensor (parameter) to this tape."""
        t.node = self._append((), None)
        return t

    def _append(self, input_ids, backward_fn) -> int:
        self.nodes.append((input_ids, backward_fn))
        return len(self.nodes) - 1

    def grad(self, t: Tensor) -> Optional[np.ndarray]:
        if t.node is None:
            return None
        return self.grads.get(t.node)


_TAPE: Optional[Tape] = None


class tape_scope:
    """Context manager installing a tape as the active recording target."""

    def __init__(self, tape: Optional[Tape] = None):
        self.tape = tape if tape is not None else Tape()

    def __enter__(self) -> Tape:
        global _TAPE
        self._prev = _TAPE
        _TAPE = self.tape
        return self.tape

    def __exit__(self, *exc):
        global _TAPE
        _TAPE = self._prev
        return False


def active_tape() -> Optional[Tape]:
    return _TAPE


def _as_tensor(x, like: Optional[np.ndarray] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype), None, dtype=dtype)


def _check_finite(op: str, out: np.ndarray):
    if DEBUG and not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{op}: non-finite value in forward output")


def _record(out: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap ``out``; append a tape node iff any input is tape-attached."""
    t = _TAPE
    if t is None or all(x.node is None for x in inputs):
        return Tensor(out, None, dtype=out.dtype)
    ids = tuple(-1 if x.node is None else x.node for x in inputs)
    node = t._append(ids, backward_fn)
    return Tensor(out, node, dtype=out.dtype)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / broadcast ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a.data)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatch("add", a.shape, b.shape)
    _check_finite("add", out)
    ash, bsh = a.shape, b.shape

    def bwd(g):
        return (_unbroadcast(g, ash), _unbroadcast(g, bsh))

    return _record(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a.data)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeMismatch("sub", a.shape, b.shape)
    _check_finite("sub", out)
    ash, bsh = a.shape, b.shape

    def bwd(g):
        return (_unbroadcast(g, ash), -_unbroadcast(g, bsh))

    return _record(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, like=a.data)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatch("mul", a.shape, b.shape)
    _check_finite("mul", out)
    ad, bd = a.data, b.data

    def bwd(g):
        return (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))

    return _record(out, (a, b), bwd)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1] != b.shape[0] or b.data.ndim != 2:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    out = a.data @ b.data
    _check_finite("matmul", out)
    ad, bd = a.data, b.data

    def bwd(g):
        ga = g @ bd.T
        gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return (ga, gb)

    return _record(out, (a, b), bwd)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    out = np.exp(x.data)
    _check_finite("exp", out)

    def bwd(g):
        return (g * out,)

    return _record(out, (x,), bwd)


def log(x) -> Tensor:
    x = _as_tensor(x)
    if DEBUG and np.any(x.data <= 0):
        raise FloatingPointError("log: non-positive input")
    out = np.log(x.data)
    xd = x.data

    def bwd(g):
        return (g / xd,)

    return _record(out, (x,), bwd)


def sqrt(x) -> Tensor:
    x = _as_tensor(x)
    out = np.sqrt(x.data)
    _check_finite("sqrt", out)

    def bwd(g):
        return (g * (0.5 / np.maximum(out, np.finfo(out.dtype).tiny)),)

    return _record(out, (x,), bwd)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    out = np.tanh(x.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _record(out, (x,), bwd)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    out = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _record(out, (x,), bwd)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = np.maximum(x.data, 0)
    mask = x.data > 0

    def bwd(g):
        return (g * mask,)

    return _record(out, (x,), bwd)


# ---------------------------------------------------------------------------
# reductions / shape ops
# ---------------------------------------------------------------------------

def sum_(x, axis=None) -> Tensor:
    x = _as_tensor(x)
    out = np.asarray(x.data.sum(axis=axis), dtype=x.dtype)
    xsh = x.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, xsh).astype(g.dtype),)
        gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, xsh).astype(g.dtype),)

    return _record(out, (x,), bwd)


def mean_(x, axis=None) -> Tensor:
    x = _as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis=axis), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out = x.data.reshape(shape)
    xsh = x.shape

    def bwd(g):
        return (g.reshape(xsh),)

    return _record(out, (x,), bwd)


def take(x, key) -> Tensor:
    """Basic slice/index; backward scatters into a zero buffer."""
    x = _as_tensor(x)
    out = x.data[key]
    xsh, dt = x.shape, x.dtype
    fancy = any(isinstance(k, np.ndarray) for k in
                (key if isinstance(key, tuple) else (key,)))

    def bwd(g):
        buf = np.zeros(xsh, dtype=dt)
        if fancy:
            np.add.at(buf, key, g)  # repeated indices must accumulate
        else:
            buf[key] = g
        return (buf,)

    return _record(np.ascontiguousarray(out), (x,), bwd)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _record(out, ts, bwd)


def stack(tensors: Sequence, axis: int = 1) -> Tensor:
    """Stack equal-shaped tensors along a new axis."""
    ts = [_as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in ts], axis=axis)

    def bwd(g):
        parts = np.split(g, len(ts), axis=axis)
        return tuple(np.ascontiguousarray(p).reshape(ts[0].shape) for p in parts)

    return _record(out, ts, bwd)


def log_softmax(x, axis: int = -1) -> Tensor:
    """Numerically stabilized via max subtraction along ``axis``."""
    x = _as_tensor(x)
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bwd(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _record(out, (x,), bwd)


def logsumexp(x, axis: int = -1) -> Tensor:
    """max-shifted logsumexp; the shift is a detached constant."""
    x = _as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    shifted = sub(x, m)
    s = sum_(exp(shifted), axis=axis if axis >= 0 else x.data.ndim + axis)
    return add(log(s), np.squeeze(m, axis=axis))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def backward(tape: Tape, root: Tensor) -> None:
    """Populate ``tape.grads`` for every node reachable from ``root``.

    ``root`` must be scalar; d(root)/d(root) = 1.
    """
    if root.node is None:
        raise ValueError("backward: root is not attached to the tape")
    if root.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    tape.grads = {root.node: np.ones_like(root.data)}
    grads = tape.grads
    for nid in range(root.node, -1, -1):
        g = grads.get(nid)
        if g is None:
            continue
        input_ids, fn = tape.nodes[nid]
        if fn is None:
            continue
        for iid, ig in zip(input_ids, fn(g)):
            if iid < 0 or ig is None:
                continue
            acc = grads.get(iid)
            grads[iid] = ig if acc is None else acc + ig


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(builder: Callable, seed: int, dtype=np.float64, h: float = 1e-4,
               max_entries: int = 64) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``builder(rng)`` returns ``(params, forward)`` where ``params`` is a list
    of leaf Tensors and ``forward()`` recomputes the scalar loss from them.
    The numeric side always runs on float64 shadow copies of the parameters;
    the analytic side runs at ``dtype``.

    A builder may return a third element: per-parameter scales applied to the
    numeric gradient before comparison.  A gradient reversal layer makes the
    analytic gradient intentionally differ from the true derivative by a
    factor of -beta for everything upstream of the gate.
    """
    rng = np.random.default_rng(seed)
    built = builder(rng)
    params, forward = built[0], built[1]
    scales = built[2] if len(built) > 2 else [1.0] * len(params)
    originals = [p.data.copy() for p in params]

    for p, o in zip(params, originals):
        p.data = o.astype(dtype)
    with tape_scope() as t:
        for p in params:
            t.watch(p)
        loss = forward()
        backward(t, loss)
        analytic = [t.grad(p) for p in params]
    for p in params:
        p.node = None

    shadows = [o.astype(np.float64) for o in originals]
    err = 0.0
    for pi, p in enumerate(params):
        for q, s in zip(params, shadows):
            q.data = s
        flat = p.data.reshape(-1)
        n = flat.size
        idx = range(n) if n <= max_entries else rng.choice(n, max_entries, replace=False)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + h
            up = forward().item()
            flat[k] = orig - h
            dn = forward().item()
            flat[k] = orig
            num = scales[pi] * (up - dn) / (2 * h)
            ana = float(analytic[pi].reshape(-1)[k]) if analytic[pi] is not None else 0.0
            err = max(err, abs(ana - num) / max(1.0, abs(ana), abs(num)))

    for p, o in zip(params, originals):
        p.data = o
    return err
