"""Tape-based reverse-mode differentiation over numpy arrays.

Every differentiable op returns a :class:`Tensor` that remembers its parents
and a closure mapping the output cotangent to parent cotangents.  Nodes whose
parents are all constants are not recorded, so evaluating an analytic field
through these ops costs little more than plain numpy.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np


class ContractError(ValueError):
    """Raised when an op is called outside its documented contract."""


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "name", "requires_grad")
    __array_priority__ = 1000

    def __init__(self, value, parents=(), backward_fn=None, name=None, requires_grad=False):
        self.value = np.asarray(value)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"

    def numpy(self):
        return self.value

    # arithmetic sugar
    def __add__(self, other):
        if _defers(other):
            return NotImplemented
        return add(self, other)

    def __radd__(self, other):
        if _defers(other):
            return NotImplemented
        return add(other, self)

    def __sub__(self, other):
        if _defers(other):
            return NotImplemented
        return sub(self, other)

    def __rsub__(self, other):
        if _defers(other):
            return NotImplemented
        return sub(other, self)

    def __mul__(self, other):
        if _defers(other):
            return NotImplemented
        return mul(self, other)

    def __rmul__(self, other):
        if _defers(other):
            return NotImplemented
        return mul(other, self)

    def __truediv__(self, other):
        if _defers(other):
            return NotImplemented
        return div(self, other)

    def __rtruediv__(self, other):
        if _defers(other):
            return NotImplemented
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _defers(other):
    # forward-mode duals handle mixed arithmetic themselves
    return hasattr(other, "tangent")


def leaf(value, name=None):
    """A trainable leaf with a zero-initialised gradient buffer."""
    t = Tensor(np.array(value), name=name, requires_grad=True)
    t.grad = np.zeros_like(t.value)
    return t


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    if _defers(x):
        raise TypeError("cannot use a Dual where a Tensor is required")
    return Tensor(np.asarray(x, dtype=dtype))


def value_of(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def _unbroadcast(g, shape):
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


def _pair(a, b):
    """Tensor pair where bare Python scalars take the other operand's float dtype."""
    if isinstance(a, (int, float)) and not isinstance(a, bool) and isinstance(b, Tensor) and b.dtype.kind == "f":
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    if isinstance(b, (int, float)) and not isinstance(b, bool) and isinstance(a, Tensor) and a.dtype.kind == "f":
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    return as_tensor(a), as_tensor(b)


_RECORDING = threading.local()


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording backward nodes (inference renders)."""
    prev = getattr(_RECORDING, "off", False)
    _RECORDING.off = True
    try:
        yield
    finally:
        _RECORDING.off = prev


def _make(value, parents, backward_fn):
    if getattr(_RECORDING, "off", False):
        return Tensor(value)
    parents = tuple(as_tensor(p) for p in parents)
    if any(p.requires_grad for p in parents):
        return Tensor(value, parents, backward_fn, requires_grad=True)
    return Tensor(value)


# ---------------------------------------------------------------------------
# elementwise binary ops (numpy broadcasting)


def add(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.value + b.value, (a, b), bw)


def sub(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.value - b.value, (a, b), bw)


def mul(a, b):
    a, b = _pair(a, b)

    def bw(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _make(a.value * b.value, (a, b), bw)


def div(a, b):
    a, b = _pair(a, b)
    out = a.value / b.value

    def bw(g):
        gb = g / b.value
        return _unbroadcast(gb, a.shape), _unbroadcast(-gb * out, b.shape)

    return _make(out, (a, b), bw)


def neg(a):
    a = as_tensor(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def power(a, p):
    """``a ** p`` for a constant real exponent."""
    a = as_tensor(a)
    p = float(p)
    if p == 2.0:
        return _make(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,))
    return _make(a.value**p, (a,), lambda g: (g * p * a.value ** (p - 1.0),))


def square(a):
    return power(a, 2)


def where(mask, a, b):
    """Select ``a`` where ``mask`` holds, else ``b``; ``mask`` is constant."""
    mask = np.asarray(value_of(mask), dtype=bool)
    a, b = _pair(a, b)

    def bw(g):
        zero = np.zeros_like(g)
        return (
            _unbroadcast(np.where(mask, g, zero), a.shape),
            _unbroadcast(np.where(mask, zero, g), b.shape),
        )

    return _make(np.where(mask, a.value, b.value), (a, b), bw)


def clip(a, lo, hi):
    """Clamp to ``[lo, hi]``; zero gradient outside the interval."""
    a = as_tensor(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return _make(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# unary ops


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return _make(np.log(a.value), (a,), lambda g: (g / a.value,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _make(out, (a,), lambda g: (0.5 * g / out,))


def sin(a):
    a = as_tensor(a)
    return _make(np.sin(a.value), (a,), lambda g: (g * np.cos(a.value),))


def cos(a):
    a = as_tensor(a)
    return _make(np.cos(a.value), (a,), lambda g: (-g * np.sin(a.value),))


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.value, 0)
    return _make(out, (a,), lambda g: (g * (out > 0),))


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a):
    a = as_tensor(a)
    x = a.value
    out = np.logaddexp(0.0, x).astype(x.dtype, copy=False)

    def bw(g):
        return (g * 0.5 * (1.0 + np.tanh(0.5 * x)),)

    return _make(out, (a,), bw)


# ---------------------------------------------------------------------------
# shape and reduction ops


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2:
        raise ContractError(f"matmul expects a 2-D right operand, got shape {b.shape}")

    def bw(g):
        ga = g @ b.value.T
        flat_a = a.value.reshape(-1, a.shape[-1])
        gb = flat_a.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(a.value @ b.value, (a, b), bw)


def einsum(subscripts, a, b):
    """Two-operand einsum; every operand index must survive in the output or
    the other operand, which covers batched contractions and outer products."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    for s, other in ((sa, sb), (sb, sa)):
        if any(c not in out and c not in other for c in s):
            raise ContractError(f"einsum {subscripts!r}: an index is summed inside one operand")

    def bw(g):
        return (
            np.einsum(f"{out},{sb}->{sa}", g, b.value),
            np.einsum(f"{out},{sa}->{sb}", g, a.value),
        )

    return _make(np.einsum(subscripts, a.value, b.value), (a, b), bw)


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def cumsum(a, axis=-1):
    a = as_tensor(a)

    def bw(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _make(np.cumsum(a.value, axis=axis), (a,), bw)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    values = [t.value for t in tensors]
    out = np.concatenate(values, axis=axis)
    ax = axis % out.ndim
    splits = np.cumsum([v.shape[ax] for v in values])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=ax))

    return _make(out, tensors, bw)


def stack(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.value for t in tensors], axis=axis)
    ax = axis % out.ndim

    def bw(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return _make(out, tensors, bw)


def getitem(a, idx):
    """Basic (slice/integer) indexing; use :func:`take` for gathers."""
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.value)
        full[idx] = g
        return (full,)

    return _make(a.value[idx], (a,), bw)


def take(a, indices):
    """Row gather ``a[indices]`` with an ordered scatter-add backward."""
    a = as_tensor(a)
    indices = np.asarray(indices)

    def bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, indices, g)
        return (full,)

    return _make(a.value[indices], (a,), bw)


def permute_last(a, perm):
    """Reorder the last axis by the permutation ``perm``."""
    a = as_tensor(a)
    perm = np.asarray(perm)
    inv = np.argsort(perm)
    return _make(a.value[..., perm], (a,), lambda g: (g[..., inv],))


def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def broadcast_to(a, shape):
    a = as_tensor(a)
    return _make(np.broadcast_to(a.value, shape), (a,), lambda g: (_unbroadcast(g, a.shape),))


def sym_spectral_sum(m, fn, dfn):
    """``sum_k fn(lambda_k)`` over eigenvalues of a batch of symmetric matrices.

    ``m`` has shape (..., n, n).  The gradient ``U diag(dfn(lambda)) U^T`` is
    well defined even for repeated eigenvalues.  Returns shape (...,).
    """
    m = as_tensor(m)
    lam, u = np.linalg.eigh(m.value)

    def bw(g):
        d = dfn(lam)
        gm = np.einsum("...ik,...k,...jk->...ij", u, d, u)
        return (g[..., None, None] * gm,)

    return _make(fn(lam).sum(axis=-1), (m,), bw)


# ---------------------------------------------------------------------------
# reverse sweep


def _topo_order(root):
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss, params=None):
    """Accumulate ``d loss / d leaf`` into every reachable leaf's ``grad``.

    ``params`` (a ParamStore) is optional; when given, only its tensors are
    expected as leaves and repeated calls accumulate additively.
    """
    loss = as_tensor(loss)
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.value)
            node.grad += g.astype(node.grad.dtype, copy=False)
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
