"""Forward-mode tangents carried alongside tape tensors.

A :class:`Dual` pairs a primal Tensor of shape ``S`` with a tangent Tensor of
shape ``(K,) + S`` holding K directional derivatives.  Both halves live on the
reverse-mode tape, so a loss built from tangents (e.g. a Jacobian penalty) is
itself differentiable with respect to the parameters.

The module-level functions accept either a Tensor or a Dual, which lets one
piece of model code serve both plain evaluation and Jacobian evaluation.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Dual:
    __slots__ = ("primal", "tangent")
    __array_priority__ = 1001

    def __init__(self, primal, tangent):
        self.primal = T.as_tensor(primal)
        self.tangent = T.as_tensor(tangent)

    @classmethod
    def seed(cls, x):
        """Seed tangents with the identity along the last axis of ``x``."""
        x = T.as_tensor(x)
        k = x.shape[-1]
        eye = np.zeros((k,) + x.shape, dtype=x.dtype)
        for i in range(k):
            eye[i, ..., i] = 1.0
        return cls(x, eye)

    @property
    def shape(self):
        return self.primal.shape

    def jacobian(self):
        """Return J with J[..., i, k] = d out_i / d in_k as a Tensor."""
        t = self.tangent
        perm = tuple(range(1, t.ndim)) + (0,)
        return _transpose(t, perm)

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
        return Dual(T.neg(self.primal), T.neg(self.tangent))

    def __matmul__(self, w):
        return matmul(self, w)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _transpose(a, perm):
    inv = np.argsort(perm)
    return T._make(np.transpose(a.value, perm), (a,), lambda g: (np.transpose(g, inv),))


def _split(x):
    if isinstance(x, Dual):
        return x.primal, x.tangent
    if isinstance(x, (int, float)):
        return x, None  # tensor ops match a bare scalar to the other dtype
    return T.as_tensor(x), None


def add(a, b):
    (pa, ta), (pb, tb) = _split(a), _split(b)
    p = T.add(pa, pb)
    if ta is None and tb is None:
        return p
    if ta is None:
        t = T.broadcast_to(tb, (tb.shape[0],) + p.shape)
    elif tb is None:
        t = T.broadcast_to(ta, (ta.shape[0],) + p.shape)
    else:
        t = T.add(ta, tb)
    return Dual(p, t)


def sub(a, b):
    return add(a, neg(b))


def neg(a):
    if isinstance(a, Dual):
        return -a
    if isinstance(a, (int, float)):
        return -a
    return T.neg(a)


def mul(a, b):
    (pa, ta), (pb, tb) = _split(a), _split(b)
    p = T.mul(pa, pb)
    if ta is None and tb is None:
        return p
    if ta is None:
        t = T.mul(tb, pa)
    elif tb is None:
        t = T.mul(ta, pb)
    else:
        t = T.add(T.mul(ta, pb), T.mul(tb, pa))
    return Dual(p, t)


def div(a, b):
    (pa, ta), (pb, tb) = _split(a), _split(b)
    p = T.div(pa, pb)
    if ta is None and tb is None:
        return p
    if tb is None:
        return Dual(p, T.div(ta, pb))
    # d(a/b) = (da - p db) / b
    num = T.neg(T.mul(tb, p)) if ta is None else T.sub(ta, T.mul(tb, p))
    return Dual(p, T.div(num, pb))


def _unary(x, f, df):
    if not isinstance(x, Dual):
        return f(x)
    return Dual(f(x.primal), T.mul(x.tangent, df(x.primal)))


def sin(x):
    return _unary(x, T.sin, T.cos)


def cos(x):
    return _unary(x, T.cos, lambda p: T.neg(T.sin(p)))


def exp(x):
    if not isinstance(x, Dual):
        return T.exp(x)
    e = T.exp(x.primal)
    return Dual(e, T.mul(x.tangent, e))


def sqrt(x):
    if not isinstance(x, Dual):
        return T.sqrt(x)
    s = T.sqrt(x.primal)
    return Dual(s, T.div(x.tangent, T.mul(s, 2.0)))


def square(x):
    return mul(x, x)


def relu(x):
    if not isinstance(x, Dual):
        return T.relu(x)
    mask = (x.primal.value > 0).astype(x.primal.dtype)
    return Dual(T.relu(x.primal), T.mul(x.tangent, mask))


def matmul(x, w):
    """``x @ w`` where only ``x`` may carry tangents."""
    if not isinstance(x, Dual):
        return T.matmul(x, w)
    return Dual(T.matmul(x.primal, w), T.matmul(x.tangent, w))


def concat(items, axis=-1):
    if axis >= 0:
        raise ValueError("concat over Dual values needs a negative axis")
    if not any(isinstance(i, Dual) for i in items):
        return T.concat(items, axis=axis)
    primals = [_split(i)[0] for i in items]
    p = T.concat(primals, axis=axis)
    k = next(i.tangent.shape[0] for i in items if isinstance(i, Dual))
    tangents = []
    for i, pr in zip(items, primals):
        if isinstance(i, Dual):
            tangents.append(i.tangent)
        else:
            tangents.append(np.zeros((k,) + pr.shape, dtype=pr.dtype))
    return Dual(p, T.concat(tangents, axis=axis))


def getitem(x, idx):
    """Indexing; ``idx`` must start with Ellipsis so it also fits tangents."""
    if not isinstance(x, Dual):
        return T.getitem(x, idx)
    if not (isinstance(idx, tuple) and idx and idx[0] is Ellipsis):
        raise ValueError("Dual indexing requires an index starting with Ellipsis")
    return Dual(T.getitem(x.primal, idx), T.getitem(x.tangent, idx))


def permute_last(x, perm):
    if not isinstance(x, Dual):
        return T.permute_last(x, perm)
    return Dual(T.permute_last(x.primal, perm), T.permute_last(x.tangent, perm))


def sum_last(x, keepdims=False):
    if not isinstance(x, Dual):
        return T.sum_(x, axis=-1, keepdims=keepdims)
    return Dual(T.sum_(x.primal, axis=-1, keepdims=keepdims), T.sum_(x.tangent, axis=-1, keepdims=keepdims))


def where(mask, a, b):
    mask = np.asarray(T.value_of(mask), dtype=bool)
    (pa, ta), (pb, tb) = _split(a), _split(b)
    p = T.where(mask, pa, pb)
    if ta is None and tb is None:
        return p
    k = (ta if ta is not None else tb).shape[0]
    shape = (k,) + p.shape
    ta = np.zeros(shape, dtype=p.dtype) if ta is None else ta
    tb = np.zeros(shape, dtype=p.dtype) if tb is None else tb
    return Dual(p, T.where(mask, ta, tb))


def primal(x):
    return x.primal if isinstance(x, Dual) else x


def is_dual(x):
    return isinstance(x, Dual)


__all__ = [
    "Dual", "Tensor", "add", "sub", "neg", "mul", "div", "sin", "cos", "exp", "sqrt",
    "square", "relu", "matmul", "concat", "getitem", "permute_last", "sum_last", "where", "primal", "is_dual",
]
