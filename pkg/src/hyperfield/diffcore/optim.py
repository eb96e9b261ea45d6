"""Adam with bias correction, the exponential learning-rate decay, and
finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import ConfigError
from .tensor import backward


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def ensure(self, params):
        for name, t in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(t.value)
                self.v[name] = np.zeros_like(t.value)

    def to_arrays(self):
        out = {}
        for name in self.m:
            out[f"{name}.m"] = self.m[name]
            out[f"{name}.v"] = self.v[name]
        out["adam.step"] = np.array([self.step], dtype=np.float64)
        return out

    def load_arrays(self, arrays):
        self.step = int(arrays["adam.step"][0])
        for key, arr in arrays.items():
            if key.endswith(".m"):
                self.m[key[:-2]] = arr.copy()
            elif key.endswith(".v"):
                self.v[key[:-2]] = arr.copy()


def adam_step(params, state: AdamState, lr):
    """One bias-corrected Adam update of every trainable tensor, then zero grads."""
    state.ensure(params)
    for name, t in params.trainable():
        if not np.all(np.isfinite(t.grad)):
            raise NonFiniteGradient(f"non-finite gradient in {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, t in params.trainable():
        g = t.grad
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        t.value -= (lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(t.value.dtype, copy=False)
    params.zero_grads()


def lr_schedule(step, total, lr_start=1e-3, lr_end=1e-4):
    """Geometric interpolation from ``lr_start`` (step 0) to ``lr_end`` (step total)."""
    if lr_start <= 0 or lr_end <= 0:
        raise ConfigError("learning rates must be positive")
    if total <= 0 or step <= 0:
        return float(lr_start)
    if step >= total:
        return float(lr_end)
    return float(lr_start * (lr_end / lr_start) ** (step / total))


def _central_difference(loss_fn, flat, k, h, shrink=10.0, tries=4, agree=1e-5):
    """Central difference at entry k, shrinking h until two successive
    estimates agree (a step that straddles a ReLU kink gives a stale slope).
    Agreement allows for the rounding noise of the smaller step."""
    orig = flat[k]
    eps = np.finfo(np.float64).eps

    def estimate(step):
        flat[k] = orig + step
        up = float(loss_fn().value)
        flat[k] = orig - step
        down = float(loss_fn().value)
        flat[k] = orig
        return (up - down) / (2 * step), 4 * eps * max(abs(up), abs(down)) / step

    prev, _ = estimate(h)
    for _ in range(tries):
        h /= shrink
        cur, noise = estimate(h)
        if abs(cur - prev) <= agree * max(abs(cur), abs(prev)) + noise:
            return prev
        prev = cur
    return prev


def grad_check(loss_fn, params, h=1e-4, max_per_tensor=8, rng=None, names=None, analytic=None, floor=1e-10):
    """Compare tape gradients with central differences.

    ``loss_fn()`` must rebuild the loss from the current parameter values.
    Returns ``(max_rel_err, per_tensor)`` where the error is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)`` over sampled
    entries, so tiny gradients are judged relatively too.  Each numeric
    estimate comes from the first step size whose value a 10x smaller step
    reproduces.
    ``analytic`` overrides the tape gradients (used to test the harness).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if analytic is None:
        params.zero_grads()
        backward(loss_fn(), params)
        analytic = {n: t.grad.copy() for n, t in params.items()}
        params.zero_grads()
    per_tensor = {}
    for name, t in params.items():
        if names is not None and name not in names:
            continue
        flat = t.value.reshape(-1)
        count = min(max_per_tensor, flat.size)
        picks = rng.choice(flat.size, size=count, replace=False)
        worst = 0.0
        for k in picks:
            num = _central_difference(loss_fn, flat, k, h)
            a = analytic[name].reshape(-1)[k]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
        per_tensor[name] = worst
    return (max(per_tensor.values()) if per_tensor else 0.0), per_tensor
