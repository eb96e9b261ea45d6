"""Sinusoidal positional encodings with coarse-to-fine windowing."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .diffcore import dual as D
from .diffcore import tensor as T


@dataclass(frozen=True)
class EncodingConfig:
    """Bands ``j`` in ``[m_min, m_max)`` each contribute sin/cos of ``2**j * x``."""

    input_dim: int
    m_max: int
    m_min: int = 0
    include_identity: bool = True

    def __post_init__(self):
        if self.m_min > self.m_max:
            raise ValueError(f"m_min={self.m_min} exceeds m_max={self.m_max}")

    @property
    def num_bands(self):
        return self.m_max - self.m_min

    @property
    def output_dim(self):
        return self.input_dim * 2 * self.num_bands + (self.input_dim if self.include_identity else 0)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class WindowSchedule:
    """Zero through ``delay_steps``, then a linear ramp to ``max_value``."""

    delay_steps: int
    ramp_steps: int
    max_value: float

    def to_dict(self):
        return asdict(self)


def _band_scales(cfg, dtype):
    return (2.0 ** np.arange(cfg.m_min, cfg.m_max)).astype(dtype)


def _bands(x, cfg, weights=None):
    """Band features grouped as [sin(band 0), cos(band 0), sin(band 1), ...]."""
    xp = D.primal(x)
    dtype = xp.dtype if xp.dtype.kind == "f" else np.float64
    scales = _band_scales(cfg, dtype)
    # (..., d) * (bands,) laid out band-major: (..., bands*d)
    tiled = D.concat([x] * cfg.num_bands, axis=-1)
    freq = np.repeat(scales, cfg.input_dim)
    arg = D.mul(tiled, freq)
    s, c = D.sin(arg), D.cos(arg)
    if weights is not None:
        wrep = np.repeat(weights.astype(dtype), cfg.input_dim)
        s, c = D.mul(s, wrep), D.mul(c, wrep)
    d, nb = cfg.input_dim, cfg.num_bands
    # interleave to [sin b0 | cos b0 | sin b1 | ...], each block d wide
    perm = np.empty(2 * nb * d, dtype=np.int64)
    for b in range(nb):
        perm[2 * b * d:(2 * b + 1) * d] = np.arange(b * d, (b + 1) * d)
        perm[(2 * b + 1) * d:(2 * b + 2) * d] = nb * d + np.arange(b * d, (b + 1) * d)
    return [D.permute_last(D.concat([s, c], axis=-1), perm)]


def posenc(x, cfg: EncodingConfig):
    """Encode the last axis of ``x``; identity (if kept) comes first."""
    x = x if D.is_dual(x) else T.as_tensor(x)
    parts = [x] if cfg.include_identity else []
    if cfg.num_bands:
        parts += _bands(x, cfg)
    if not parts:
        raise ValueError("encoding with no bands and no identity is empty")
    return D.concat(parts, axis=-1) if len(parts) > 1 else parts[0]


def window_weight(j, alpha):
    """Truncated Hann weight of band ``j`` (counted from the lowest band)."""
    t = np.clip(np.asarray(alpha, dtype=np.float64) - j, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * t))


def windowed_posenc(x, alpha, cfg: EncodingConfig):
    """Positional encoding with band ``j`` scaled by ``window_weight(j, alpha)``."""
    x = x if D.is_dual(x) else T.as_tensor(x)
    parts = [x] if cfg.include_identity else []
    if cfg.num_bands:
        weights = window_weight(np.arange(cfg.num_bands), alpha)
        parts += _bands(x, cfg, weights=weights)
    return D.concat(parts, axis=-1) if len(parts) > 1 else parts[0]


def schedule_value(step, sched: WindowSchedule):
    if step <= sched.delay_steps:
        return 0.0
    if sched.ramp_steps <= 0:
        return float(sched.max_value)
    frac = min(1.0, (step - sched.delay_steps) / sched.ramp_steps)
    return float(sched.max_value * frac)
