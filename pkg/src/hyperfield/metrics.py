"""Image-quality and mask-topology metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

PSNR_CAP = 99.0


@dataclass
class MetricRecord:
    name: str
    frame: int
    value: float
    units: str = ""

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"metric {self.name} for frame {self.frame} is not finite")


def mse(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a, b):
    """Peak signal-to-noise ratio of [0,1] images in dB, capped at 99."""
    err = mse(a, b)
    if err <= 10 ** (-PSNR_CAP / 10):
        return PSNR_CAP
    return float(min(PSNR_CAP, -10.0 * np.log10(err)))


def mask_components(acc, threshold=0.5):
    """Number of 4-connected components of ``acc > threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    _, count = ndimage.label(np.asarray(acc) > threshold, structure=structure)
    return int(count)
