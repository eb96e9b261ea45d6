"""PNG / PPM image writers and readers."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img):
    return np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def write_png(path, img):
    """Write an [0,1] float RGB (H,W,3) or grayscale (H,W) image as 8-bit PNG."""
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def write_ppm(path, img):
    """Binary P6 fallback writer (8-bit RGB)."""
    data = to_uint8(img)
    if data.ndim == 2:
        data = np.repeat(data[..., None], 3, axis=-1)
    h, w, _ = data.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a P6 file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    data = np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return data.astype(np.float64) / maxval


def write_gray16(path, values):
    """16-bit grayscale PNG normalised to [min, max]; range kept in ``<path>.txt``."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    scale = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
    Image.fromarray(np.round(scale * 65535).astype(np.uint16)).save(path, format="PNG")
    Path(str(path) + ".txt").write_text(f"min\t{lo!r}\nmax\t{hi!r}\n")


def read_gray16(path):
    lo = hi = 0.0
    for line in Path(str(path) + ".txt").read_text().splitlines():
        key, val = line.split("\t")
        if key == "min":
            lo = float(val)
        elif key == "max":
            hi = float(val)
    raw = np.asarray(Image.open(path)).astype(np.float64) / 65535.0
    return lo + raw * (hi - lo)


def read_png(path):
    """Read an 8-bit PNG as float RGB in [0,1]."""
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
