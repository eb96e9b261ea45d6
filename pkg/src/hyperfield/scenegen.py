"""Analytic topologically varying scenes and the on-disk dataset format.

Dataset layout::

    <root>/dataset.json      manifest (see ``MANIFEST_VERSION``)
    <root>/rgb/00000.png     8-bit ground-truth frames
    <root>/acc/00000.png     16-bit accumulated opacity (+ .txt range sidecar)
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .render import Camera, look_at, render_camera

MANIFEST_FORMAT = "hyperfield-dataset"
MANIFEST_VERSION = 1
SHELL = 0.02
BUILTINS = ("sphere-split", "torus-open", "static-sphere")


class DatasetError(IOError):
    pass


@dataclass
class AnalyticScene:
    """Closed-form ``field(x, t) -> (sigma (N,), rgb (N, 3))`` with metadata."""

    name: str
    field: object
    bounds: tuple = ((-1.2, -1.2, -1.2), (1.2, 1.2, 1.2))
    topology_events: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def __call__(self, x, t):
        return self.field(np.asarray(x, dtype=np.float64), float(t))


def _ramp(signed):
    """Occupancy in [0, 1] rising across a SHELL-wide band centred on 0."""
    return np.clip(signed / SHELL + 0.5, 0.0, 1.0)


def _shade(base, normal_z):
    return np.asarray(base)[None, :] * (0.65 + 0.35 * normal_z[:, None])


def _sphere_split(radius=0.45, max_separation=1.2, density=1.0):
    base = np.array([0.85, 0.35, 0.25])

    def fn(x, t):
        half = 0.5 * max_separation * t
        occs, shades = [], []
        for sgn in (-1.0, 1.0):
            rel = x - np.array([sgn * half, 0.0, 0.0])
            dist = np.linalg.norm(rel, axis=-1)
            occs.append(_ramp(radius - dist))
            shades.append(_shade(base, rel[:, 2] / np.maximum(dist, 1e-9)))
        occ = np.maximum(occs[0], occs[1])
        wsum = occs[0] + occs[1]
        rgb = (occs[0][:, None] * shades[0] + occs[1][:, None] * shades[1]) / np.maximum(wsum, 1e-9)[:, None]
        rgb = np.where(wsum[:, None] > 0, rgb, base[None, :])
        return density * occ, np.clip(rgb, 0.0, 1.0)

    t_split = 2 * radius / max_separation
    events = [{"time": t_split, "before": 1, "after": 2, "description": "spheres separate"}]
    return fn, events


def _torus_open(major=0.6, minor=0.22, max_gap_deg=90.0, density=1.0):
    base = np.array([0.25, 0.6, 0.35])

    def fn(x, t):
        rho = np.hypot(x[:, 0], x[:, 1])
        tube = np.hypot(rho - major, x[:, 2])
        occ = _ramp(minor - tube)
        half_gap = 0.5 * np.deg2rad(max_gap_deg) * t
        if half_gap > 0:
            phi = np.abs(np.arctan2(x[:, 1], x[:, 0]))
            cut = _ramp(major * (half_gap - phi)) * min(1.0, half_gap * major / (0.5 * SHELL))
            occ = occ * (1.0 - cut)
        rgb = _shade(base, x[:, 2] / np.maximum(tube, 1e-9))
        return density * occ, np.clip(rgb, 0.0, 1.0)

    events = [{"time": 0.0, "before": 1, "after": 1, "description": "ring opens at the +x seam"}]
    return fn, events


def _static_sphere(radius=0.5, density=1.0):
    base = np.array([0.3, 0.45, 0.85])

    def fn(x, t):
        dist = np.linalg.norm(x, axis=-1)
        return density * _ramp(radius - dist), np.clip(_shade(base, x[:, 2] / np.maximum(dist, 1e-9)), 0, 1)

    return fn, []


_BOUNDS = {
    "sphere-split": ((-1.1, -0.5, -0.5), (1.1, 0.5, 0.5)),
    "torus-open": ((-0.85, -0.85, -0.25), (0.85, 0.85, 0.25)),
    "static-sphere": ((-0.55, -0.55, -0.55), (0.55, 0.55, 0.55)),
}


def builtin_scene(name, **kwargs) -> AnalyticScene:
    """One of ``BUILTINS``; keyword arguments override geometry/density."""
    makers = {"sphere-split": _sphere_split, "torus-open": _torus_open, "static-sphere": _static_sphere}
    if name not in makers:
        raise KeyError(f"unknown scene {name!r}; builtins: {', '.join(BUILTINS)}")
    fn, events = makers[name](**kwargs)
    return AnalyticScene(name, fn, bounds=_BOUNDS[name], topology_events=events, params=dict(kwargs))


def orbit_cameras(n_frames, radius=3.0, height=0.6, center_azimuth=-90.0, amplitude=40.0, cycles=2.0,
                  focal=None, resolution=(64, 64)):
    """Camera swaying around ``center_azimuth`` while the scene evolves.

    ``focal`` defaults to 88 px at 64 px width and scales with the width, so the field of view is fixed.
    """
    focal = 88.0 * resolution[0] / 64 if focal is None else focal
    cams = []
    for k in range(n_frames):
        t = k / max(1, n_frames - 1)
        az = np.deg2rad(center_azimuth + amplitude * np.sin(2 * np.pi * cycles * t))
        pos = np.array([radius * np.cos(az), radius * np.sin(az), height])
        cams.append(look_at(pos, (0.0, 0.0, 0.0), focal=focal, resolution=resolution))
    return cams


def heldout_mask(n_frames, every=8, offset=4):
    return np.array([(k % every) == offset for k in range(n_frames)])


def render_ground_truth(scene, camera, t, near, far, samples, background=(1.0, 1.0, 1.0)):
    def field_fn(pts, dirs):
        sigma, rgb = scene(pts, t)
        return rgb, sigma

    return render_camera(field_fn, camera, near, far, samples, rng=None, background=background, chunk=512)


@dataclass
class Dataset:
    root: Path
    manifest: dict
    cameras: list
    images: np.ndarray
    times: np.ndarray
    train_idx: np.ndarray
    heldout_idx: np.ndarray

    @property
    def near(self):
        return self.manifest["near"]

    @property
    def far(self):
        return self.manifest["far"]

    @property
    def background(self):
        return tuple(self.manifest.get("background", (1.0, 1.0, 1.0)))

    @property
    def n_frames(self):
        return len(self.cameras)


def generate_dataset(scene, out_dir, n_frames=40, resolution=(64, 64), samples=1024, orbit=None,
                     seed=0, holdout_every=8, background=(1.0, 1.0, 1.0)):
    """Render ground-truth frames of ``scene`` along a monocular orbit."""
    if n_frames <= 0 or min(resolution) <= 0:
        raise ValueError("frame count and resolution must be positive")
    if isinstance(scene, str):
        scene = builtin_scene(scene)
    orbit = dict(orbit or {})
    root = Path(out_dir)
    (root / "rgb").mkdir(parents=True, exist_ok=True)
    (root / "acc").mkdir(parents=True, exist_ok=True)
    cams = orbit_cameras(n_frames, resolution=tuple(resolution), **orbit)
    radius = orbit.get("radius", 3.0)
    extent = float(np.linalg.norm(np.abs(np.asarray(scene.bounds)).max(axis=0)))
    dist = float(np.linalg.norm(cams[0].position))
    near, far = max(0.05, dist - extent), dist + extent
    held = heldout_mask(n_frames, holdout_every)
    frames = []
    for k, cam in enumerate(cams):
        t = k / max(1, n_frames - 1)
        out = render_ground_truth(scene, cam, t, near, far, samples, background)
        name = f"{k:05d}.png"
        try:
            imageio.write_png(root / "rgb" / name, out["rgb"])
            imageio.write_gray16(root / "acc" / name, out["acc"])
        except OSError as exc:
            raise DatasetError(f"failed writing frame {k} under {root}: {exc}") from exc
        frames.append({
            "index": k, "time": t, "image": f"rgb/{name}", "acc": f"acc/{name}",
            "camera": cam.to_dict(), "split": "heldout" if held[k] else "train",
        })
    manifest = {
        "format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, "scene": scene.name,
        "scene_params": scene.params, "n_frames": n_frames, "resolution": list(resolution),
        "near": near, "far": far, "bounds": [list(b) for b in scene.bounds],
        "background": list(background), "samples": samples, "seed": seed,
        "orbit": {"radius": radius, **orbit}, "topology_events": scene.topology_events, "frames": frames,
    }
    (root / "dataset.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return load_dataset(root)


def load_dataset(path) -> Dataset:
    root = Path(path)
    mpath = root / "dataset.json"
    if not mpath.exists():
        raise DatasetError(f"{mpath}: manifest not found")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{mpath}: malformed manifest ({exc})") from exc
    if manifest.get("format") != MANIFEST_FORMAT or manifest.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"{mpath}: unsupported format/version "
                           f"{manifest.get('format')!r}/{manifest.get('version')!r}")
    try:
        w, h = manifest["resolution"]
        frames = manifest["frames"]
        cams, images, times = [], [], []
        for fr in frames:
            img_path = root / fr["image"]
            if not img_path.exists():
                raise DatasetError(f"missing image {img_path}")
            img = imageio.read_png(img_path)
            if img.shape[:2] != (h, w):
                raise DatasetError(f"{img_path}: resolution {img.shape[1]}x{img.shape[0]} != declared {w}x{h}")
            t = float(fr["time"])
            if not 0.0 <= t <= 1.0:
                warnings.warn(f"frame {fr['index']}: time {t} outside [0, 1]", stacklevel=2)
            cams.append(Camera.from_dict(fr["camera"]))
            images.append(img)
            times.append(t)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{mpath}: invalid manifest ({exc!r})") from exc
    split = np.array([fr.get("split", "train") for fr in frames])
    return Dataset(root, manifest, cams, np.stack(images), np.array(times),
                   np.flatnonzero(split == "train"), np.flatnonzero(split == "heldout"))
