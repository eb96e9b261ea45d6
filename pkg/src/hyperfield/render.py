"""Pinhole rays, stratified sampling and differentiable volume compositing."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .diffcore import tensor as T


@dataclass
class Camera:
    """Pinhole camera.

    ``rotation`` maps camera axes to world axes (columns: right, down,
    forward); ``position`` is the optical center in world units.
    """

    rotation: np.ndarray
    position: np.ndarray
    focal: float
    principal: tuple
    resolution: tuple  # (width, height)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.position = np.asarray(self.position, dtype=np.float64)
        self.principal = tuple(float(c) for c in self.principal)
        self.resolution = tuple(int(r) for r in self.resolution)
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-9):
            raise ValueError("camera rotation is not orthonormal")
        if self.focal <= 0:
            raise ValueError("focal length must be positive")

    @property
    def forward(self):
        return self.rotation[:, 2]

    def to_dict(self):
        return {
            "rotation": self.rotation.tolist(), "position": self.position.tolist(),
            "focal": float(self.focal), "principal": list(self.principal),
            "resolution": list(self.resolution),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["rotation"]), np.array(d["position"]), d["focal"], tuple(d["principal"]),
                   tuple(d["resolution"]))


def look_at(position, target, up=(0.0, 0.0, 1.0), focal=64.0, resolution=(64, 64)):
    position = np.asarray(position, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - position
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd], axis=1)
    w, h = resolution
    return Camera(rot, position, focal, (w / 2.0, h / 2.0), resolution)


@dataclass
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    near: float
    far: float


@dataclass
class RenderOutput:
    rgb: object
    acc: object
    depth: object
    weights: object


def generate_rays(camera: Camera, pixels):
    """Unit world-space directions through pixel centers.

    ``pixels`` is (u, v) or an array (N, 2) of column/row indices.  Returns
    origins and directions of shape (N, 3).
    """
    px = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    w, h = camera.resolution
    if np.any(px < 0) or np.any(px[:, 0] >= w) or np.any(px[:, 1] >= h):
        raise ValueError("pixel outside camera resolution")
    cx, cy = camera.principal
    d_cam = np.stack([(px[:, 0] + 0.5 - cx) / camera.focal, (px[:, 1] + 0.5 - cy) / camera.focal,
                      np.ones(len(px))], axis=-1)
    d = d_cam @ camera.rotation.T
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return np.broadcast_to(camera.position, d.shape).copy(), d


def all_pixels(camera: Camera):
    w, h = camera.resolution
    vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack([uu.ravel(), vv.ravel()], axis=-1)


def stratified_samples(near, far, n, rng=None, batch=None):
    """One draw per equal bin of [near, far]; ``rng=None`` gives bin midpoints.

    Returns ``(t, deltas)`` of shape (batch, n), or (n,) when batch is None.
    """
    if n < 2:
        raise ValueError("need at least two samples per ray")
    shape = (n,) if batch is None else (batch, n)
    near = np.asarray(near, dtype=np.float64)
    far = np.asarray(far, dtype=np.float64)
    if batch is not None:
        near = np.broadcast_to(near, (batch,))[:, None]
        far = np.broadcast_to(far, (batch,))[:, None]
    u = np.full(shape, 0.5) if rng is None else rng.random(shape)
    width = (far - near) / n
    t = near + (np.arange(n) + u) * width
    deltas = np.empty_like(t)
    deltas[..., :-1] = t[..., 1:] - t[..., :-1]
    deltas[..., -1] = (far - t[..., -1]) if batch is None else (far[:, 0] - t[..., -1])
    return t, deltas


def composite(colors, sigmas, deltas, background=(1.0, 1.0, 1.0), t=None):
    """Alpha-composite per-sample colors (R, S, 3) and densities (R, S[, 1])."""
    sigmas = T.as_tensor(sigmas)
    if sigmas.ndim == 3:
        sigmas = T.reshape(sigmas, sigmas.shape[:2])
    colors = T.as_tensor(colors)
    deltas = np.asarray(T.value_of(deltas), dtype=sigmas.dtype)
    sd = T.mul(sigmas, deltas)
    alpha = 1.0 - T.exp(T.neg(sd))
    trans = T.exp(T.neg(T.sub(T.cumsum(sd, axis=-1), sd)))
    weights = T.mul(alpha, trans)
    acc = T.sum_(weights, axis=-1)
    bg = np.asarray(background, dtype=sigmas.dtype)
    rgb = T.sum_(T.mul(T.reshape(weights, weights.shape + (1,)), colors), axis=-2)
    rgb = rgb + T.mul(T.reshape(1.0 - acc, acc.shape + (1,)), bg)
    depth = None
    if t is not None:
        tv = np.asarray(t, dtype=sigmas.dtype)
        depth = T.div(T.sum_(T.mul(weights, tv), axis=-1), T.as_tensor(np.maximum(acc.value, 1e-10)))
    return RenderOutput(rgb, acc, depth, weights)


def render_rays(field_fn, origins, dirs, near, far, n_samples, rng=None, background=(1.0, 1.0, 1.0),
                dtype=np.float64):
    """March rays through ``field_fn(points (N,3), dirs (N,3)) -> (rgb, sigma)``."""
    r = len(origins)
    t, deltas = stratified_samples(near, far, n_samples, rng, batch=r)
    pts = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    dirs_rep = np.broadcast_to(dirs[:, None, :], pts.shape)
    rgb, sigma = field_fn(pts.reshape(-1, 3).astype(dtype), dirs_rep.reshape(-1, 3).astype(dtype))
    rgb = T.reshape(T.as_tensor(rgb), (r, n_samples, 3))
    sigma = T.reshape(T.as_tensor(sigma), (r, n_samples))
    return composite(rgb, sigma, deltas, background, t=t)


def render_camera(field_fn, camera: Camera, near, far, n_samples, rng=None, background=(1.0, 1.0, 1.0),
                  chunk=4096, threads=1, dtype=np.float64):
    """Render every pixel; returns dict of rgb (H,W,3), acc (H,W), depth (H,W).

    Chunks are gathered in row-major order regardless of ``threads``.  With an
    rng the per-chunk jitter is drawn up front so results do not depend on
    thread scheduling.
    """
    w, h = camera.resolution
    origins, dirs = generate_rays(camera, all_pixels(camera))
    starts = list(range(0, len(origins), chunk))
    jitters = [None if rng is None else np.random.default_rng(rng.integers(2**63)) for _ in starts]

    def work(k):
        s = starts[k]
        out = render_rays(field_fn, origins[s:s + chunk], dirs[s:s + chunk], near, far, n_samples,
                          jitters[k], background, dtype)
        return out.rgb.value, out.acc.value, out.depth.value

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, range(len(starts))))
    else:
        parts = [work(k) for k in range(len(starts))]
    rgb = np.concatenate([p[0] for p in parts]).reshape(h, w, 3)
    acc = np.concatenate([p[1] for p in parts]).reshape(h, w)
    depth = np.concatenate([p[2] for p in parts]).reshape(h, w)
    bad = ~np.isfinite(rgb).all(axis=-1)
    if bad.any():
        v, u = np.argwhere(bad)[0]
        raise FloatingPointError(f"non-finite radiance at pixel (u={u}, v={v})")
    return {"rgb": rgb, "acc": acc, "depth": depth}


def render_image(camera, frame, step, params, cfg, n_samples, background=(1.0, 1.0, 1.0), near=2.0,
                 far=6.0, rng=None, codes=None, chunk=4096, threads=1):
    """Render a model frame.  ``codes`` (from interpolate_codes) overrides ``frame``."""
    from .field import broadcast_codes, field_query, gather_codes, schedules_at

    alpha, beta = schedules_at(cfg, step)

    def field_fn(pts, dirs):
        n = len(pts)
        with T.no_grad():
            c = broadcast_codes(codes, n) if codes is not None else gather_codes(params, cfg, np.full(n, frame))
            rgb, sigma = field_query(params, cfg, pts, dirs, c, alpha, beta)
        return rgb.value, sigma.value

    return render_camera(field_fn, camera, near, far, n_samples, rng, background, chunk, threads,
                         dtype=params.dtype)
