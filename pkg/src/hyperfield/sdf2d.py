"""Two-dimensional level-set lab: truncated SDFs sliced from a 3D template.

Shapes are unions of circles and crosses in ``[-1, 1]^2``.  Distances follow
the "positive inside" convention, so a union is the *maximum* of its members'
SDFs (the opposite of most SDF code).  A template ``F(x, y, w)`` is trained to
reproduce every shape of a family at its own ambient coordinate ``w``, either
a per-shape constant ("ap") or a learned per-point surface
``w = H(x, y, omega_i)`` ("ds").
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .diffcore import AdamState, MLPSpec, ParamStore, adam_step, backward, init_mlp, mlp_forward
from .diffcore import dual as D
from .diffcore import tensor as T
from .encoding import EncodingConfig, posenc

log = logging.getLogger(__name__)

TRUNCATION = 0.05
MODES_2D = ("ap", "ds")


# -- shapes ----------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float

    def sdf(self, p):
        p = np.asarray(p, dtype=np.float64)
        return self.radius - np.linalg.norm(p - np.asarray(self.center), axis=-1)


@dataclass(frozen=True)
class Cross:
    """Plus sign: two bars of half-length ``arm_length`` and half-width ``arm_width``."""

    center: tuple
    arm_length: float
    arm_width: float

    def __post_init__(self):
        if not 0 < self.arm_width < self.arm_length:
            raise ValueError("cross needs 0 < arm_width < arm_length")

    def sdf(self, p):
        q = np.abs(np.asarray(p, dtype=np.float64) - np.asarray(self.center))
        # fold into the sector x >= y >= 0
        q = np.stack([q.max(axis=-1), q.min(axis=-1)], axis=-1)
        length, width = self.arm_length, self.arm_width
        # outside: distance to the nearer of the two bars
        bar_h = np.linalg.norm(np.maximum(q - [length, width], 0.0), axis=-1)
        bar_v = np.linalg.norm(np.maximum(q - [width, length], 0.0), axis=-1)
        outside = np.minimum(bar_h, bar_v)
        # inside: distance to the complement (concave corner region or the arm end)
        corner = np.linalg.norm(np.maximum(width - q, 0.0), axis=-1)
        inside = np.minimum(corner, length - q[..., 0])
        return np.where(outside > 0, -outside, inside)


@dataclass(frozen=True)
class Shape2D:
    primitives: tuple
    name: str = ""

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("a shape needs at least one primitive")


def analytic_sdf(shape: Shape2D, p):
    """Exact signed distance (positive inside) of a union of primitives."""
    return np.max(np.stack([prim.sdf(p) for prim in shape.primitives]), axis=0)


def truncate(s, bound=TRUNCATION):
    return np.clip(s, -bound, bound)


def pseudo_huber(s, s_star, delta=0.005):
    """Elementwise ``delta^2 (sqrt(1 + ((s - s*)/delta)^2) - 1)``; accepts Tensors."""
    r = T.mul(T.sub(s, s_star), 1.0 / delta)
    return T.mul(T.sub(T.sqrt(T.add(T.mul(r, r), 1.0)), 1.0), delta * delta)


LEFT = (-0.5, 0.0)
RIGHT = (0.5, 0.0)


def circle_cross_family(radius=0.38, arm_length=0.33, arm_width=0.10):
    """The four left/right permutations of a circle and a cross, in the order CC, CX, XC, XX.

    The cross fits inside the circle, so blending one into the other shrinks
    or grows a single region instead of scattering blobs.
    """
    def prim(kind, center):
        return Circle(center, radius) if kind == "C" else Cross(center, arm_length, arm_width)

    return [Shape2D((prim(a, LEFT), prim(b, RIGHT)), a + b) for a, b in ("CC", "CX", "XC", "XX")]


def grid_points(resolution=128):
    """Pixel-center coordinates of a square grid over [-1, 1]^2, shape (res*res, 2)."""
    c = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    xx, yy = np.meshgrid(c, c[::-1])
    return np.stack([xx.ravel(), yy.ravel()], axis=-1)


# -- model -----------------------------------------------------------------


@dataclass
class Lab2DConfig:
    mode: str = "ds"
    iterations: int = 2000
    batch: int = 512
    lr: float = 1e-3
    delta: float = 0.005
    seed: int = 0
    code_dim: int = 8
    code_init_scale: float = 0.1
    ambient_init_scale: float = 0.1
    template_m: tuple = (-2, 3)
    slice_m: tuple = (-2, 2)
    template_depth: int = 6
    template_width: int = 64
    template_skip: tuple = (4,)
    slice_depth: int = 4
    slice_width: int = 32
    slice_skip: tuple = ()
    slice_init_scale: float = 1e-5

    def __post_init__(self):
        if self.mode not in MODES_2D:
            raise ValueError(f"mode must be one of {MODES_2D}, got {self.mode!r}")
        self.template_m = tuple(self.template_m)
        self.slice_m = tuple(self.slice_m)
        self.template_skip = tuple(self.template_skip)
        self.slice_skip = tuple(self.slice_skip)

    @property
    def template_encoding(self):
        return EncodingConfig(3, self.template_m[1], self.template_m[0], include_identity=True)

    @property
    def slice_encoding(self):
        return EncodingConfig(2, self.slice_m[1], self.slice_m[0], include_identity=True)

    @property
    def template_mlp(self):
        return MLPSpec(self.template_encoding.output_dim, self.template_depth, self.template_width, 1,
                       self.template_skip)

    @property
    def slice_mlp(self):
        return MLPSpec(self.slice_encoding.output_dim + self.code_dim, self.slice_depth, self.slice_width, 1,
                       self.slice_skip, final_init_scale=self.slice_init_scale)

    def to_dict(self):
        return asdict(self)


def init_lab(cfg: Lab2DConfig, n_shapes, dtype=np.float64):
    rng = np.random.default_rng(cfg.seed)
    p = ParamStore(np.float64)
    if cfg.mode == "ds":
        p.add("codes.shape", rng.normal(0.0, cfg.code_init_scale, (n_shapes, cfg.code_dim)))
    else:
        p.add("codes.ambient", rng.normal(0.0, cfg.ambient_init_scale, (n_shapes, 1)))
    init_mlp(p, "template", cfg.template_mlp, rng)
    if cfg.mode == "ds":
        init_mlp(p, "slice", cfg.slice_mlp, rng)
    return p.astype(dtype) if np.dtype(dtype) != p.dtype else p


def shape_codes(params, cfg: Lab2DConfig, ids):
    name = "codes.shape" if cfg.mode == "ds" else "codes.ambient"
    return T.take(params[name], np.asarray(ids))


def code_table(params, cfg: Lab2DConfig):
    return params["codes.shape" if cfg.mode == "ds" else "codes.ambient"].value


def ambient_2d(params, cfg: Lab2DConfig, xy, codes):
    """Ambient coordinate per point: the code itself (ap) or H(x, y, code) (ds)."""
    if cfg.mode == "ap":
        return codes
    enc = posenc(T.as_tensor(xy), cfg.slice_encoding)
    return mlp_forward(params, "slice", cfg.slice_mlp, D.concat([enc, codes], axis=-1))


def predict_sdf(params, cfg: Lab2DConfig, xy, codes):
    """Template value F(x, y, w) for per-point codes (Tensor of shape (N, k))."""
    xy = T.as_tensor(np.asarray(xy, dtype=params.dtype))
    w = ambient_2d(params, cfg, xy, codes)
    enc = posenc(D.concat([xy, w], axis=-1), cfg.template_encoding)
    return T.reshape(mlp_forward(params, "template", cfg.template_mlp, enc), (-1,))


def sample_batch(family, cfg: Lab2DConfig, step):
    rng = np.random.default_rng([cfg.seed, step])
    xy = rng.uniform(-1.0, 1.0, (cfg.batch, 2))
    ids = rng.integers(0, len(family), cfg.batch)
    target = np.empty(cfg.batch)
    for k, shape in enumerate(family):
        sel = ids == k
        target[sel] = truncate(analytic_sdf(shape, xy[sel]))
    return xy, ids, target


def lab_loss(params, cfg: Lab2DConfig, family, step, batch=None):
    xy, ids, target = sample_batch(family, cfg, step) if batch is None else batch
    pred = predict_sdf(params, cfg, xy, shape_codes(params, cfg, ids))
    return T.mean(pseudo_huber(pred, target.astype(params.dtype), cfg.delta))


@dataclass
class Lab2DResult:
    params: ParamStore
    config: Lab2DConfig
    family: list
    trace: list

    def code(self, k):
        return code_table(self.params, self.config)[k].copy()


class TrainingDiverged2D(FloatingPointError):
    pass


def train_2d(family, mode="ds", config: Lab2DConfig | None = None, dtype=np.float64, progress=None):
    """Fit one template to a whole shape family with Adam at a fixed learning rate."""
    if not family:
        raise ValueError("train_2d needs at least one shape")
    cfg = config or Lab2DConfig(mode=mode)
    if cfg.mode != mode:
        cfg = Lab2DConfig(**{**cfg.to_dict(), "mode": mode})
    params = init_lab(cfg, len(family), dtype)
    adam = AdamState()
    trace = []
    for step in range(cfg.iterations):
        loss = lab_loss(params, cfg, family, step)
        value = float(loss.value)
        if not np.isfinite(value):
            raise TrainingDiverged2D(f"non-finite loss at step {step}; config {json.dumps(cfg.to_dict())}")
        backward(loss, params)
        adam_step(params, adam, cfg.lr)
        trace.append(value)
        if progress and step % 100 == 0:
            progress(step, value)
    return Lab2DResult(params, cfg, list(family), trace)


# -- evaluation --------------------------------------------------------------


def sdf_raster(params, cfg: Lab2DConfig, code, resolution=128, chunk=8192):
    """Predicted template value on the evaluation grid for one code vector."""
    pts = grid_points(resolution)
    code = np.asarray(code, dtype=params.dtype).reshape(1, -1)
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        xy = pts[s:s + chunk]
        codes = T.as_tensor(np.repeat(code, len(xy), axis=0))
        out[s:s + chunk] = predict_sdf(params, cfg, xy, codes).value
    return out.reshape(resolution, resolution)


@dataclass
class GridMetrics:
    sign_agreement: float
    iou: float
    max_error: float


def eval_grid(params, cfg: Lab2DConfig, code, shape: Shape2D, resolution=128):
    """Sign agreement (%), inside-set IoU and max |s - s*| against the analytic SDF."""
    pred = sdf_raster(params, cfg, code, resolution)
    true = analytic_sdf(shape, grid_points(resolution)).reshape(resolution, resolution)
    return grid_metrics(pred, true)


def grid_metrics(pred, true):
    """Compare a predicted raster with an (untruncated) analytic raster."""
    pin, tin = pred > 0, true > 0
    union = np.logical_or(pin, tin).sum()
    iou = 1.0 if union == 0 else float(np.logical_and(pin, tin).sum() / union)
    return GridMetrics(
        sign_agreement=100.0 * float(np.mean(pin == tin)),
        iou=iou,
        max_error=float(np.max(np.abs(pred - truncate(true)))),
    )


def interpolate_shapes_2d(params, cfg: Lab2DConfig, code_i, code_j, steps=9, resolution=128):
    """Inside-masks along the straight line between two codes (t = 0 ... 1)."""
    code_i, code_j = np.asarray(code_i), np.asarray(code_j)
    frames = []
    for t in np.linspace(0.0, 1.0, steps):
        code = code_i if t == 0 else code_j if t == 1 else (1 - t) * code_i + t * code_j
        frames.append(sdf_raster(params, cfg, code, resolution) > 0)
    return frames


def half_areas(mask):
    """Inside area of the left (x < 0) and right (x > 0) halves, in units of the square [-1, 1]^2."""
    res = mask.shape[1]
    pixel = 4.0 / (mask.shape[0] * res)
    return float(mask[:, : res // 2].sum() * pixel), float(mask[:, res // 2:].sum() * pixel)
