"""Hyper-space template radiance field with deformation and slicing.

A sample ``x`` seen in frame ``i`` is warped to canonical space
``x' = T(x, omega_i)``, assigned ambient coordinates ``w`` (a learned
per-point slicing surface ``H(x, omega_i)`` in "ds" mode, a per-frame constant
in "ap" mode, zero in "none" mode), and the template ``F(x', w, d, psi_i)``
returns color and density.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .diffcore import MLPSpec, ParamStore, init_mlp, mlp_forward
from .diffcore import dual as D
from .diffcore import tensor as T
from .encoding import EncodingConfig, WindowSchedule, posenc, schedule_value, windowed_posenc
from .warp import WarpConfig, deform

SLICING_MODES = ("ds", "ap", "none")


@dataclass
class TemplateConfig:
    position: EncodingConfig
    ambient: EncodingConfig
    direction: EncodingConfig
    trunk: MLPSpec
    color: MLPSpec
    feature_dim: int

    @classmethod
    def default(cls, ambient_dim=2, appearance_dim=8, m_pos=8, m_dir=4, m_amb=1,
                depth=8, width=256, skip=(4,), feature_dim=256, color_width=128, init_scale=0.05):
        pos = EncodingConfig(3, m_pos, include_identity=True)
        amb = EncodingConfig(ambient_dim, m_amb, include_identity=False)
        dirs = EncodingConfig(3, m_dir, include_identity=True)
        trunk = MLPSpec(pos.output_dim + amb.output_dim, depth, width, 1 + feature_dim, tuple(skip),
                        final_init_scale=init_scale)
        color = MLPSpec(feature_dim + dirs.output_dim + appearance_dim, 1, color_width, 3,
                        final_init_scale=init_scale)
        return cls(pos, amb, dirs, trunk, color, feature_dim)

    def to_dict(self):
        return {
            "position": self.position.to_dict(), "ambient": self.ambient.to_dict(),
            "direction": self.direction.to_dict(), "trunk": self.trunk.to_dict(),
            "color": self.color.to_dict(), "feature_dim": self.feature_dim,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(EncodingConfig(**d["position"]), EncodingConfig(**d["ambient"]),
                   EncodingConfig(**d["direction"]), MLPSpec.from_dict(d["trunk"]),
                   MLPSpec.from_dict(d["color"]), d["feature_dim"])


@dataclass
class SliceConfig:
    encoding: EncodingConfig
    mlp: MLPSpec

    @classmethod
    def default(cls, ambient_dim=2, code_dim=8, m=6, depth=6, width=64, skip=(4,), init_scale=1e-5):
        enc = EncodingConfig(3, m, include_identity=True)
        return cls(enc, MLPSpec(enc.output_dim + code_dim, depth, width, ambient_dim, tuple(skip),
                                final_init_scale=init_scale))

    def to_dict(self):
        return {"encoding": self.encoding.to_dict(), "mlp": self.mlp.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(EncodingConfig(**d["encoding"]), MLPSpec.from_dict(d["mlp"]))


@dataclass
class ModelConfig:
    n_frames: int
    slicing: str = "ds"
    ambient_dim: int = 2
    code_dim: int = 8
    appearance_dim: int = 8
    use_warp: bool = True
    code_init_scale: float = 0.05
    warp: WarpConfig = None
    template: TemplateConfig = None
    slice: SliceConfig = None
    alpha_schedule: WindowSchedule = None
    beta_schedule: WindowSchedule = field(default_factory=lambda: WindowSchedule(1000, 10000, 1.0))

    def __post_init__(self):
        if self.slicing not in SLICING_MODES:
            raise ValueError(f"slicing mode must be one of {SLICING_MODES}, got {self.slicing!r}")
        if self.warp is None:
            self.warp = WarpConfig.default(code_dim=self.code_dim)
        if self.template is None:
            self.template = TemplateConfig.default(self.ambient_dim, self.appearance_dim)
        if self.slice is None:
            self.slice = SliceConfig.default(self.ambient_dim, self.code_dim)
        if self.alpha_schedule is None:
            self.alpha_schedule = WindowSchedule(1000, 80000, float(self.warp.encoding.num_bands))

    def to_dict(self):
        return {
            "n_frames": self.n_frames, "slicing": self.slicing, "ambient_dim": self.ambient_dim,
            "code_dim": self.code_dim, "appearance_dim": self.appearance_dim,
            "use_warp": self.use_warp, "code_init_scale": self.code_init_scale,
            "warp": self.warp.to_dict(), "template": self.template.to_dict(),
            "slice": self.slice.to_dict(), "alpha_schedule": self.alpha_schedule.to_dict(),
            "beta_schedule": self.beta_schedule.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(
            n_frames=d["n_frames"], slicing=d["slicing"], ambient_dim=d["ambient_dim"],
            code_dim=d["code_dim"], appearance_dim=d["appearance_dim"], use_warp=d["use_warp"],
            code_init_scale=d.get("code_init_scale", 0.05),
            warp=WarpConfig.from_dict(d["warp"]), template=TemplateConfig.from_dict(d["template"]),
            slice=SliceConfig.from_dict(d["slice"]),
            alpha_schedule=WindowSchedule(**d["alpha_schedule"]),
            beta_schedule=WindowSchedule(**d["beta_schedule"]),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def init_params(cfg: ModelConfig, seed=0, dtype=np.float32) -> ParamStore:
    rng = np.random.default_rng(seed)
    p = ParamStore(np.float64)
    n = cfg.n_frames
    p.add("codes.deform", rng.normal(0.0, cfg.code_init_scale, (n, cfg.code_dim)))
    p.add("codes.appearance", rng.normal(0.0, cfg.code_init_scale, (n, cfg.appearance_dim)))
    if cfg.slicing == "ap":
        p.add("codes.ambient", np.zeros((n, cfg.ambient_dim)))
    init_mlp(p, "template.trunk", cfg.template.trunk, rng)
    init_mlp(p, "template.color", cfg.template.color, rng)
    if cfg.use_warp:
        init_mlp(p, "warp", cfg.warp.mlp, rng)
    if cfg.slicing == "ds":
        init_mlp(p, "slice", cfg.slice.mlp, rng)
    return p.astype(dtype) if np.dtype(dtype) != p.dtype else p


def schedules_at(cfg: ModelConfig, step):
    return schedule_value(step, cfg.alpha_schedule), schedule_value(step, cfg.beta_schedule)


def gather_codes(params, cfg: ModelConfig, frames):
    """Per-point code Tensors for integer frame indices."""
    frames = np.asarray(frames)
    if frames.size and (frames.min() < 0 or frames.max() >= cfg.n_frames):
        raise IndexError(f"frame index out of range [0, {cfg.n_frames})")
    codes = {
        "omega": T.take(params["codes.deform"], frames),
        "psi": T.take(params["codes.appearance"], frames),
    }
    if cfg.slicing == "ap":
        codes["w"] = T.take(params["codes.ambient"], frames)
    return codes


def interpolate_codes(params, cfg: ModelConfig, i, j, t):
    """Linear blend of frame i's and frame j's codes.

    Returns a dict of 1-D arrays plus ``extrapolated`` (t outside [0, 1]).
    """
    for f in (i, j):
        if not 0 <= f < cfg.n_frames:
            raise IndexError(f"frame {f} out of range [0, {cfg.n_frames})")
    out = {}
    names = {"omega": "codes.deform", "psi": "codes.appearance"}
    if cfg.slicing == "ap":
        names["w"] = "codes.ambient"
    for key, pname in names.items():
        table = params[pname].value
        a, b = table[i], table[j]
        if t == 0:
            out[key] = a.copy()
        elif t == 1:
            out[key] = b.copy()
        else:
            out[key] = (1.0 - t) * a + t * b
    out["extrapolated"] = not (0.0 <= t <= 1.0)
    return out


def broadcast_codes(codes, n):
    """Tile single-frame code vectors (from interpolate_codes) to n points."""
    return {k: T.as_tensor(np.broadcast_to(v, (n,) + np.shape(v)).copy())
            for k, v in codes.items() if k != "extrapolated"}


def slice_surface(x, omega, params, cfg: ModelConfig):
    """Deformable slicing surface: ambient coordinates for each point."""
    enc = posenc(x, cfg.slice.encoding)
    return mlp_forward(params, "slice", cfg.slice.mlp, D.concat([enc, omega], axis=-1))


def template_query(x_canon, w, d, psi, beta, params, cfg: ModelConfig):
    """Template color (sigmoid) and density (ReLU) at canonical hyper-points."""
    tc = cfg.template
    amb = windowed_posenc(w, beta, tc.ambient)
    trunk = mlp_forward(params, "template.trunk", tc.trunk, D.concat([posenc(x_canon, tc.position), amb], axis=-1))
    sigma = T.relu(trunk[..., 0:1])
    feat = trunk[..., 1:]
    head_in = D.concat([feat, posenc(d, tc.direction), psi], axis=-1)
    rgb = T.sigmoid(mlp_forward(params, "template.color", tc.color, head_in))
    return rgb, sigma


def ambient_coords(x, codes, params, cfg: ModelConfig):
    n = x.shape[0]
    if cfg.slicing == "ds":
        return slice_surface(x, codes["omega"], params, cfg)
    if cfg.slicing == "ap":
        return codes["w"]
    return T.as_tensor(np.zeros((n, cfg.ambient_dim), dtype=T.value_of(x).dtype))


def canonical_points(x, codes, alpha, params, cfg: ModelConfig):
    if cfg.use_warp:
        return deform(x, codes["omega"], alpha, params, cfg.warp)
    return x


def field_query(params, cfg: ModelConfig, x, d, codes, alpha, beta):
    """Observation-space radiance for batches x, d of shape (N, 3)."""
    x = T.as_tensor(x)
    x_canon = canonical_points(x, codes, alpha, params, cfg)
    w = ambient_coords(x, codes, params, cfg)
    return template_query(x_canon, w, T.as_tensor(d), codes["psi"], beta, params, cfg)


def radiance_at(x, d, frame, step, params, cfg: ModelConfig):
    """Color and density at points ``x`` seen along ``d`` in ``frame`` at ``step``."""
    x = np.atleast_2d(np.asarray(x, dtype=params.dtype))
    d = np.atleast_2d(np.asarray(d, dtype=params.dtype))
    frames = np.broadcast_to(np.asarray(frame), (x.shape[0],))
    alpha, beta = schedules_at(cfg, step)
    rgb, sigma = field_query(params, cfg, x, d, gather_codes(params, cfg, frames), alpha, beta)
    return rgb.value, sigma.value
