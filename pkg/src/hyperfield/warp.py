"""Observation-to-canonical deformation via per-point se(3) twists."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Dual, MLPSpec, mlp_forward
from .diffcore import dual as D
from .diffcore import tensor as T
from .encoding import EncodingConfig, windowed_posenc

# below this rotation angle the exp-map coefficients switch to Taylor series
SMALL_ANGLE = {np.dtype(np.float64): 1e-6, np.dtype(np.float32): 1e-2}
GM_SCALE = 0.03
MIN_SINGULAR = 1e-6


@dataclass
class Twist:
    """Screw generator: ``r`` axis-angle rotation, ``v`` translation generator."""

    r: object
    v: object


def _cross(a, b):
    g = D.getitem
    a0, a1, a2 = (g(a, (Ellipsis, slice(i, i + 1))) for i in range(3))
    b0, b1, b2 = (g(b, (Ellipsis, slice(i, i + 1))) for i in range(3))
    return D.concat([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def exp_coefficients(theta_sq):
    """(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3) as functions of t^2."""
    tsq = theta_sq
    p = D.primal(tsq)
    small = p.value < SMALL_ANGLE.get(p.dtype, 1e-6) ** 2
    safe_sq = D.where(small, np.ones_like(p.value), tsq)
    th = D.sqrt(safe_sq)
    s = D.sin(th)
    half = D.sin(th * 0.5)
    a_exact = s / th
    b_exact = 2.0 * (half * half) / safe_sq
    c_exact = (th - s) / (safe_sq * th)
    t2 = tsq * tsq
    a_ser = 1.0 - tsq * (1.0 / 6.0) + t2 * (1.0 / 120.0)
    b_ser = 0.5 - tsq * (1.0 / 24.0) + t2 * (1.0 / 720.0)
    c_ser = 1.0 / 6.0 - tsq * (1.0 / 120.0) + t2 * (1.0 / 5040.0)
    return D.where(small, a_ser, a_exact), D.where(small, b_ser, b_exact), D.where(small, c_ser, c_exact)


def se3_apply(twist: Twist, x):
    """Apply ``exp([r, v])`` to points ``x`` (..., 3) about the origin.

    Rotation via Rodrigues' formula, translation via ``V(r) v``.  Works on
    Tensors, Duals and plain arrays.
    """
    r, v = twist.r, twist.v
    if not (D.is_dual(r) or isinstance(r, T.Tensor)):
        r = T.as_tensor(np.asarray(r, dtype=np.float64))
    if not (D.is_dual(v) or isinstance(v, T.Tensor)):
        v = T.as_tensor(np.asarray(v, dtype=D.primal(r).dtype))
    if not (D.is_dual(x) or isinstance(x, T.Tensor)):
        x = T.as_tensor(np.asarray(x, dtype=D.primal(r).dtype))
    a, b, c = exp_coefficients(D.sum_last(r * r, keepdims=True))
    rx = _cross(r, x)
    rv = _cross(r, v)
    rot = x + a * rx + b * _cross(r, rx)
    trans = v + b * rv + c * _cross(r, rv)
    return rot + trans


def se3_matrix(r, v):
    """4x4 rigid transform for a single twist (numpy, closed form)."""
    r = np.asarray(r, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    k = np.array([[0, -r[2], r[1]], [r[2], 0, -r[0]], [-r[1], r[0], 0]])
    a, b, c = (float(np.asarray(T.value_of(q)).reshape(-1)[0]) for q in exp_coefficients(T.as_tensor(np.array([r @ r]))))
    out = np.eye(4)
    out[:3, :3] = np.eye(3) + a * k + b * (k @ k)
    out[:3, 3] = (np.eye(3) + b * k + c * (k @ k)) @ v
    return out


@dataclass
class WarpConfig:
    encoding: EncodingConfig
    mlp: MLPSpec
    code_dim: int = 8

    def to_dict(self):
        return {"encoding": self.encoding.to_dict(), "mlp": self.mlp.to_dict(), "code_dim": self.code_dim}

    @classmethod
    def from_dict(cls, d):
        return cls(EncodingConfig(**d["encoding"]), MLPSpec.from_dict(d["mlp"]), d.get("code_dim", 8))

    @classmethod
    def default(cls, m=6, depth=6, width=128, skip=(4,), code_dim=8, init_scale=1e-4):
        enc = EncodingConfig(input_dim=3, m_max=m, include_identity=True)
        spec = MLPSpec(enc.output_dim + code_dim, depth, width, 6, tuple(skip), final_init_scale=init_scale)
        return cls(enc, spec, code_dim)


def twist_field(x, omega, alpha, params, cfg: WarpConfig, prefix="warp"):
    enc = windowed_posenc(x, alpha, cfg.encoding)
    out = mlp_forward(params, prefix, cfg.mlp, D.concat([enc, omega], axis=-1))
    return Twist(D.getitem(out, (Ellipsis, slice(0, 3))), D.getitem(out, (Ellipsis, slice(3, 6))))


def deform(x, omega, alpha, params, cfg: WarpConfig, prefix="warp"):
    """Canonical coordinates ``x' = exp(W(gamma_alpha(x), omega)) x``."""
    x = x if D.is_dual(x) else T.as_tensor(x)
    return se3_apply(twist_field(x, omega, alpha, params, cfg, prefix), x)


def deformation_jacobian(x, omega, alpha, params, cfg: WarpConfig, prefix="warp"):
    """Exact d x' / d x of shape (N, 3, 3), computed with forward tangents."""
    xd = Dual.seed(T.as_tensor(x))
    out = deform(xd, omega, alpha, params, cfg, prefix)
    return out.primal, out.jacobian()


def log_singular_sq(jac):
    """Per-point ``sum_k (log sigma_k)^2`` of Jacobians (..., 3, 3).

    Singular values below 1e-6 are clamped (zero gradient through the clamp).
    """
    jac = T.as_tensor(jac)
    gram = T.einsum("nik,nil->nkl", jac, jac)
    floor = MIN_SINGULAR**2

    def f(lam):
        return 0.25 * np.log(np.maximum(lam, floor)) ** 2

    def df(lam):
        safe = np.maximum(lam, floor)
        return np.where(lam > floor, 0.5 * np.log(safe) / safe, 0.0)

    return T.sym_spectral_sum(gram, f, df)


def geman_mcclure(sq, scale=GM_SCALE):
    """Geman-McClure robust penalty of a residual given its square."""
    z = sq * (1.0 / scale**2)
    return 2.0 * z / (z + 4.0)


def elastic_loss(x, omega, alpha, params, cfg: WarpConfig, prefix="warp", scale=GM_SCALE):
    """Mean robust penalty on non-unit singular values of the warp Jacobian."""
    _, jac = deformation_jacobian(x, omega, alpha, params, cfg, prefix)
    return T.mean(geman_mcclure(log_singular_sq(jac), scale))
