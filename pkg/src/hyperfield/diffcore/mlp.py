"""Fixed-architecture MLPs over the tape."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import dual as D
from . import tensor as T


class ConfigError(ValueError):
    pass


@dataclass
class MLPSpec:
    """Dense ReLU network.

    ``depth`` hidden layers of ``width`` units followed by one output affine
    map.  A hidden layer whose index is in ``skip_layers`` sees the original
    input concatenated to its incoming activation.  Hidden weights use
    He-uniform fan-in scaling; the output weights are drawn from
    N(0, final_init_scale) and all biases start at zero.
    """

    input_dim: int
    depth: int
    width: int
    output_dim: int
    skip_layers: tuple = ()
    activation: str = "relu"
    final_init_scale: float = 1e-2

    def __post_init__(self):
        self.skip_layers = tuple(sorted(self.skip_layers))
        if any(k < 1 or k >= self.depth for k in self.skip_layers):
            raise ConfigError(f"skip layers {self.skip_layers} must lie in [1, {self.depth})")
        if self.final_init_scale <= 0:
            raise ConfigError("final_init_scale must be positive")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    def layer_dims(self):
        dims = []
        prev = self.input_dim
        for i in range(self.depth):
            fan_in = prev + (self.input_dim if i in self.skip_layers else 0)
            dims.append((fan_in, self.width))
            prev = self.width
        dims.append((prev, self.output_dim))
        return dims

    def to_dict(self):
        d = asdict(self)
        d["skip_layers"] = list(self.skip_layers)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "skip_layers": tuple(d.get("skip_layers", ()))})


_ACTIVATIONS = {"relu": D.relu, "sin": D.sin}


def init_mlp(params, prefix, spec: MLPSpec, rng):
    dims = spec.layer_dims()
    for i, (fan_in, fan_out) in enumerate(dims):
        if i == len(dims) - 1:
            w = rng.normal(0.0, spec.final_init_scale, size=(fan_in, fan_out))
        else:
            lim = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-lim, lim, size=(fan_in, fan_out))
        params.add(f"{prefix}.l{i}.W", w)
        params.add(f"{prefix}.l{i}.b", np.zeros(fan_out))


def mlp_forward(params, prefix, spec: MLPSpec, x):
    """Evaluate on a batch ``x`` of shape (..., input_dim); Dual inputs allowed."""
    n_in = x.shape[-1]
    if n_in != spec.input_dim:
        raise ConfigError(f"{prefix}.l0: expected input dim {spec.input_dim}, got {n_in}")
    act = _ACTIVATIONS[spec.activation]
    h = x
    for i in range(spec.depth + 1):
        if i in spec.skip_layers:
            h = D.concat([h, x], axis=-1)
        w = params[f"{prefix}.l{i}.W"]
        if h.shape[-1] != w.shape[0]:
            raise ConfigError(f"{prefix}.l{i}: input dim {h.shape[-1]} does not match weight rows {w.shape[0]}")
        h = D.add(D.matmul(h, w), params[f"{prefix}.l{i}.b"])
        if i < spec.depth:
            h = act(h)
    return h
