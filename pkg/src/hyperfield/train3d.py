"""End-to-end training of the hyper-space field on posed image sequences."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .diffcore import AdamState, ParamStore, adam_step, backward, lr_schedule, read_tensors, write_tensors
from .diffcore import tensor as T
from .encoding import EncodingConfig, WindowSchedule
from .field import (ModelConfig, SliceConfig, TemplateConfig, field_query, gather_codes, init_params,
                    interpolate_codes, schedules_at)
from .metrics import psnr
from .render import all_pixels, composite, generate_rays, render_image, stratified_samples
from .warp import WarpConfig, elastic_loss

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    model: ModelConfig
    iterations: int = 20000
    batch_rays: int = 1024
    samples_per_ray: int = 128
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    elastic: bool = False
    elastic_weight: float = 1e-3
    seed: int = 0
    dtype: str = "float32"
    log_every: int = 100
    checkpoint_every: int = 0
    frozen: tuple = ()

    def __post_init__(self):
        for name in ("iterations", "batch_rays", "samples_per_ray"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["frozen"] = list(self.frozen)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        d["frozen"] = tuple(d.get("frozen", ()))
        return cls(**d)


REFERENCE_ITERATIONS = 250_000


def alpha_steps_for(iterations, delay=1000, ramp=80000):
    """Warp easing delay/ramp scaled from the full-length protocol to ``iterations``."""
    r = iterations / REFERENCE_ITERATIONS
    return int(round(delay * r)), int(round(ramp * r))


def desk_model_config(n_frames, slicing="ds", use_warp=True, ambient_dim=2, alpha_steps=(80, 6400),
                      beta_steps=(1000, 10000)):
    """Reduced widths/depths that train on one CPU core in minutes."""
    template = TemplateConfig.default(ambient_dim, 8, m_pos=8, m_dir=4, depth=4, width=96, skip=(2,),
                                      feature_dim=32, color_width=32, init_scale=0.05)
    warp = WarpConfig.default(m=6, depth=4, width=48, skip=(2,), init_scale=1e-4)
    slicer = SliceConfig.default(ambient_dim, 8, m=6, depth=4, width=32, skip=(2,), init_scale=1e-5)
    return ModelConfig(
        n_frames=n_frames, slicing=slicing, ambient_dim=ambient_dim, use_warp=use_warp,
        warp=warp, template=template, slice=slicer,
        alpha_schedule=WindowSchedule(alpha_steps[0], alpha_steps[1], float(warp.encoding.num_bands)),
        beta_schedule=WindowSchedule(beta_steps[0], beta_steps[1], 1.0),
    )


def photometric_loss(pred, target):
    """Mean squared error over all rays and channels."""
    pred = T.as_tensor(pred)
    diff = T.sub(pred, np.asarray(target, dtype=pred.dtype))
    return T.mean(T.mul(diff, diff))


def interpolated_frame_codes(params, cfg, dataset, frame):
    """Codes for a held-out frame, blended between its neighbouring training frames by time."""
    train = dataset.train_idx
    t = dataset.times[frame]
    before = train[dataset.times[train] <= t]
    after = train[dataset.times[train] >= t]
    if len(before) == 0:
        return interpolate_codes(params, cfg, after[0], after[0], 0.0)
    if len(after) == 0:
        return interpolate_codes(params, cfg, before[-1], before[-1], 0.0)
    i, j = before[-1], after[0]
    span = dataset.times[j] - dataset.times[i]
    u = 0.0 if span == 0 else (t - dataset.times[i]) / span
    return interpolate_codes(params, cfg, i, j, u)


class Trainer:
    """Owns parameters, optimizer state and the ray cache for one run."""

    def __init__(self, config: TrainConfig, dataset, run_dir=None, params=None):
        self.config = config
        self.dataset = dataset
        self.dtype = np.dtype(config.dtype)
        self.params = params if params is not None else init_params(config.model, config.seed, self.dtype)
        self.params.frozen = set(config.frozen)
        self.adam = AdamState()
        self.step = 0
        self.trace = []
        self.run_dir = Path(run_dir) if run_dir else None
        cams = dataset.cameras
        w, h = cams[0].resolution
        self.hw = h * w
        pix = all_pixels(cams[0])
        rays = [generate_rays(c, pix) for c in cams]
        self.origins = np.stack([r[0] for r in rays])
        self.dirs = np.stack([r[1] for r in rays])
        self.targets = dataset.images.reshape(len(cams), -1, 3)
        if self.run_dir:
            (self.run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
            (self.run_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))

    # -- batches ---------------------------------------------------------
    def sample_batch(self, step):
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, step])
        n_train = len(self.dataset.train_idx)
        flat = rng.integers(0, n_train * self.hw, size=cfg.batch_rays)
        frames = self.dataset.train_idx[flat // self.hw]
        pix = flat % self.hw
        t, deltas = stratified_samples(self.dataset.near, self.dataset.far, cfg.samples_per_ray, rng,
                                       batch=cfg.batch_rays)
        return frames, pix, t, deltas

    def loss_terms(self, step, batch=None):
        cfg, mcfg = self.config, self.config.model
        frames, pix, t, deltas = self.sample_batch(step) if batch is None else batch
        o, d = self.origins[frames, pix], self.dirs[frames, pix]
        r, s = cfg.batch_rays, cfg.samples_per_ray
        pts = (o[:, None, :] + t[..., None] * d[:, None, :]).reshape(-1, 3).astype(self.dtype)
        dirs = np.repeat(d, s, axis=0).astype(self.dtype)
        point_frames = np.repeat(frames, s)
        alpha, beta = schedules_at(mcfg, step)
        codes = gather_codes(self.params, mcfg, point_frames)
        rgb, sigma = field_query(self.params, mcfg, pts, dirs, codes, alpha, beta)
        out = composite(T.reshape(rgb, (r, s, 3)), T.reshape(sigma, (r, s)), deltas, self.dataset.background)
        loss = photometric_loss(out.rgb, self.targets[frames, pix])
        terms = {"photometric": loss}
        if cfg.elastic and mcfg.use_warp:
            terms["elastic"] = elastic_loss(pts, codes["omega"], alpha, self.params, mcfg.warp)
            loss = loss + cfg.elastic_weight * terms["elastic"]
        return loss, terms, frames

    def train_step(self, step=None):
        cfg = self.config
        step = self.step if step is None else step
        loss, terms, frames = self.loss_terms(step)
        value = float(loss.value)
        if not np.isfinite(value):
            raise TrainingDiverged(f"non-finite loss at step {step}; frames {sorted(set(frames.tolist()))}")
        backward(loss, self.params)
        lr = lr_schedule(step, cfg.iterations, cfg.lr_start, cfg.lr_end)
        adam_step(self.params, self.adam, lr)
        self.step = step + 1
        self.trace.append(value)
        return value

    def train(self, until=None, progress=None):
        cfg = self.config
        until = cfg.iterations if until is None else min(until, cfg.iterations)
        logf = open(self.run_dir / "metrics.log", "a") if self.run_dir else None
        try:
            while self.step < until:
                step = self.step
                loss = self.train_step()
                if logf and (step % cfg.log_every == 0 or self.step == until):
                    alpha, beta = schedules_at(cfg.model, step)
                    lr = lr_schedule(step, cfg.iterations, cfg.lr_start, cfg.lr_end)
                    logf.write(f"{step}\t{loss:.8g}\t{lr:.6g}\t{alpha:.6g}\t{beta:.6g}\n")
                    logf.flush()
                if progress and step % cfg.log_every == 0:
                    progress(step, loss)
                if self.run_dir and cfg.checkpoint_every and self.step % cfg.checkpoint_every == 0:
                    self.save_checkpoint()
        finally:
            if logf:
                logf.close()
        if self.run_dir:
            self.save_checkpoint()
        return self.trace

    # -- checkpoints -----------------------------------------------------
    def state_arrays(self):
        arrays = dict(self.params.values())
        arrays.update(self.adam.to_arrays())
        arrays["train.step"] = np.array([self.step], dtype=np.float64)
        return arrays

    def save_checkpoint(self, path=None):
        if path is None:
            path = self.run_dir / "checkpoints" / f"ckpt_{self.step:07d}.hypf"
        write_tensors(path, self.state_arrays())
        return path

    def load_checkpoint(self, path):
        arrays = read_tensors(path)
        self.params.load_values({k: v for k, v in arrays.items() if k in self.params})
        self.adam = AdamState()
        self.adam.load_arrays({k: v for k, v in arrays.items() if k not in self.params})
        self.step = int(arrays["train.step"][0])

    @staticmethod
    def latest_checkpoint(run_dir):
        ckpts = sorted(Path(run_dir, "checkpoints").glob("ckpt_*.hypf"))
        return ckpts[-1] if ckpts else None


def load_params(path, cfg: ModelConfig, dtype=np.float32):
    params = init_params(cfg, 0, dtype)
    arrays = read_tensors(path)
    params.load_values({k: v.astype(params.dtype) for k, v in arrays.items() if k in params})
    return params, int(arrays.get("train.step", np.array([0]))[0])


def render_frame(params, cfg, dataset, frame, step, n_samples, codes=None, camera=None, threads=1):
    cam = dataset.cameras[frame] if camera is None else camera
    return render_image(cam, frame, step, params, cfg, n_samples, dataset.background, dataset.near,
                        dataset.far, rng=None, codes=codes, threads=threads)


def evaluate_psnr(params, cfg, dataset, step, n_samples, views=None, threads=1):
    """Per-view and mean PSNR on held-out views (codes interpolated by time)."""
    views = dataset.heldout_idx if views is None else views
    scores = {}
    renders = {}
    for k in views:
        k = int(k)
        codes = None if k in set(dataset.train_idx.tolist()) else interpolated_frame_codes(params, cfg, dataset, k)
        out = render_frame(params, cfg, dataset, k, step, n_samples, codes=codes, threads=threads)
        if out["rgb"].shape != dataset.images[k].shape:
            raise ValueError("render resolution does not match ground truth")
        scores[k] = psnr(out["rgb"], dataset.images[k])
        renders[k] = out
    mean = float(np.mean(list(scores.values()))) if scores else float("nan")
    return scores, mean, renders
