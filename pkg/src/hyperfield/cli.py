"""Command-line front end: ``hyperfield <command> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import imageio, sdf2d
from .diffcore import read_tensors, write_tensors
from .field import SLICING_MODES, ModelConfig, broadcast_codes, interpolate_codes
from .metrics import psnr
from .scenegen import BUILTINS, DatasetError, builtin_scene, generate_dataset, load_dataset
from .train3d import (TrainConfig, Trainer, TrainingDiverged, alpha_steps_for, desk_model_config,
                      evaluate_psnr, interpolated_frame_codes, load_params, render_frame)

log = logging.getLogger("hyperfield")

METRICS_HEADER = "# hyperfield-metrics v1\ncommand\trun\tframe\tmetric\tvalue\tunits\n"


class UsageError(Exception):
    """Bad flags or inputs that the user must fix (exit 2)."""


@dataclass
class RunConfig:
    """Everything needed to re-run one training experiment."""

    pipeline: str
    out: str
    dataset: str | None = None
    seed: int = 0
    train: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def save(self, run_dir):
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        Path(run_dir, "run.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, run_dir):
        path = Path(run_dir, "run.json")
        if not path.exists():
            raise FileNotFoundError(f"{path} not found; is this a run directory?")
        return cls.from_dict(json.loads(path.read_text()))


def append_metrics(path, rows):
    """Append (command, run, frame, metric, value, units) rows, writing the header once."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a") as f:
        if new:
            f.write(METRICS_HEADER)
        for row in rows:
            f.write("\t".join(str(v) for v in row) + "\n")


def resolve_threads(flag):
    if flag is not None:
        return max(1, int(flag))
    env = os.environ.get("HYPERFIELD_THREADS")
    return max(1, int(env)) if env else 1


# -- gen-dataset ---------------------------------------------------------------


def cmd_gen_dataset(args):
    if args.scene not in BUILTINS:
        raise UsageError(f"unknown scene {args.scene!r}; builtins: {', '.join(BUILTINS)}")
    scene = builtin_scene(args.scene, density=args.density)
    ds = generate_dataset(scene, args.out, n_frames=args.frames, resolution=(args.res, args.res),
                          samples=args.samples, seed=args.seed, holdout_every=args.holdout_every)
    print(f"wrote {ds.n_frames} frames to {args.out}")
    return 0


# -- train -----------------------------------------------------------------


def _train_config_3d(args, n_frames, base: dict):
    iters = args.iters or base.get("iterations", 20000)
    mode = args.mode or base.get("model", {}).get("slicing", "ds")
    if "model" in base and args.mode is None:
        model = ModelConfig.from_dict(base["model"])
    else:
        model = desk_model_config(n_frames, mode, use_warp=not args.no_warp, alpha_steps=alpha_steps_for(iters))
    merged = {k: v for k, v in base.items() if k != "model"}
    merged["iterations"] = iters
    for flag, key in (("batch", "batch_rays"), ("samples", "samples_per_ray"), ("lr", "lr_start"),
                      ("lr_end", "lr_end"), ("checkpoint_every", "checkpoint_every")):
        if getattr(args, flag) is not None:
            merged[key] = getattr(args, flag)
    if args.elastic:
        merged["elastic"] = True
    merged["seed"] = args.seed if args.seed is not None else merged.get("seed", 0)
    return TrainConfig(model=model, **merged)


def _train_config_2d(args, base: dict):
    cfg = dict(base)
    cfg["mode"] = args.mode or cfg.get("mode", "ds")
    if cfg["mode"] not in sdf2d.MODES_2D:
        raise UsageError(f"2d pipeline supports modes {sdf2d.MODES_2D}")
    for flag, key in (("iters", "iterations"), ("batch", "batch"), ("lr", "lr"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    return sdf2d.Lab2DConfig(**cfg)


def _load_config_file(path):
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc


def cmd_train(args):
    run_dir = Path(args.out)
    if args.resume:
        run = RunConfig.load(run_dir)
        if run.pipeline != "3d":
            raise UsageError("--resume applies to 3d runs")
        cfg = TrainConfig.from_dict(run.train)
        if args.iters:
            cfg.iterations = args.iters
        ds = load_dataset(run.dataset)
        trainer = Trainer(cfg, ds, run_dir)
        ckpt = Trainer.latest_checkpoint(run_dir)
        if ckpt is None:
            raise FileNotFoundError(f"no checkpoint under {run_dir}/checkpoints")
        trainer.load_checkpoint(ckpt)
        print(f"resuming from {ckpt} at step {trainer.step}")
        return _run_3d(trainer, run_dir)

    file_cfg = _load_config_file(args.config)
    pipeline = args.pipeline or file_cfg.get("pipeline", "3d")
    base = file_cfg.get("train", {})
    if pipeline == "2d":
        cfg = _train_config_2d(args, base)
        run = RunConfig("2d", str(run_dir), None, cfg.seed, cfg.to_dict())
        run.save(run_dir)
        return _run_2d(cfg, run_dir)

    dataset = args.data or file_cfg.get("dataset")
    if not dataset:
        raise UsageError("3d training needs --data")
    if args.mode and args.mode not in SLICING_MODES:
        raise UsageError(f"mode must be one of {SLICING_MODES}")
    ds = load_dataset(dataset)
    cfg = _train_config_3d(args, ds.n_frames, base)
    run = RunConfig("3d", str(run_dir), str(dataset), cfg.seed, cfg.to_dict())
    run.save(run_dir)
    return _run_3d(Trainer(cfg, ds, run_dir), run_dir)


def _run_3d(trainer, run_dir):
    start = time.time()
    trainer.train(progress=lambda s, l: log.info("step %d loss %.6g", s, l))
    elapsed = time.time() - start
    append_metrics(run_dir / "metrics.tsv", [("train", run_dir.name, "-", "final_loss", f"{trainer.trace[-1]:.8g}", "mse"),
                                             ("train", run_dir.name, "-", "seconds", f"{elapsed:.1f}", "s")])
    print(f"trained to step {trainer.step}; final loss {trainer.trace[-1]:.6g}")
    return 0


def _run_2d(cfg, run_dir):
    family = sdf2d.circle_cross_family()
    result = sdf2d.train_2d(family, cfg.mode, cfg, progress=lambda s, l: log.info("step %d loss %.6g", s, l))
    write_tensors(run_dir / "params.hypf", result.params.values())
    rows = []
    for k, shape in enumerate(family):
        m = sdf2d.eval_grid(result.params, cfg, result.code(k), shape)
        imageio.write_png(run_dir / f"shape_{shape.name}.png",
                          (sdf2d.sdf_raster(result.params, cfg, result.code(k)) > 0).astype(float))
        rows += [("train2d", run_dir.name, shape.name, "sign_agreement", f"{m.sign_agreement:.4f}", "%"),
                 ("train2d", run_dir.name, shape.name, "iou", f"{m.iou:.6f}", "-"),
                 ("train2d", run_dir.name, shape.name, "max_error", f"{m.max_error:.6g}", "sdf")]
    append_metrics(run_dir / "metrics.tsv", rows)
    for row in rows:
        print("\t".join(row))
    return 0


# -- render / interpolate / eval -------------------------------------------------


def _load_run(run_dir):
    run = RunConfig.load(run_dir)
    if run.pipeline == "2d":
        cfg = sdf2d.Lab2DConfig(**run.train)
        path = Path(run_dir, "params.hypf")
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint {path}")
        params = sdf2d.init_lab(cfg, len(sdf2d.circle_cross_family()))
        params.load_values(read_tensors(path))
        return run, cfg, params, None, 0
    cfg = TrainConfig.from_dict(run.train)
    ckpt = Trainer.latest_checkpoint(run_dir)
    if ckpt is None:
        raise FileNotFoundError(f"no checkpoint under {run_dir}/checkpoints")
    params, step = load_params(ckpt, cfg.model, np.dtype(cfg.dtype))
    return run, cfg, params, load_dataset(run.dataset), step


def _frame_codes(params, cfg, ds, frame):
    if frame in set(ds.train_idx.tolist()):
        return None
    return interpolated_frame_codes(params, cfg.model, ds, frame)


def cmd_render(args):
    run, cfg, params, ds, step = _load_run(args.run)
    if run.pipeline == "2d":
        raise UsageError("render applies to 3d runs; use interpolate for the 2d lab")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not 0 <= args.frame < ds.n_frames:
        raise UsageError(f"--frame must lie in [0, {ds.n_frames})")
    cams = args.cameras if args.cameras else [args.frame]
    codes = _frame_codes(params, cfg, ds, args.frame)
    rows = []
    for c in cams:
        img = render_frame(params, cfg.model, ds, args.frame, step, args.samples, codes=codes,
                           camera=ds.cameras[c], threads=resolve_threads(args.threads))
        imageio.write_png(out / f"frame{args.frame:05d}_cam{c:05d}.png", img["rgb"])
        if c == args.frame:
            value = psnr(img["rgb"], ds.images[c])
            rows.append(("render", Path(args.run).name, c, "psnr", f"{value:.4f}", "dB"))
            print(f"frame {c}\tpsnr\t{value:.4f}")
    if rows:
        append_metrics(Path(args.run) / "metrics.tsv", rows)
    return 0


def cmd_interpolate(args):
    run, cfg, params, ds, step = _load_run(args.run)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    ts = [0.0] if args.steps == 1 else np.linspace(0.0, 1.0, args.steps).tolist()
    if run.pipeline == "2d":
        table = sdf2d.code_table(params, cfg)
        n = len(table)
        if not (0 <= args.from_ < n and 0 <= args.to < n):
            raise UsageError(f"shape indices must lie in [0, {n})")
        masks = sdf2d.interpolate_shapes_2d(params, cfg, table[args.from_], table[args.to], args.steps)
        imageio.write_png(out / "strip.png", np.concatenate([m.astype(float) for m in masks], axis=1))
        rows = []
        for t, m in zip(ts, masks):
            left, right = sdf2d.half_areas(m)
            rows.append(f"{t:.4f}\t{left:.5f}\t{right:.5f}")
        print("t\tleft_area\tright_area\n" + "\n".join(rows))
        return 0
    for f in (args.from_, args.to):
        if not 0 <= f < ds.n_frames:
            raise UsageError(f"frame {f} out of range [0, {ds.n_frames})")
    cam = ds.cameras[args.camera if args.camera is not None else args.from_]
    frames = []
    for k, t in enumerate(ts):
        codes = interpolate_codes(params, cfg.model, args.from_, args.to, t)
        img = render_frame(params, cfg.model, ds, args.from_, step, args.samples, codes=codes, camera=cam,
                           threads=resolve_threads(args.threads))
        imageio.write_png(out / f"interp_{k:03d}.png", img["rgb"])
        frames.append(img["rgb"])
    imageio.write_png(out / "strip.png", np.concatenate(frames, axis=1))
    return 0


def cmd_eval(args):
    run, cfg, params, ds, step = _load_run(args.run)
    if run.pipeline == "2d":
        raise UsageError("eval applies to 3d runs; 2d metrics are written by train")
    if len(ds.heldout_idx) == 0:
        raise UsageError("dataset has no held-out views")
    scores, mean, _ = evaluate_psnr(params, cfg.model, ds, step, args.samples, threads=resolve_threads(args.threads))
    name = Path(args.run).name
    rows = [("eval", name, k, "psnr", f"{v:.4f}", "dB") for k, v in scores.items()]
    rows.append(("eval", name, "mean", "psnr", f"{mean:.4f}", "dB"))
    if args.baseline:
        brun, bcfg, bparams, bds, bstep = _load_run(args.baseline)
        _, bmean, _ = evaluate_psnr(bparams, bcfg.model, bds, bstep, args.samples,
                                    threads=resolve_threads(args.threads))
        rows.append(("eval", name, "baseline", "psnr", f"{bmean:.4f}", "dB"))
        rows.append(("eval", name, "gain", "psnr", f"{mean - bmean:.4f}", "dB"))
    append_metrics(Path(args.run) / "metrics.tsv", rows)
    print("frame\tpsnr_db")
    for r in rows:
        print(f"{r[2]}\t{r[4]}")
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="hyperfield", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="render a synthetic dataset")
    g.add_argument("--scene", required=True)
    g.add_argument("--frames", type=int, default=40)
    g.add_argument("--res", type=int, default=64)
    g.add_argument("--samples", type=int, default=1024)
    g.add_argument("--density", type=float, default=1.0)
    g.add_argument("--holdout-every", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_dataset)

    t = sub.add_parser("train", help="train a 3d field or the 2d level-set lab")
    t.add_argument("--pipeline", choices=("3d", "2d"))
    t.add_argument("--mode", choices=sorted(set(SLICING_MODES)))
    t.add_argument("--data")
    t.add_argument("--out", required=True)
    t.add_argument("--config")
    t.add_argument("--iters", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--samples", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--lr-end", type=float)
    t.add_argument("--elastic", action="store_true")
    t.add_argument("--no-warp", action="store_true")
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--threads", type=int)
    t.add_argument("--resume", action="store_true")
    t.set_defaults(fn=cmd_train)

    r = sub.add_parser("render", help="render one frame's code from dataset cameras")
    r.add_argument("--run", required=True)
    r.add_argument("--frame", type=int, required=True)
    r.add_argument("--cameras", type=int, nargs="*")
    r.add_argument("--samples", type=int, default=64)
    r.add_argument("--out", required=True)
    r.add_argument("--threads", type=int)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(fn=cmd_render)

    i = sub.add_parser("interpolate", help="sweep codes between two frames or shapes")
    i.add_argument("--run", required=True)
    i.add_argument("--from", dest="from_", type=int, required=True)
    i.add_argument("--to", type=int, required=True)
    i.add_argument("--steps", type=int, default=9)
    i.add_argument("--camera", type=int)
    i.add_argument("--samples", type=int, default=64)
    i.add_argument("--out", required=True)
    i.add_argument("--threads", type=int)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(fn=cmd_interpolate)

    e = sub.add_parser("eval", help="held-out PSNR")
    e.add_argument("--run", required=True)
    e.add_argument("--baseline")
    e.add_argument("--samples", type=int, default=64)
    e.add_argument("--threads", type=int)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(fn=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"hyperfield: error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, sdf2d.TrainingDiverged2D) as exc:
        print(f"hyperfield: training diverged: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, FileNotFoundError, OSError, ValueError, KeyError) as exc:
        print(f"hyperfield: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
