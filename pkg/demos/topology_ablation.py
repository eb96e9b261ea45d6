"""
Deformation alone versus deformation plus ambient slicing
=========================================================

A sphere pinches into two.  A pure deformation field has to tear space to
follow it, while the hyper-space model can slide to a different slice of its
template.  This trains both on a small sphere-split capture and compares
held-out PSNR.  The defaults take a few minutes; ``--iters 20000 --res 64``
is the full-size comparison (about 25 minutes on one core).

    python demos/topology_ablation.py [--iters 3000] [--res 32]
"""

import argparse
import time
from pathlib import Path

import numpy as np

from hyperfield import imageio
from hyperfield.field import interpolate_codes
from hyperfield.metrics import mask_components
from hyperfield.scenegen import generate_dataset
from hyperfield.train3d import (TrainConfig, Trainer, alpha_steps_for, desk_model_config, evaluate_psnr,
                                render_frame)

parser = argparse.ArgumentParser()
parser.add_argument("--iters", type=int, default=3000)
parser.add_argument("--res", type=int, default=32)
parser.add_argument("--out", default="demos/out/topology")
args = parser.parse_args()
out = Path(args.out)

ds = generate_dataset("sphere-split", out / "data", n_frames=40, resolution=(args.res, args.res), samples=512)
print(f"{ds.n_frames} frames, held out: {ds.heldout_idx.tolist()}")

# stretch the ambient ramp to the run length, as for the coarse-to-fine window
beta = (max(1, args.iters // 20), max(2, args.iters // 2))
models = {}
for mode in ("none", "ds"):
    mc = desk_model_config(ds.n_frames, mode, alpha_steps=alpha_steps_for(args.iters), beta_steps=beta)
    tr = Trainer(TrainConfig(mc, iterations=args.iters, batch_rays=192, samples_per_ray=32), ds)
    start = time.time()
    tr.train(progress=lambda s, loss: print(f"  {mode} step {s:6d}  loss {loss:.3g}") if s % 500 == 0 else None)
    scores, mean, _ = evaluate_psnr(tr.params, mc, ds, tr.step, 64)
    comps = [mask_components(render_frame(tr.params, mc, ds, f, tr.step, 64)["acc"]) for f in (0, ds.n_frames - 1)]
    print(f"{mode}: held-out PSNR {mean:.2f} dB, blobs first/last frame {comps}, {time.time() - start:.0f} s")
    models[mode] = (tr, mc)

# sweep the DS code from the first to the last frame with the camera fixed
tr, mc = models["ds"]
strip = []
for t in np.linspace(0, 1, 7):
    codes = interpolate_codes(tr.params, mc, 0, ds.n_frames - 1, t)
    strip.append(render_frame(tr.params, mc, ds, 0, tr.step, 64, codes=codes)["rgb"])
imageio.write_png(out / "ds_code_sweep.png", np.concatenate(strip, axis=1))
print(f"code sweep written to {out}/ds_code_sweep.png")
