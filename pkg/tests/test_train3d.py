import numpy as np
import pytest

from hyperfield.diffcore import backward
from hyperfield.field import ModelConfig, SliceConfig, TemplateConfig
from hyperfield.render import stratified_samples
from hyperfield.scenegen import generate_dataset
from hyperfield.train3d import (TrainConfig, Trainer, TrainingDiverged, alpha_steps_for, desk_model_config,
                                evaluate_psnr, interpolated_frame_codes, photometric_loss)
from hyperfield.warp import WarpConfig


def tiny_model(n_frames, slicing="ds", use_warp=True):
    return ModelConfig(
        n_frames=n_frames, slicing=slicing, use_warp=use_warp,
        warp=WarpConfig.default(m=4, depth=2, width=16, skip=(1,)),
        template=TemplateConfig.default(2, 8, m_pos=4, m_dir=2, depth=2, width=32, skip=(1,), feature_dim=8,
                                        color_width=16),
        slice=SliceConfig.default(2, 8, m=4, depth=2, width=16, skip=(1,)),
    )


@pytest.fixture(scope="module")
def split_ds(tmp_path_factory):
    return generate_dataset("sphere-split", tmp_path_factory.mktemp("d") / "split", n_frames=9,
                            resolution=(16, 16), samples=128)


@pytest.fixture(scope="module")
def static_ds(tmp_path_factory):
    return generate_dataset("static-sphere", tmp_path_factory.mktemp("d") / "static", n_frames=3,
                            resolution=(16, 16), samples=256)


def config(ds, slicing="ds", use_warp=True, **kw):
    kw = {"iterations": 40, "batch_rays": 32, "samples_per_ray": 12, **kw}
    return TrainConfig(tiny_model(ds.n_frames, slicing, use_warp), **kw)


def test_photometric_loss_is_mse():
    a, b = np.zeros((4, 3)), np.full((4, 3), 0.1)
    assert float(photometric_loss(a, b).value) == pytest.approx(0.01)


def test_alpha_schedule_scaling():
    assert alpha_steps_for(250_000) == (1000, 80000)
    assert alpha_steps_for(20_000) == (80, 6400)


def test_batches_cover_training_frames_only(split_ds):
    tr = Trainer(config(split_ds, batch_rays=4000), split_ds)
    frames, pix, t, deltas = tr.sample_batch(0)
    assert set(frames.tolist()) == set(split_ds.train_idx.tolist())
    assert pix.max() < 256 and t.shape == (4000, 12)


def test_fixed_seed_traces_are_identical(split_ds):
    a = Trainer(config(split_ds), split_ds)
    b = Trainer(config(split_ds), split_ds)
    a.train()
    b.train()
    assert a.trace == b.trace
    assert all(np.isfinite(a.trace))
    c = Trainer(config(split_ds, seed=1), split_ds)
    c.train(until=5)
    assert c.trace != a.trace[:5]


def test_resume_continues_bit_identically(split_ds, tmp_path):
    full = Trainer(config(split_ds), split_ds)
    full.train()
    part = Trainer(config(split_ds), split_ds, tmp_path / "run")
    part.train(until=17)
    ckpt = part.save_checkpoint()
    resumed = Trainer(config(split_ds), split_ds, tmp_path / "run")
    resumed.load_checkpoint(ckpt)
    assert resumed.step == 17
    resumed.trace = list(part.trace)
    resumed.train()
    assert resumed.trace == full.trace
    for name in full.params:
        assert full.params[name].value.tobytes() == resumed.params[name].value.tobytes()


def test_run_directory_artifacts(split_ds, tmp_path):
    tr = Trainer(config(split_ds, log_every=10), split_ds, tmp_path / "r")
    tr.train()
    rows = (tmp_path / "r" / "metrics.log").read_text().splitlines()
    assert [int(r.split("\t")[0]) for r in rows] == [0, 10, 20, 30, 39]
    assert all(len(r.split("\t")) == 5 for r in rows)
    assert (tmp_path / "r" / "config.json").exists()
    assert Trainer.latest_checkpoint(tmp_path / "r").name == "ckpt_0000040.hypf"


def test_elastic_flag_off_adds_nothing(split_ds):
    step = 3000
    off = Trainer(config(split_ds, elastic=False), split_ds)
    on = Trainer(config(split_ds, elastic=True), split_ds)
    loss_off, _, _ = off.loss_terms(step)
    backward(loss_off, off.params)
    _, terms, _ = on.loss_terms(step)
    backward(terms["photometric"], on.params)
    for name in off.params:
        assert off.params[name].grad.tobytes() == on.params[name].grad.tobytes()
    on.params.zero_grads()
    total, terms, _ = on.loss_terms(step)
    assert float(terms["elastic"].value) >= 0
    backward(total, on.params)
    assert not np.array_equal(on.params["warp.l0.W"].grad, off.params["warp.l0.W"].grad)


def test_frozen_zero_warp_matches_static_field(static_ds):
    warped = config(static_ds, "none", True, frozen=tuple())
    static = config(static_ds, "none", False)
    a = Trainer(warped, static_ds)
    names = [n for n in a.params if n.startswith("warp.")]
    a.params["warp.l2.W"].value[...] = 0
    a.params.frozen = set(names)
    b = Trainer(static, static_ds)
    a.train()
    b.train()
    assert a.trace == b.trace


class FullImageTrainer(Trainer):
    """Every step sees all pixels at bin midpoints, so the loss curve carries no sampling noise."""

    def sample_batch(self, step):
        n, ds = self.hw, self.dataset
        t, deltas = stratified_samples(np.full(n, ds.near), np.full(n, ds.far), self.config.samples_per_ray, batch=n)
        return np.zeros(n, dtype=int), np.arange(n), t, deltas


def test_static_scene_loss_falls(static_ds):
    # close-up framing: the sphere fills the view rather than a few background-dominated pixels
    ds = generate_dataset("static-sphere", static_ds.root.parent / "one", n_frames=1, resolution=(16, 16),
                          samples=256, holdout_every=1000, orbit={"focal": 88.0})
    tr = FullImageTrainer(TrainConfig(desk_model_config(1, "none", use_warp=False), iterations=150,
                                      batch_rays=256, samples_per_ray=24), ds)
    tr.train()
    smooth = np.convolve(tr.trace, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smooth) < 0)
    assert smooth[-1] < 0.05 * smooth[0]


def test_nonfinite_loss_aborts_with_frames(split_ds):
    tr = Trainer(config(split_ds), split_ds)
    tr.params["template.trunk.l0.b"].value[...] = np.nan
    with pytest.raises(TrainingDiverged, match=r"step 0; frames \["):
        tr.train_step()


def test_heldout_codes_are_time_interpolated(split_ds):
    tr = Trainer(config(split_ds, slicing="ap"), split_ds)
    cfg = tr.config.model
    table = tr.params["codes.deform"].value
    codes = interpolated_frame_codes(tr.params, cfg, split_ds, 4)
    np.testing.assert_allclose(codes["omega"], 0.5 * (table[3] + table[5]), rtol=1e-6)
    assert "w" in codes


def test_evaluate_psnr_reports_heldout_views(split_ds):
    tr = Trainer(config(split_ds), split_ds)
    scores, mean, renders = evaluate_psnr(tr.params, tr.config.model, split_ds, 0, 16)
    assert list(scores) == [4] and np.isfinite(mean)
    assert renders[4]["rgb"].shape == (16, 16, 3)
