import json
import warnings

import numpy as np
import pytest
from scipy import ndimage
from scipy.spatial.transform import Rotation

from hyperfield import imageio
from hyperfield.metrics import mask_components
from hyperfield.render import look_at
from hyperfield.scenegen import (BUILTINS, DatasetError, builtin_scene, generate_dataset, heldout_mask,
                                 load_dataset, render_ground_truth)


def test_builtin_lookup():
    with pytest.raises(KeyError, match="sphere-split"):
        builtin_scene("cube")
    for name in BUILTINS:
        scene = builtin_scene(name)
        sigma, rgb = scene(np.random.default_rng(0).uniform(-1.5, 1.5, (500, 3)), 0.4)
        assert sigma.min() >= 0 and rgb.min() >= 0 and rgb.max() <= 1


def test_sphere_split_gap_density():
    scene = builtin_scene("sphere-split")
    mid = np.zeros((1, 3))
    assert scene(mid, 0.0)[0][0] == 1.0
    assert scene(mid, 1.0)[0][0] == 0.0


def test_torus_is_rotationally_symmetric_when_closed():
    scene = builtin_scene("torus-open")
    pts = np.random.default_rng(1).uniform(-0.9, 0.9, (400, 3))
    base = scene(pts, 0.0)[0]
    for theta in (0.3, 1.7, 3.0):
        rz = Rotation.from_euler("z", theta).as_matrix()
        np.testing.assert_allclose(scene(pts @ rz.T, 0.0)[0], base, atol=1e-12)
    assert scene(np.array([[0.6, 0.0, 0.0]]), 1.0)[0][0] == 0.0


def occupied_components(scene, t, n=90):
    """Connected pieces of {sigma > 0.5} on a voxel grid over the scene box."""
    lo, hi = np.array(scene.bounds[0]), np.array(scene.bounds[1])
    axes = [np.linspace(lo[i], hi[i], n) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    occ = scene(grid, t)[0].reshape(n, n, n) > 0.5
    return ndimage.label(occ)[1]


def test_topology_metadata_matches_field():
    scene = builtin_scene("sphere-split")
    (event,) = scene.topology_events
    t = event["time"]
    assert occupied_components(scene, t - 0.05) == event["before"]
    assert occupied_components(scene, t + 0.05) == event["after"]


def test_ground_truth_split_and_merged_masks():
    scene = builtin_scene("sphere-split")
    cam = look_at([0, -3.0, 0.6], [0, 0, 0], focal=88.0 * 0.5, resolution=(32, 32))
    merged = render_ground_truth(scene, cam, 0.0, 1.75, 4.4, 1024)
    split = render_ground_truth(scene, cam, 1.0, 1.75, 4.4, 1024)
    assert mask_components(merged["acc"]) == 1
    assert mask_components(split["acc"]) == 2
    finer = render_ground_truth(scene, cam, 1.0, 1.75, 4.4, 2048)
    assert np.abs(finer["rgb"] - split["rgb"]).max() < 2e-3


def test_static_sphere_mirror_views_cover_equal_area():
    scene = builtin_scene("static-sphere")
    a = render_ground_truth(scene, look_at([0, -3.0, 0], [0, 0, 0], focal=40.0, resolution=(32, 32)), 0, 2, 4, 1024)
    b = render_ground_truth(scene, look_at([0, 3.0, 0], [0, 0, 0], focal=40.0, resolution=(32, 32)), 0, 2, 4, 1024)
    na, nb = (a["acc"] > 0.5).sum(), (b["acc"] > 0.5).sum()
    assert abs(na - nb) <= 0.01 * max(na, nb)


def test_heldout_split_is_disjoint():
    mask = heldout_mask(40)
    assert mask.sum() == 5 and list(np.flatnonzero(mask)) == [4, 12, 20, 28, 36]


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds") / "tiny"
    ds = generate_dataset("sphere-split", root, n_frames=9, resolution=(12, 10), samples=128)
    return root, ds


def test_dataset_round_trip(tiny, tmp_path):
    root, ds = tiny
    manifest = json.loads((root / "dataset.json").read_text())
    again = load_dataset(root)
    assert again.manifest == manifest == ds.manifest
    assert again.images.shape == (9, 10, 12, 3)
    assert set(again.train_idx) & set(again.heldout_idx) == set()
    np.testing.assert_array_equal(again.heldout_idx, [4])
    for k, cam in enumerate(again.cameras):
        assert cam.to_dict() == manifest["frames"][k]["camera"]
    acc = imageio.read_gray16(root / "acc" / "00008.png")
    assert acc.shape == (10, 12) and acc.max() <= 1.0
    # re-running with the same seed writes byte-identical images
    other = tmp_path / "again"
    generate_dataset("sphere-split", other, n_frames=9, resolution=(12, 10), samples=128)
    for k in range(9):
        name = f"rgb/{k:05d}.png"
        assert (root / name).read_bytes() == (other / name).read_bytes()


def test_dataset_validation(tiny, tmp_path):
    root, _ = tiny
    broken = tmp_path / "broken"
    generate_dataset("static-sphere", broken, n_frames=3, resolution=(8, 8), samples=64)
    (broken / "rgb" / "00001.png").unlink()
    with pytest.raises(DatasetError, match="00001.png"):
        load_dataset(broken)

    m = json.loads((root / "dataset.json").read_text())
    edited = tmp_path / "edited"
    edited.mkdir()
    for sub in ("rgb", "acc"):
        (edited / sub).symlink_to(root / sub)
    m["frames"][2]["time"] = 1.5
    (edited / "dataset.json").write_text(json.dumps(m))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ds = load_dataset(edited)
    assert ds.times[2] == 1.5 and any("outside" in str(w.message) for w in caught)

    m["version"] = 99
    (edited / "dataset.json").write_text(json.dumps(m))
    with pytest.raises(DatasetError, match="version"):
        load_dataset(edited)
    m["version"] = 1
    m["resolution"] = [13, 10]
    (edited / "dataset.json").write_text(json.dumps(m))
    with pytest.raises(DatasetError, match="resolution"):
        load_dataset(edited)
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "nowhere")
