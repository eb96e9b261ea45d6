import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, box
from shapely.ops import unary_union

from hyperfield import sdf2d
from hyperfield.sdf2d import (Circle, Cross, Lab2DConfig, Shape2D, analytic_sdf, circle_cross_family, eval_grid,
                              grid_metrics, grid_points, half_areas, interpolate_shapes_2d, pseudo_huber,
                              sample_batch, sdf_raster, train_2d, truncate)


def shapely_sdf(geom, pts):
    """Independent signed distance oracle: positive inside."""
    return np.array([(1 if geom.contains(Point(p)) else -1) * geom.exterior.distance(Point(p)) for p in pts])


def test_circle_examples():
    disk = Shape2D((Circle((0.0, 0.0), 0.5),))
    np.testing.assert_allclose(analytic_sdf(disk, np.array([[0, 0], [0.5, 0], [0.52, 0]])), [0.5, 0, -0.02],
                               atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8), st.floats(0.15, 0.4), st.floats(0.2, 0.8))
def test_cross_matches_polygon_oracle(cx, cy, arm, frac):
    width = arm * frac
    cross = Cross((cx, cy), arm, width)
    poly = unary_union([box(cx - arm, cy - width, cx + arm, cy + width), box(cx - width, cy - arm, cx + width, cy + arm)])
    pts = np.random.default_rng(0).uniform(-1, 1, (200, 2))
    np.testing.assert_allclose(cross.sdf(pts), shapely_sdf(poly, pts), atol=1e-12)


def test_union_is_max_and_family_layout():
    fam = circle_cross_family()
    assert [s.name for s in fam] == ["CC", "CX", "XC", "XX"]
    pts = np.random.default_rng(1).uniform(-1, 1, (300, 2))
    for s in fam:
        members = np.stack([p.sdf(pts) for p in s.primitives])
        np.testing.assert_array_equal(analytic_sdf(s, pts), members.max(axis=0))
    # the cross sits inside the circle, so it is strictly smaller
    c, x = fam[0].primitives[0], fam[3].primitives[0]
    inside_x = x.sdf(pts) > 0
    assert np.all(c.sdf(pts[inside_x]) > 0)


def test_truncate_examples():
    np.testing.assert_array_equal(truncate(np.array([0.5, 0.0, -0.02, -3.0])), [0.05, 0.0, -0.02, -0.05])


def test_pseudo_huber_examples():
    d = 0.005
    assert float(pseudo_huber(0.3, 0.3, d).value) == 0.0
    assert float(pseudo_huber(d, 0.0, d).value) == pytest.approx(d * d * (np.sqrt(2) - 1), rel=1e-12)
    assert float(pseudo_huber(d, 0.0, d).value) == pytest.approx(1.0355e-5, rel=1e-4)
    assert float(pseudo_huber(1.0, 0.0, d).value) == pytest.approx(d, rel=0.01)


def test_batch_targets_are_truncated():
    fam = circle_cross_family()
    xy, ids, target = sample_batch(fam, Lab2DConfig(), 3)
    assert np.abs(target).max() <= 0.05 and xy.min() >= -1 and xy.max() <= 1
    np.testing.assert_array_equal(target, [truncate(analytic_sdf(fam[i], p[None]))[0] for i, p in zip(ids, xy)])


def test_grid_metrics_of_perfect_and_blank_predictors():
    shape = Shape2D((Circle((0.3, -0.2), 0.35),))
    true = analytic_sdf(shape, grid_points(64)).reshape(64, 64)
    perfect = grid_metrics(true.copy(), true)
    assert perfect.sign_agreement == 100.0 and perfect.iou == 1.0
    blank = grid_metrics(np.full_like(true, -1e-3), true)
    inside = (true > 0).mean() * 100
    assert blank.sign_agreement == pytest.approx(100 - inside) and blank.iou == 0.0


@pytest.fixture(scope="module")
def trained():
    fam = circle_cross_family()
    return {mode: train_2d(fam, mode) for mode in ("ds", "ap")}


def test_ds_family_accuracy(trained):
    res = trained["ds"]
    for k, shape in enumerate(res.family):
        m = eval_grid(res.params, res.config, res.code(k), shape)
        assert m.sign_agreement >= 97.0 and m.iou >= 0.9
        assert np.isfinite(sdf_raster(res.params, res.config, res.code(k), 32)).all()


def test_ds_not_worse_than_ap(trained):
    def mean_agreement(res):
        return np.mean([eval_grid(res.params, res.config, res.code(k), s).sign_agreement
                        for k, s in enumerate(res.family)])

    assert mean_agreement(trained["ds"]) >= mean_agreement(trained["ap"]) - 1.0


def test_interpolation_endpoints(trained):
    res = trained["ds"]
    frames = interpolate_shapes_2d(res.params, res.config, res.code(0), res.code(3), steps=5)
    np.testing.assert_array_equal(frames[0], sdf_raster(res.params, res.config, res.code(0)) > 0)
    np.testing.assert_array_equal(frames[-1], sdf_raster(res.params, res.config, res.code(3)) > 0)


def test_ds_shares_slices_where_shapes_agree(trained):
    """CC and CX share the left circle, so their slicing surfaces agree more on the left."""
    res = trained["ds"]
    cfg, p = res.config, res.params
    pts = grid_points(64)
    from hyperfield.diffcore import tensor as T

    def w(code):
        return sdf2d.ambient_2d(p, cfg, pts, T.as_tensor(np.repeat(code[None], len(pts), 0))).value[:, 0]

    gap = np.abs(w(res.code(0)) - w(res.code(1)))
    left = pts[:, 0] < 0
    assert gap[left].mean() < gap[~left].mean()


def test_half_areas_units():
    mask = np.zeros((10, 10), dtype=bool)
    mask[:, :5] = True
    assert half_areas(mask) == (2.0, 0.0)


def test_single_shape_fits_closely():
    shape = Shape2D((Circle((0.1, 0.0), 0.45),), "disk")
    res = train_2d([shape], "ap", Lab2DConfig(mode="ap", iterations=2000))
    assert np.mean(res.trace[-100:]) < 1e-5
    assert eval_grid(res.params, res.config, res.code(0), shape).sign_agreement > 99.0


def test_ap_codes_do_not_interfere_across_training_order():
    fam = circle_cross_family()
    pair = [fam[0], fam[3]]
    cfg = Lab2DConfig(mode="ap", iterations=1200)
    a = train_2d(pair, "ap", cfg)
    b = train_2d(pair[::-1], "ap", cfg)
    for res, idx in ((a, 0), (b, 1)):
        m = eval_grid(res.params, res.config, res.code(idx), fam[0])
        assert m.sign_agreement > 97.0


def test_train_rejects_empty_family_and_bad_mode():
    with pytest.raises(ValueError):
        train_2d([], "ds")
    with pytest.raises(ValueError):
        Lab2DConfig(mode="none")
