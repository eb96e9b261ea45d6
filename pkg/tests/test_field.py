import numpy as np
import pytest

from hyperfield.diffcore import tensor as T
from hyperfield.field import (ModelConfig, SliceConfig, TemplateConfig, ambient_coords, broadcast_codes,
                              gather_codes, init_params, interpolate_codes, radiance_at, slice_surface,
                              template_query)
from hyperfield.warp import WarpConfig


def small_config(slicing="ds", use_warp=True, n_frames=4):
    return ModelConfig(
        n_frames=n_frames, slicing=slicing, use_warp=use_warp,
        warp=WarpConfig.default(m=4, depth=3, width=16, skip=(2,)),
        template=TemplateConfig.default(2, 8, m_pos=4, m_dir=2, depth=3, width=32, skip=(2,), feature_dim=8,
                                        color_width=16),
        slice=SliceConfig.default(2, 8, m=4, depth=3, width=16, skip=(2,)),
    )


def probes(n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 3))
    d = rng.normal(size=(n, 3))
    return x, d / np.linalg.norm(d, axis=-1, keepdims=True), rng


def test_beta_zero_outputs_bit_identical_across_ambient_coords():
    cfg = small_config()
    p = init_params(cfg, 0, np.float64)
    x, d, rng = probes(2000)
    psi = T.as_tensor(rng.normal(size=(2000, 8)))
    w1, w2 = rng.normal(size=(2000, 2)) * 5, rng.normal(size=(2000, 2)) * 5
    rgb1, s1 = template_query(T.as_tensor(x), T.as_tensor(w1), T.as_tensor(d), psi, 0.0, p, cfg)
    rgb2, s2 = template_query(T.as_tensor(x), T.as_tensor(w2), T.as_tensor(d), psi, 0.0, p, cfg)
    assert rgb1.value.tobytes() == rgb2.value.tobytes()
    assert s1.value.tobytes() == s2.value.tobytes()
    rgb3, _ = template_query(T.as_tensor(x), T.as_tensor(w2), T.as_tensor(d), psi, 1.0, p, cfg)
    assert not np.array_equal(rgb1.value, rgb3.value)


def test_outputs_are_in_range():
    cfg = small_config()
    p = init_params(cfg, 1, np.float64)
    x, d, _ = probes(500)
    rgb, sigma = radiance_at(x, d, 2, 20000, p, cfg)
    assert rgb.min() >= 0 and rgb.max() <= 1 and sigma.min() >= 0


def test_fresh_slicing_surface_is_near_zero_and_deterministic():
    cfg = small_config()
    p = init_params(cfg, 0, np.float64)
    x, _, _ = probes(100)
    omega = T.as_tensor(np.broadcast_to(p["codes.deform"].value[1], (100, 8)))
    w = slice_surface(T.as_tensor(x), omega, p, cfg).value
    assert np.abs(w).max() < 1e-3
    np.testing.assert_array_equal(w, slice_surface(T.as_tensor(x), omega, p, cfg).value)


def test_ap_slice_is_constant_in_space():
    cfg = small_config("ap")
    p = init_params(cfg, 0, np.float64)
    assert np.all(p["codes.ambient"].value == 0)
    p["codes.ambient"].value[...] = np.random.default_rng(2).normal(size=(4, 2))
    x, _, _ = probes(2)
    codes = gather_codes(p, cfg, [3, 3])
    w = ambient_coords(T.as_tensor(x), codes, p, cfg).value
    np.testing.assert_array_equal(w[0], w[1])


def test_ap_equal_codes_give_equal_radiance():
    cfg = small_config("ap")
    p = init_params(cfg, 0, np.float64)
    for name in ("codes.deform", "codes.appearance", "codes.ambient"):
        p[name].value[2] = p[name].value[0]
    x, d, _ = probes(50)
    a = radiance_at(x, d, 0, 5000, p, cfg)
    b = radiance_at(x, d, 2, 5000, p, cfg)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_none_mode_with_zeroed_warp_is_a_static_field():
    warped = small_config("none", use_warp=True)
    static = small_config("none", use_warp=False)
    pw = init_params(warped, 7, np.float64)
    ps = init_params(static, 7, np.float64)
    pw["warp.l3.W"].value[...] = 0
    for name in ps:
        np.testing.assert_array_equal(ps[name].value, pw[name].value)
    x, d, _ = probes(300)
    for frame in (0, 3):
        a, b = radiance_at(x, d, frame, 9000, pw, warped), radiance_at(x, d, frame, 9000, ps, static)
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_frame_lookup_errors():
    cfg = small_config()
    p = init_params(cfg, 0)
    with pytest.raises(IndexError):
        radiance_at(np.zeros((1, 3)), np.array([[0, 0, 1.0]]), 4, 0, p, cfg)
    with pytest.raises(IndexError):
        interpolate_codes(p, cfg, 0, 9, 0.5)


def test_code_interpolation_endpoints_and_midpoint():
    cfg = small_config("ap")
    p = init_params(cfg, 0, np.float64)
    p["codes.deform"].value[0] = 0.0
    p["codes.deform"].value[1] = 2.0
    c0, c1 = interpolate_codes(p, cfg, 0, 1, 0), interpolate_codes(p, cfg, 0, 1, 1)
    mid = interpolate_codes(p, cfg, 0, 1, 0.5)
    for key in ("omega", "psi", "w"):
        np.testing.assert_array_equal(c0[key], p[{"omega": "codes.deform", "psi": "codes.appearance",
                                                 "w": "codes.ambient"}[key]].value[0])
    np.testing.assert_array_equal(c1["omega"], np.full(8, 2.0))
    np.testing.assert_array_equal(mid["omega"], np.ones(8))
    assert not mid["extrapolated"] and interpolate_codes(p, cfg, 0, 1, 1.5)["extrapolated"]


def test_interpolated_t0_matches_frame_query():
    cfg = small_config()
    p = init_params(cfg, 3, np.float64)
    from hyperfield.field import field_query

    x, d, _ = probes(40)
    via_frame = field_query(p, cfg, x, d, gather_codes(p, cfg, np.full(40, 2)), 3.0, 0.5)
    via_codes = field_query(p, cfg, x, d, broadcast_codes(interpolate_codes(p, cfg, 2, 0, 0.0), 40), 3.0, 0.5)
    np.testing.assert_array_equal(via_frame[0].value, via_codes[0].value)


def test_config_round_trip():
    cfg = small_config("ap")
    back = ModelConfig.from_json(cfg.to_json())
    assert back.to_dict() == cfg.to_dict()
