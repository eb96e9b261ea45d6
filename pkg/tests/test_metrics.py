import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hyperfield import imageio
from hyperfield.metrics import MetricRecord, mask_components, mse, psnr


def test_psnr_closed_forms():
    a = np.zeros((4, 4, 3))
    assert psnr(a, a) == 99.0
    assert psnr(a, np.ones_like(a)) == 0.0
    assert psnr(a, np.full_like(a, 0.1)) == pytest.approx(20.0)
    assert psnr(a, np.full_like(a, np.sqrt(1e-3))) == pytest.approx(30.0)
    with pytest.raises(ValueError):
        mse(a, np.zeros((4, 3, 3)))


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (5, 6), elements=st.floats(0, 1)), hnp.arrays(np.float64, (5, 6), elements=st.floats(0, 1)))
def test_psnr_symmetric(a, b):
    assert psnr(a, b) == psnr(b, a)


def test_psnr_falls_with_noise_amplitude():
    rng = np.random.default_rng(0)
    img = rng.random((32, 32, 3))
    means = []
    for amp in (0.01, 0.03, 0.1, 0.3):
        means.append(np.mean([psnr(img, np.clip(img + amp * rng.normal(size=img.shape), 0, 1)) for _ in range(100)]))
    assert all(x > y for x, y in zip(means, means[1:]))


def test_mask_components():
    assert mask_components(np.zeros((20, 20))) == 0
    yy, xx = np.mgrid[:40, :40]
    disks = ((xx - 10) ** 2 + (yy - 20) ** 2 < 36) | ((xx - 30) ** 2 + (yy - 20) ** 2 < 36)
    assert mask_components(disks.astype(float)) == 2
    diag = np.eye(4)
    assert mask_components(diag) == 4  # 4-connectivity does not join diagonals
    with pytest.raises(ValueError):
        mask_components(diag, threshold=1.0)


def test_metric_records_reject_nonfinite():
    MetricRecord("psnr", 3, 31.2, "dB")
    with pytest.raises(ValueError):
        MetricRecord("psnr", 3, float("nan"))


def test_image_round_trips(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.random((7, 9, 3))
    imageio.write_png(tmp_path / "a.png", img)
    np.testing.assert_allclose(imageio.read_png(tmp_path / "a.png"), imageio.to_uint8(img) / 255.0)
    imageio.write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_array_equal(imageio.read_ppm(tmp_path / "a.ppm"), imageio.read_png(tmp_path / "a.png"))
    vals = rng.uniform(0.2, 0.9, (7, 9))
    imageio.write_gray16(tmp_path / "g.png", vals)
    back = imageio.read_gray16(tmp_path / "g.png")
    assert np.abs(back - vals).max() <= (vals.max() - vals.min()) / 65535
