import math

import numpy as np
import pytest

from apcc.core import RawPointCloud
from apcc.errors import EmptyInput
from apcc.metrics import compute_metrics, format_db, psnr


def test_identical_clouds():
    rng = np.random.default_rng(60)
    c = RawPointCloud(rng.normal(0, 5, (500, 3)), rng.integers(0, 256, (500, 3)))
    m = compute_metrics(c, c)
    assert m.d1_mse == 0 and math.isinf(m.d1_psnr) and m.hausdorff == 0
    assert all(math.isinf(v) for v in m.attr_psnr.values())
    assert format_db(m.d1_psnr) == "inf"


def test_two_point_hand_example():
    ref = RawPointCloud(np.array([[0.0, 0, 0], [1023, 0, 0]]))
    dist = RawPointCloud(np.array([[0.0, 0, 0], [1023, 1, 0]]))
    m = compute_metrics(ref, dist)
    assert m.d1_mse == pytest.approx(0.5)
    assert m.peak == 1023
    assert m.hausdorff == pytest.approx(1.0)
    assert m.d1_psnr == pytest.approx(10 * math.log10(1023**2 / 0.5))


def test_symmetric():
    rng = np.random.default_rng(61)
    a = RawPointCloud(rng.uniform(0, 100, (300, 3)))
    b = RawPointCloud(rng.uniform(0, 100, (200, 3)))
    assert compute_metrics(a, b).d1_mse == pytest.approx(compute_metrics(b, a).d1_mse)
    assert compute_metrics(a, b).hausdorff == pytest.approx(compute_metrics(b, a).hausdorff)


def test_color_psnr():
    p = np.array([[0.0, 0, 0], [5, 0, 0]])
    ref = RawPointCloud(p, np.array([[100, 100, 100], [0, 0, 0]]))
    dist = RawPointCloud(p, np.array([[110, 100, 100], [0, 0, 0]]))
    m = compute_metrics(ref, dist)
    assert m.attr_psnr["r"] == pytest.approx(psnr(255, 50))
    assert math.isinf(m.attr_psnr["g"])
    assert m.y_psnr == pytest.approx(psnr(255, (0.2126 * 10) ** 2 / 2))


def test_reflectance_psnr():
    p = np.array([[0.0, 0, 0]])
    m = compute_metrics(RawPointCloud(p, reflectance=np.array([1000])), RawPointCloud(p, reflectance=np.array([1100])))
    assert m.attr_psnr["reflectance"] == pytest.approx(psnr(65535, 10000))
    assert math.isnan(m.y_psnr)


def test_empty_rejected():
    with pytest.raises(EmptyInput):
        compute_metrics(np.zeros((0, 3)), np.zeros((1, 3)))
