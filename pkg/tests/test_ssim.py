import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from idsynth.optimize.ssim import DEFAULT, SsimConfig, ssim, ssim_map


def _reflect(i, n):
    if i < 0:
        return -i - 1
    if i >= n:
        return 2 * n - i - 1
    return i


def scalar_ssim(a, b, window=11, sd=1.5, k1=0.01, k2=0.03, L=255.0):
    """Pixel-by-pixel reference: explicit Gaussian weights, symmetric edge reflection, no vectorization."""
    r = window // 2
    g = [math.exp(-(t * t) / (2 * sd * sd)) for t in range(-r, r + 1)]
    s = sum(g)
    g = [v / s for v in g]
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    h, w = len(a), len(a[0])
    vals = []
    for y in range(h):
        row = []
        for x in range(w):
            mx = my = mxx = myy = mxy = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    wt = g[dy + r] * g[dx + r]
                    yy, xx = _reflect(y + dy, h), _reflect(x + dx, w)
                    p, q = a[yy][xx], b[yy][xx]
                    mx += wt * p
                    my += wt * q
                    mxx += wt * p * p
                    myy += wt * q * q
                    mxy += wt * p * q
            vx, vy, cov = mxx - mx * mx, myy - my * my, mxy - mx * my
            row.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        vals.append(row)
    if h > window and w > window:
        vals = [row[r:w - r] for row in vals[r:h - r]]
    flat = [v for row in vals for v in row]
    return sum(flat) / len(flat)


def gradient(n=8):
    return np.add.outer(np.arange(n) * 12.0, np.arange(n) * 7.0) + 40.0


def test_inverted_gradient_is_negative_and_matches_scalar_oracle():
    x = gradient()
    y = 255.0 - x
    got = ssim(x, y)
    want = scalar_ssim(x.tolist(), y.tolist())
    assert got < 0
    assert got == pytest.approx(want, abs=1e-9)


def test_scalar_oracle_on_image_larger_than_window():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 256, (16, 18)).astype(np.float64)
    b = np.clip(a + rng.normal(0, 20, a.shape), 0, 255)
    assert ssim(a, b) == pytest.approx(scalar_ssim(a.tolist(), b.tolist()), abs=1e-9)


def test_matches_scikit_image_gaussian_mode():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 256, (60, 80)).astype(np.float64)
    b = np.clip(a * 0.8 + rng.normal(0, 15, a.shape), 0, 255)
    ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=255)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-9)


def test_identical_images_score_one():
    x = np.random.default_rng(2).integers(0, 256, (30, 30, 3)).astype(np.uint8)
    assert ssim(x, x) == pytest.approx(1.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        ssim(np.zeros((10, 10)), np.zeros((10, 11)))


@pytest.mark.parametrize("kw", [{"window": 4}, {"window": 1}, {"k1": 0}, {"k2": -0.1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SsimConfig(**kw)


def test_default_constants():
    assert (DEFAULT.window, DEFAULT.window_stddev, DEFAULT.k1, DEFAULT.k2, DEFAULT.dynamic_range) == (
        11, 1.5, 0.01, 0.03, 255)


def test_map_shape_equals_input():
    assert ssim_map(np.zeros((20, 25)), np.ones((20, 25))).shape == (20, 25)


images = arrays(np.float64, (14, 14), elements=st.floats(0, 255, allow_nan=False, width=32))


@settings(max_examples=40, deadline=None)
@given(images, images)
def test_bounded_and_symmetric(a, b):
    s = ssim(a, b)
    assert -1.0 <= s <= 1.0
    assert s == ssim(b, a)


@settings(max_examples=40, deadline=None)
@given(images, images, st.floats(0.1, 10))
def test_scale_invariance_with_rescaled_range(a, b, k):
    scaled = SsimConfig(dynamic_range=255 * k)
    assert ssim(a * k, b * k, scaled) == pytest.approx(ssim(a, b), abs=1e-6)
