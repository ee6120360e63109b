import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import binary_dilation

from idsynth.compose import (ComposeError, SceneAnnotation, apply_homography, document_quad, extract_from_scene,
                             homography, insert_into_scene, laplacian_blend, load_scene, max_levels,
                             perspective_warp)
from idsynth.optimize.ssim import ssim


def _rand(shape, seed=0):
    return np.random.default_rng(seed).integers(0, 256, shape, dtype=np.uint8)


def _scene(shape=(300, 420, 3)):
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    base = (80 + 60 * np.sin(xx / 23.0) + 40 * np.cos(yy / 17.0)).astype(np.uint8)
    return np.repeat(base[..., None], 3, axis=2)


def test_identity_warp():
    img = _rand((40, 50, 3))
    q = document_quad(img.shape)
    out, valid = perspective_warp(img, q, q)
    assert valid.all()
    assert np.abs(out.astype(int) - img).max() <= 1


def test_scale_two_grid():
    src = [[0, 0], [10, 0], [10, 10], [0, 10]]
    dst = [[0, 0], [20, 0], [20, 20], [0, 20]]
    H = homography(src, dst)
    grid = np.array([[x, y] for y in range(4) for x in range(4)], dtype=float)
    np.testing.assert_allclose(apply_homography(H, grid), 2 * grid, atol=1e-9)
    img = _rand((11, 11))
    out, valid = perspective_warp(img, src, dst, out_shape=(21, 21))
    for x, y in grid.astype(int):
        assert out[2 * y, 2 * x] == img[y, x] and valid[2 * y, 2 * x]


def test_mild_perspective_round_trip(genuine):
    doc = genuine.pixels
    q = document_quad(doc.shape)
    h, w = doc.shape[:2]
    mild = q + np.array([[12, 6], [-10, 9], [-6, -8], [9, -11]])
    warped, _ = perspective_warp(doc, q, mild * 1.4, out_shape=(int(h * 1.4), int(w * 1.4)))
    back, _ = perspective_warp(warped, mild * 1.4, q, out_shape=(h, w))
    assert ssim(back, doc) >= 0.98


@pytest.mark.parametrize("quad", [[[0, 0], [5, 5], [10, 10], [0, 10]],
                                  [[0, 0], [10, 0], [2, 2], [0, 10]],
                                  [[0, 0], [10, 0], [0, 10], [10, 10]]])
def test_bad_quads(quad):
    with pytest.raises(ComposeError):
        homography(quad, document_quad((11, 11)))


def test_degenerate_masks():
    fg, bg = _rand((64, 80, 3), 1), _rand((64, 80, 3), 2)
    ones = laplacian_blend(fg, bg, np.ones((64, 80), bool), 4)
    zeros = laplacian_blend(fg, bg, np.zeros((64, 80), bool), 4)
    assert np.abs(ones.astype(int) - fg).max() <= 2
    assert np.abs(zeros.astype(int) - bg).max() <= 2


def test_single_level_is_hard_composite():
    fg, bg = _rand((32, 32, 3), 3), _rand((32, 32, 3), 4)
    mask = np.zeros((32, 32), bool)
    mask[5:20, 8:30] = True
    out = laplacian_blend(fg, bg, mask, 1)
    assert np.array_equal(out, np.where(mask[..., None], fg, bg))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5))
def test_blend_with_itself(seed, levels):
    fg = _rand((48, 40, 3), seed)
    mask = np.random.default_rng(seed + 1).random((48, 40)) > 0.5
    out = laplacian_blend(fg, fg, mask, levels)
    assert np.abs(out.astype(int) - fg).max() <= 2


def test_blend_errors():
    a = np.zeros((16, 16, 3))
    with pytest.raises(ComposeError):
        laplacian_blend(a, np.zeros((16, 15, 3)), np.ones((16, 16)))
    with pytest.raises(ComposeError):
        laplacian_blend(a, a, np.ones((15, 16)))
    with pytest.raises(ComposeError):
        laplacian_blend(a, a, np.ones((16, 16)), 0)
    with pytest.raises(ComposeError):
        laplacian_blend(a, a, np.ones((16, 16)), max_levels(a.shape) + 1)


def test_axis_aligned_paste_verbatim(genuine):
    doc = genuine.pixels
    h, w = doc.shape[:2]
    scene = _scene((h + 40, w + 60, 3))
    ann = SceneAnnotation(scene, document_quad(doc.shape))
    out = insert_into_scene(genuine, ann, levels=1)
    assert np.array_equal(out[:h, :w], doc)
    assert np.array_equal(out[h:], scene[h:]) and np.array_equal(out[:, w:], scene[:, w:])


@pytest.mark.parametrize("levels", [1, 3, 4])
def test_far_pixels_unchanged(genuine, levels):
    scene = _scene((520, 760, 3))
    quad = np.array([[120, 60], [690, 90], [660, 470], [90, 430]], float)
    ann = SceneAnnotation(scene, quad)
    out = insert_into_scene(genuine, ann, levels)
    _, valid = perspective_warp(genuine.pixels, document_quad(genuine.pixels.shape), quad, scene.shape[:2])
    near = binary_dilation(valid, iterations=2 * 2**levels)
    assert np.array_equal(out[~near], scene[~near])
    assert out.shape == scene.shape


@pytest.mark.parametrize("quad", [
    [[60, 40], [700, 60], [680, 480], [80, 450]],
    [[100, 50], [640, 110], [620, 420], [120, 470]],
    [[200, 80], [560, 80], [600, 500], [160, 500]],
])
def test_scene_round_trip(genuine, quad):
    doc = genuine.pixels
    ann = SceneAnnotation(_scene((560, 780, 3)), np.array(quad, float))
    out = insert_into_scene(genuine, ann)
    back = extract_from_scene(out, ann.quad, doc.shape)
    assert ssim(back, doc) >= 0.95


def test_annotation_validation(tmp_path):
    scene = _scene((50, 60, 3))
    with pytest.raises(ComposeError):
        SceneAnnotation(scene, [[0, 0], [70, 0], [59, 49], [0, 49]])
    with pytest.raises(ComposeError):
        SceneAnnotation(scene, document_quad(scene.shape), mask=np.ones((10, 10)))
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ComposeError):
        load_scene(tmp_path / "bad.json")


def test_load_demo_scene(demo_dir):
    ann = load_scene(demo_dir / "scenes" / "desk.json")
    assert ann.name == "desk" and ann.scene_image.ndim == 3
