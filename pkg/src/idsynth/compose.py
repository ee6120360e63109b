"""Placing a rendered document into a photographed scene: homography warp + pyramid blending."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d, map_coordinates

from .imageio import read_png

DEFAULT_LEVELS = 4
_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


class ComposeError(ValueError):
    pass


def _as_quad(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4, 2):
        raise ComposeError(f"quad must be 4 (x, y) points, got shape {q.shape}")
    return q


def check_quad(q) -> np.ndarray:
    """Reject quads with three collinear corners or a reflex corner."""
    q = _as_quad(q)
    crosses = []
    for i in range(4):
        a, b, c = q[i], q[(i + 1) % 4], q[(i + 2) % 4]
        crosses.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
    crosses = np.array(crosses)
    scale = max(np.ptp(q[:, 0]), np.ptp(q[:, 1]), 1e-12) ** 2
    if np.any(np.abs(crosses) < 1e-9 * scale):
        raise ComposeError("degenerate quad: collinear corners")
    if not (np.all(crosses > 0) or np.all(crosses < 0)):
        raise ComposeError("quad is not convex")
    return q


def homography(src_quad, dst_quad) -> np.ndarray:
    """3x3 H with H @ [x, y, 1] ~ [x', y', 1], from four correspondences (h33 fixed to 1)."""
    src, dst = check_quad(src_quad), check_quad(dst_quad)
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        A[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i], b[2 * i + 1] = u, v
    try:
        h = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise ComposeError("degenerate quad: singular correspondence system") from None
    return np.append(h, 1.0).reshape(3, 3)


def apply_homography(H: np.ndarray, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    p = np.column_stack([pts, np.ones(len(pts))]) @ H.T
    return p[:, :2] / p[:, 2:3]


def perspective_warp(img: np.ndarray, src_quad, dst_quad, out_shape: tuple[int, int] | None = None):
    """Warp img so src_quad lands on dst_quad.

    Returns (warped image with img's dtype, boolean validity mask of destination pixels whose
    pre-image falls inside the source image). out_shape is (H, W), defaulting to img's.
    """
    H_fwd = homography(src_quad, dst_quad)
    Hinv = np.linalg.inv(H_fwd)
    oh, ow = out_shape or img.shape[:2]
    yy, xx = np.mgrid[0:oh, 0:ow]
    src = apply_homography(Hinv, np.column_stack([xx.ravel(), yy.ravel()]))
    sx, sy = src[:, 0].reshape(oh, ow), src[:, 1].reshape(oh, ow)
    h, w = img.shape[:2]
    eps = 1e-6
    valid = (sx >= -eps) & (sx <= w - 1 + eps) & (sy >= -eps) & (sy <= h - 1 + eps)
    chans = img.reshape(h, w, -1).astype(np.float64)
    out = np.stack([map_coordinates(chans[..., c], [sy, sx], order=1, mode="nearest") for c in range(chans.shape[2])],
                   axis=-1)
    if np.issubdtype(img.dtype, np.integer):
        out = np.clip(np.rint(out), 0, np.iinfo(img.dtype).max)
    out = out.astype(img.dtype).reshape((oh, ow) + img.shape[2:])
    return out, valid


# ---------------------------------------------------------------------------
# pyramids


def _blur(img: np.ndarray, k: np.ndarray = _BINOMIAL) -> np.ndarray:
    return correlate1d(correlate1d(img, k, axis=0, mode="nearest"), k, axis=1, mode="nearest")


def _down(img: np.ndarray) -> np.ndarray:
    return _blur(img)[::2, ::2]


def _up(img: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(tuple(shape[:2]) + img.shape[2:])
    out[::2, ::2] = img
    return _blur(out, 2 * _BINOMIAL)


def gaussian_pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img.astype(np.float64)]
    for _ in range(levels - 1):
        pyr.append(_down(pyr[-1]))
    return pyr


def laplacian_pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    g = gaussian_pyramid(img, levels)
    return [g[i] - _up(g[i + 1], g[i].shape) for i in range(levels - 1)] + [g[-1]]


def reconstruct(pyr: list[np.ndarray]) -> np.ndarray:
    out = pyr[-1]
    for lap in reversed(pyr[:-1]):
        out = lap + _up(out, lap.shape)
    return out


def max_levels(shape) -> int:
    return max(int(math.floor(math.log2(min(shape[:2])))), 1)


def laplacian_blend(fg: np.ndarray, bg: np.ndarray, mask: np.ndarray, levels: int = DEFAULT_LEVELS) -> np.ndarray:
    """Multi-band blend of fg over bg; mask is 1 where fg should show. levels=1 is a hard composite."""
    if fg.shape != bg.shape:
        raise ComposeError(f"fg/bg dimension mismatch: {fg.shape} vs {bg.shape}")
    if mask.shape[:2] != fg.shape[:2]:
        raise ComposeError(f"mask dimension mismatch: {mask.shape} vs {fg.shape}")
    if not 1 <= levels <= max_levels(fg.shape):
        raise ComposeError(f"levels must be in [1, {max_levels(fg.shape)}], got {levels}")
    m = mask.astype(np.float64)
    if fg.ndim == 3:
        m = m[..., None]
    lf = laplacian_pyramid(fg, levels)
    lb = laplacian_pyramid(bg, levels)
    gm = gaussian_pyramid(m, levels)
    out = reconstruct([g * a + (1.0 - g) * b for g, a, b in zip(gm, lf, lb)])
    if np.issubdtype(fg.dtype, np.integer):
        return np.clip(np.rint(out), 0, np.iinfo(fg.dtype).max).astype(fg.dtype)
    return out


# ---------------------------------------------------------------------------
# scenes


@dataclass
class SceneAnnotation:
    scene_image: np.ndarray
    quad: np.ndarray
    mask: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.scene_image = np.asarray(self.scene_image)
        if self.scene_image.ndim == 3 and self.scene_image.shape[2] == 4:
            self.scene_image = self.scene_image[..., :3].copy()
        self.quad = check_quad(self.quad)
        h, w = self.scene_image.shape[:2]
        if np.any(self.quad < 0) or np.any(self.quad[:, 0] > w - 1) or np.any(self.quad[:, 1] > h - 1):
            raise ComposeError("quad corners fall outside the scene")
        if self.mask is not None:
            self.mask = np.asarray(self.mask).astype(bool)
            if self.mask.shape != (h, w):
                raise ComposeError(f"mask shape {self.mask.shape} does not match scene {h}x{w}")


def load_scene(json_path: str | Path) -> SceneAnnotation:
    """`<scene>.json`: {"image": "<png>", "quad": [[x, y] x4], "mask": optional "<png>"} (paths relative)."""
    json_path = Path(json_path)
    try:
        meta = json.loads(json_path.read_text())
        image = read_png(json_path.parent / meta["image"], "RGB")
        mask = None
        if meta.get("mask"):
            mask = read_png(json_path.parent / meta["mask"], "L") > 127
        return SceneAnnotation(image, meta["quad"], mask, name=json_path.stem)
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ComposeError(f"malformed scene annotation {json_path}: {e}") from None


def document_quad(shape) -> np.ndarray:
    h, w = shape[:2]
    return np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)


def insert_into_scene(doc, ann: SceneAnnotation, levels: int = DEFAULT_LEVELS) -> np.ndarray:
    """Warp the document onto the annotated quad and blend it into the scene."""
    pixels = doc.pixels if hasattr(doc, "pixels") else np.asarray(doc)
    scene = ann.scene_image
    warped, valid = perspective_warp(pixels, document_quad(pixels.shape), ann.quad, scene.shape[:2])
    # outside the card, fg is the scene itself so nothing dark bleeds in through the pyramid
    fg = np.where(valid[..., None], warped, scene) if scene.ndim == 3 else np.where(valid, warped, scene)
    mask = ann.mask if ann.mask is not None else valid
    return laplacian_blend(fg.astype(scene.dtype), scene, mask, levels)


def extract_from_scene(scene: np.ndarray, quad, doc_shape) -> np.ndarray:
    """Inverse of insert_into_scene's geometry: rectify the quad back to a doc-sized raster."""
    return perspective_warp(scene, quad, document_quad(doc_shape), doc_shape[:2])[0]
