"""Landmark-based face morphing: piecewise-affine warp, hull-restricted dissolve, color matching."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.spatial import Delaunay, QhullError

from ..assets import PortraitAsset


class MorphError(ValueError):
    pass


@dataclass(frozen=True)
class MorphConfig:
    blend: float = 0.5
    histogram_match_to_first: bool = True

    def __post_init__(self):
        if not 0.0 <= self.blend <= 1.0:
            raise MorphError(f"blend must be in [0, 1], got {self.blend}")


def bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img (H, W, C) at float coords with edge clamping."""
    H, W = img.shape[:2]
    xs = np.clip(xs, 0, W - 1)
    ys = np.clip(ys, 0, H - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[:, None]
    f = img.astype(np.float64)
    top = f[y0, x0] * (1 - fx) + f[y0, x1] * fx
    bot = f[y1, x0] * (1 - fx) + f[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _corners(shape) -> np.ndarray:
    H, W = shape[:2]
    return np.array([[0, 0], [W - 1, 0], [W - 1, H - 1], [0, H - 1]], dtype=np.float64)


def triangulate(points: np.ndarray) -> np.ndarray:
    try:
        tri = Delaunay(points)
    except (QhullError, ValueError) as e:
        raise MorphError(f"degenerate triangulation: {e}") from None
    p = points[tri.simplices]
    u, v = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    if np.any(area < 1e-9):
        raise MorphError("degenerate triangulation: zero-area triangle")
    return tri.simplices


def hull_mask(points: np.ndarray, shape) -> np.ndarray:
    """Boolean mask of pixel centers inside the convex hull of `points` (x, y)."""
    H, W = shape[:2]
    try:
        tri = Delaunay(points)
    except (QhullError, ValueError) as e:
        raise MorphError(f"degenerate landmark hull: {e}") from None
    yy, xx = np.mgrid[0:H, 0:W]
    return (tri.find_simplex(np.column_stack([xx.ravel(), yy.ravel()]), tol=1e-9) >= 0).reshape(H, W)


def piecewise_affine(img: np.ndarray, src: np.ndarray, dst: np.ndarray, simplices: np.ndarray,
                     out: np.ndarray | None = None) -> np.ndarray:
    """Warp img so that triangle src[s] lands on dst[s] for every simplex s (float output)."""
    H, W = img.shape[:2]
    flat = img.reshape(H, W, -1)
    out = np.zeros((H, W, flat.shape[2])) if out is None else out
    for s in simplices:
        d, q = dst[s], src[s]
        x0, y0 = np.floor(d.min(0)).astype(int)
        x1, y1 = np.ceil(d.max(0)).astype(int)
        x0, y0, x1, y1 = max(x0, 0), max(y0, 0), min(x1, W - 1), min(y1, H - 1)
        if x1 < x0 or y1 < y0:
            continue
        yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
        px, py = xx.ravel().astype(np.float64), yy.ravel().astype(np.float64)
        T = np.array([[d[1, 0] - d[0, 0], d[2, 0] - d[0, 0]], [d[1, 1] - d[0, 1], d[2, 1] - d[0, 1]]])
        l1, l2 = np.linalg.solve(T, np.vstack([px - d[0, 0], py - d[0, 1]]))
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        if not inside.any():
            continue
        l0, l1, l2 = l0[inside], l1[inside], l2[inside]
        sx = l0 * q[0, 0] + l1 * q[1, 0] + l2 * q[2, 0]
        sy = l0 * q[0, 1] + l1 * q[1, 1] + l2 * q[2, 1]
        out[py[inside].astype(int), px[inside].astype(int)] = bilinear(flat, sx, sy)
    return out


def warp_and_dissolve(img_a: np.ndarray, img_b: np.ndarray, pts_a: np.ndarray, pts_b: np.ndarray,
                      blend: float, simplices: np.ndarray | None = None):
    """Pre-color-matching morph.

    Returns (dissolved float image, hull mask, averaged landmarks). Outside the
    hull of the averaged landmarks the float image holds img_a unchanged.
    """
    pts_a = np.asarray(pts_a, dtype=np.float64)
    pts_b = np.asarray(pts_b, dtype=np.float64)
    if pts_a.shape != pts_b.shape:
        raise MorphError(f"landmark count mismatch: {len(pts_a)} vs {len(pts_b)}")
    if img_a.shape != img_b.shape:
        raise MorphError("images must have the same shape")
    avg = (1.0 - blend) * pts_a + blend * pts_b
    if simplices is None:
        corners = _corners(img_a.shape)
        src_a, src_b, dst = (np.vstack([p, corners]) for p in (pts_a, pts_b, avg))
        simplices = triangulate(dst)
    else:
        src_a, src_b, dst = pts_a, pts_b, avg
    wa = piecewise_affine(img_a, src_a, dst, simplices)
    wb = piecewise_affine(img_b, src_b, dst, simplices)
    mask = hull_mask(avg, img_a.shape)
    out = img_a.reshape(wa.shape).astype(np.float64)
    out[mask] = (1.0 - blend) * wa[mask] + blend * wb[mask]
    return out.reshape(img_a.shape), mask, avg


def match_histogram(values: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-channel CDF matching of (N, C) uint8 values to (M, C) reference values."""
    out = np.empty_like(values)
    for c in range(values.shape[1]):
        src_vals, src_idx, src_counts = np.unique(values[:, c], return_inverse=True, return_counts=True)
        ref_vals, ref_counts = np.unique(reference[:, c], return_counts=True)
        src_q = np.cumsum(src_counts) / values.shape[0]
        ref_q = np.cumsum(ref_counts) / reference.shape[0]
        mapped = np.interp(src_q, ref_q, ref_vals.astype(np.float64))
        out[:, c] = np.rint(mapped).astype(values.dtype)[src_idx.ravel()]
    return out


def morph_faces(a: PortraitAsset, b: PortraitAsset, cfg: MorphConfig = MorphConfig()) -> np.ndarray:
    """RGBA morph of `a` toward `b`; pixels outside the averaged landmark hull are exactly a's."""
    img_a, img_b = a.image, b.image
    pts_b = np.asarray(b.landmarks, dtype=np.float64)
    if img_b.shape != img_a.shape:
        sy, sx = img_a.shape[0] / img_b.shape[0], img_a.shape[1] / img_b.shape[1]
        img_b = np.asarray(Image.fromarray(img_b).resize((img_a.shape[1], img_a.shape[0]), Image.BILINEAR))
        pts_b = pts_b * [sx, sy]
    dissolved, mask, _ = warp_and_dissolve(img_a, img_b, a.landmarks, pts_b, cfg.blend)
    out = img_a.copy()
    inner = np.clip(np.rint(dissolved[mask]), 0, 255).astype(np.uint8)
    if cfg.histogram_match_to_first:
        ref = img_a[hull_mask(np.asarray(a.landmarks, dtype=np.float64), img_a.shape)]
        inner[:, :3] = match_histogram(inner[:, :3], ref[:, :3])
    out[mask] = inner
    return out
