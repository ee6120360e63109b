"""Raster helpers shared by all modules.

Rasters are numpy uint8 arrays laid out HxW (gray), HxWx3 (RGB) or HxWx4 (RGBA).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def read_png(path: str | Path, mode: str | None = None) -> np.ndarray:
    with Image.open(path) as im:
        if mode is not None:
            im = im.convert(mode)
        return np.asarray(im).copy()


def write_png(path: str | Path, arr: np.ndarray) -> None:
    # Fixed compress level and no metadata chunks keep files byte-identical.
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(arr)).save(path, format="PNG", compress_level=6)


def luminance(img: np.ndarray) -> np.ndarray:
    """BT.601 luma as float64; gray input passes through."""
    img = np.asarray(img)
    if img.ndim == 2:
        return img.astype(np.float64)
    rgb = img[..., :3].astype(np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def luma_u8(rgb: np.ndarray) -> np.ndarray:
    """Integer BT.601 luma, exact on gray pixels."""
    rgb = rgb[..., :3].astype(np.int64)
    return ((299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000).astype(np.uint8)


def rgba_to_rgb(img: np.ndarray, background=(255, 255, 255)) -> np.ndarray:
    if img.ndim == 3 and img.shape[2] == 3:
        return img.copy()
    a = img[..., 3:4].astype(np.int64)
    rgb = img[..., :3].astype(np.int64)
    bg = np.asarray(background, dtype=np.int64)
    out = (rgb * a + bg * (255 - a) + 127) // 255
    return out.astype(np.uint8)


def alpha_over(dst: np.ndarray, src_rgb: np.ndarray, alpha: np.ndarray, x: int, y: int) -> None:
    """Composite src_rgb with 0..255 alpha onto dst (RGB, in place) at (x, y).

    Integer arithmetic; alpha 0 leaves dst untouched, alpha 255 copies src.
    """
    h, w = alpha.shape
    H, W = dst.shape[:2]
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, W), min(y + h, H)
    if x1 <= x0 or y1 <= y0:
        return
    a = alpha[y0 - y:y1 - y, x0 - x:x1 - x].astype(np.int64)[..., None]
    s = src_rgb[y0 - y:y1 - y, x0 - x:x1 - x].astype(np.int64)
    d = dst[y0:y1, x0:x1].astype(np.int64)
    dst[y0:y1, x0:x1] = ((s * a + d * (255 - a) + 127) // 255).astype(np.uint8)
