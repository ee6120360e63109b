"""Baseline privacy transforms: zero-masking of PII regions and input-level Gaussian noise."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

MODES = ("masking", "pixeldp")


class PrivacyError(ValueError):
    pass


@dataclass(frozen=True)
class PixelDPConfig:
    epsilon: float = 1.0
    delta: float = 0.05
    norm_order: int = 2
    sensitivity: float = 1.0
    L: float = 0.1
    clamp: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise PrivacyError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise PrivacyError("delta must lie in (0, 1)")
        if not self.L > 0:
            raise PrivacyError("L must be positive")
        if self.sensitivity < 0:
            raise PrivacyError("sensitivity must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def pixeldp_sigma(cfg: PixelDPConfig) -> float:
    """Gaussian-mechanism noise scale sqrt(2 ln(1.25/delta)) * sensitivity * L / epsilon."""
    return math.sqrt(2.0 * math.log(1.25 / cfg.delta)) * cfg.sensitivity * cfg.L / cfg.epsilon


def _check_regions(regions, shape) -> list[tuple[int, int, int, int]]:
    H, W = shape[:2]
    out = []
    for r in regions:
        x, y, w, h = (int(v) for v in r)
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > W or y + h > H:
            raise PrivacyError(f"region {r} out of bounds for {W}x{H} image")
        out.append((x, y, w, h))
    return out


def mask_regions(img: np.ndarray, regions) -> np.ndarray:
    regions = _check_regions(regions, img.shape)
    out = img.copy()
    for x, y, w, h in regions:
        out[y:y + h, x:x + w] = 0
    return out


def pixeldp_noise(img: np.ndarray, cfg: PixelDPConfig, rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma^2) per pixel and channel in [0, 1] units; returns the same dtype as img."""
    sigma = pixeldp_sigma(cfg)
    integer = np.issubdtype(img.dtype, np.integer)
    x = img.astype(np.float64) / 255.0 if integer else img.astype(np.float64)
    x = x + rng.normal(0.0, sigma, x.shape)
    if cfg.clamp:
        x = np.clip(x, 0.0, 1.0)
    if integer:
        return np.clip(np.rint(x * 255.0), 0, 255).astype(img.dtype)
    return x


def apply_privacy(img: np.ndarray, mode: str, regions=(), cfg: PixelDPConfig | None = None,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """`masking` zeroes the given regions; `pixeldp` perturbs the whole image and ignores regions.

    Integer images are normalized to [0, 1] and back; float images are taken as already normalized.
    """
    if mode == "masking":
        if regions is None or len(regions) == 0:
            raise PrivacyError("masking needs at least one region")
        return mask_regions(img, regions)
    if mode == "pixeldp":
        cfg = cfg or PixelDPConfig()
        if rng is None:
            raise PrivacyError("pixeldp needs an explicit rng")
        return pixeldp_noise(img, cfg, rng)
    raise PrivacyError(f"unknown privacy mode {mode!r}")
