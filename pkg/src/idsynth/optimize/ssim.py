from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from ..imageio import luminance


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    window_stddev: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")

    def kernel(self) -> np.ndarray:
        r = self.window // 2
        x = np.arange(-r, r + 1, dtype=np.float64)
        g = np.exp(-(x**2) / (2 * self.window_stddev**2))
        return g / g.sum()


DEFAULT = SsimConfig()


def _blur(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    return correlate1d(correlate1d(img, k, axis=0, mode="reflect"), k, axis=1, mode="reflect")


def ssim_map(a: np.ndarray, b: np.ndarray, cfg: SsimConfig = DEFAULT) -> np.ndarray:
    """Per-pixel SSIM of two luminance images (Gaussian window, reflected borders)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    k = cfg.kernel()
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    mu_a, mu_b = _blur(a, k), _blur(b, k)
    var_a = _blur(a * a, k) - mu_a * mu_a
    var_b = _blur(b * b, k) - mu_b * mu_b
    cov = _blur(a * b, k) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray, cfg: SsimConfig = DEFAULT) -> float:
    """Mean SSIM; color inputs are reduced to BT.601 luminance first.

    Border pixels whose window would leave the image are excluded when the
    image is larger than the window, otherwise the whole map is averaged.
    """
    a = luminance(a) if np.asarray(a).ndim == 3 else np.asarray(a, dtype=np.float64)
    b = luminance(b) if np.asarray(b).ndim == 3 else np.asarray(b, dtype=np.float64)
    m = ssim_map(a, b, cfg)
    pad = cfg.window // 2
    if min(m.shape) > 2 * pad:
        m = m[pad:-pad, pad:-pad]
    return float(np.clip(m.mean(), -1.0, 1.0))
