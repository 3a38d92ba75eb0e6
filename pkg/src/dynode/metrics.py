"""Image-space evaluation metrics: MSE and SSIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class SsimConfig:
    window: int = 7
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 2.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be an odd positive integer")
        if self.sigma <= 0 or self.k1 <= 0 or self.k2 <= 0 or self.data_range <= 0:
            raise ValueError("sigma, k1, k2 and data_range must be positive")


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _filter(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # valid-mode weighted local mean over the last two axes
    patches = sliding_window_view(x, w.shape, axis=(-2, -1))
    return np.einsum("...ij,ij->...", patches, w)


def ssim_map(a, b, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return ssim_map(a[None], b[None], cfg)[0]
    if a.ndim != 3:
        raise ValueError("images must be (H, W) or (C, H, W)")
    if cfg.window > min(a.shape[-2:]):
        raise ValueError(f"window {cfg.window} larger than image {a.shape[-2:]}")
    w = gaussian_window(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    mu_a, mu_b = _filter(a, w), _filter(b, w)
    var_a = _filter(a * a, w) - mu_a**2
    var_b = _filter(b * b, w) - mu_b**2
    cov = _filter(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean SSIM over channels and window positions, in [-1, 1]."""
    return float(np.mean(ssim_map(a, b, cfg)))
