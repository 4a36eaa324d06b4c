"""Image-quality and noise statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, ImageTooSmall


def _array(x) -> np.ndarray:
    data = getattr(x, "data", x)
    return np.asarray(data, dtype=np.float64)


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a, b = _array(a), _array(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def _gaussian_window(size=11, sigma=1.5):
    x = np.arange(size) - size // 2
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, data_range: float = 1.0, win_size: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03.

    Multi-channel ``(C, H, W)`` inputs are averaged over channels. Only
    windows fully inside the image contribute.
    """
    a, b = _array(a), _array(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < win_size:
        raise ImageTooSmall(f"image {a.shape[-2:]} smaller than the {win_size}px window")
    win = _gaussian_window(win_size, sigma)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    r = win_size // 2
    crop = (slice(r, -r or None), slice(r, -r or None))
    scores = []
    for x, y in zip(a, b):
        def filt(z):
            return ndimage.correlate(z, win, mode="reflect")[crop]
        mx, my = filt(x), filt(y)
        sxx = filt(x * x) - mx * mx
        syy = filt(y * y) - my * my
        sxy = filt(x * y) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append((num / den).mean())
    return float(np.mean(scores))


@dataclass(frozen=True)
class NoiseStats:
    """Residual statistics binned by clean signal level.

    Bins without samples have ``present`` False and NaN statistics.
    """

    edges: np.ndarray
    count: np.ndarray
    mean: np.ndarray       # mean clean value per bin
    residual_mean: np.ndarray
    variance: np.ndarray
    present: np.ndarray

    def fit(self, min_count: int = 2) -> tuple[float, float]:
        """Weighted least-squares ``variance = read + shot * mean``.

        Returns ``(lambda_read, lambda_shot)``.
        """
        ok = self.present & (self.count >= min_count)
        x, y, w = self.mean[ok], self.variance[ok], self.count[ok].astype(np.float64)
        if ok.sum() == 1:
            return float(y[0]), 0.0
        design = np.stack([np.ones_like(x), x], axis=1) * np.sqrt(w)[:, None]
        coef, *_ = np.linalg.lstsq(design, y * np.sqrt(w), rcond=None)
        return float(coef[0]), float(coef[1])


def noise_stats(clean, noisy, bins: int = 32, value_range=(0.0, 1.0)) -> NoiseStats:
    c, n = _array(clean), _array(noisy)
    if c.shape != n.shape:
        raise DimensionMismatch(f"shapes differ: {c.shape} vs {n.shape}")
    c = c.ravel()
    resid = n.ravel() - c
    edges = np.linspace(value_range[0], value_range[1], bins + 1)
    idx = np.clip(np.searchsorted(edges, c, side="right") - 1, 0, bins - 1)
    count = np.bincount(idx, minlength=bins)
    present = count > 0
    safe = np.maximum(count, 1)
    mean = np.bincount(idx, c, bins) / safe
    rmean = np.bincount(idx, resid, bins) / safe
    # two-pass variance around the per-bin residual mean
    dev = resid - rmean[idx]
    var = np.bincount(idx, dev * dev, bins) / safe
    nan = np.where(present, 1.0, np.nan)
    return NoiseStats(edges, count, mean * nan, rmean * nan, var * nan, present)
