"""Image quality, efficiency and uncertainty-calibration metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.ndimage import gaussian_filter

PSNR_CAP = 100.0


def _check_same(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    a, b = _check_same(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _luma(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    return img


def ssim(a, b, sigma: float = 1.5, radius: int = 5,
         k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM on the luminance channel with an 11x11 Gaussian window.

    Border pixels closer than ``radius`` to the edge are excluded.
    """
    a, b = _check_same(a, b)
    x, y = _luma(a), _luma(b)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    filt = lambda im: gaussian_filter(im, sigma, truncate=radius / sigma, mode="reflect")
    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx**2 + my**2 + c1) * (sxx + syy + c2))
    if s.shape[0] > 2 * radius and s.shape[1] > 2 * radius:
        s = s[radius:-radius, radius:-radius]
    return float(s.mean())


def efficiency(psnr_db: float, n_frames: int, base: float = 10.0) -> float:
    """PSNR divided by the logarithm of the frame count."""
    if n_frames < 2:
        raise ValueError("efficiency needs at least two frames")
    return psnr_db / (math.log(n_frames) / math.log(base))


@dataclass
class SparsificationCurve:
    fractions: np.ndarray
    mae: np.ndarray
    oracle_mae: np.ndarray


def _remaining_mae(error: np.ndarray, ranking: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    # ranking lists pixels from first-removed to last-removed
    n = len(error)
    sorted_err = error[ranking]
    tail = np.concatenate([np.cumsum(sorted_err[::-1])[::-1], [0.0]])
    removed = np.floor(fractions * n + 1e-9).astype(int)
    removed = np.minimum(removed, n - 1)
    return tail[removed] / (n - removed)


def sparsification(error, uncertainty, grid_steps: int = 100,
                   max_fraction: float = 0.99) -> SparsificationCurve:
    """Remaining mean absolute error as the most uncertain pixels are removed.

    Ties are broken by flat pixel index (lower index removed first).
    """
    error, uncertainty = _check_same(error, uncertainty)
    e = np.abs(error).ravel()
    u = uncertainty.ravel()
    fractions = np.linspace(0.0, max_fraction, grid_steps)
    by_unc = np.argsort(-u, kind="stable")
    by_err = np.argsort(-e, kind="stable")
    return SparsificationCurve(fractions, _remaining_mae(e, by_unc, fractions),
                               _remaining_mae(e, by_err, fractions))


def ause(curve: SparsificationCurve) -> float:
    """Area between the normalised sparsification and oracle curves."""
    scale = curve.mae[0]
    if scale <= 0:
        return 0.0
    gap = (curve.mae - curve.oracle_mae) / scale
    return float(trapezoid(gap, curve.fractions))
