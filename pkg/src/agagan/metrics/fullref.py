"""Full-reference quality metrics on the 8-bit luma scale.

Every metric takes ``(ref, test)``: RGB (H, W, 3) images are converted to
luma Y = 0.299 R + 0.587 G + 0.114 B, grayscale (H, W) images are used
as-is.  Values are expected on the [0, 255] scale.  PSNR and SRE are not
symmetric: the first argument is the reference.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CAP_DB = 100.0
LUMA = np.array([0.299, 0.587, 0.114])


def to_luma(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[-1] == 3:
        return img @ LUMA
    if img.ndim == 2:
        return img
    raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")


def _pair(ref, test) -> tuple[np.ndarray, np.ndarray]:
    r, t = to_luma(ref), to_luma(test)
    if r.shape != t.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {t.shape}")
    return r, t


def psnr(ref, test) -> float:
    """10 log10(255^2 / MSE); 100 dB when the images are identical."""
    r, t = _pair(ref, test)
    mse = np.mean((r - t) ** 2)
    if mse == 0:
        return CAP_DB
    return float(10.0 * np.log10(255.0**2 / mse))


def sre(ref, test) -> float:
    """Signal to reconstruction error ratio: 10 log10(mean(ref)^2 / MSE), capped at 100 dB."""
    r, t = _pair(ref, test)
    mu = r.mean()
    if mu == 0:
        raise ValueError("SRE undefined for a zero-mean reference")
    mse = np.mean((r - t) ** 2)
    if mse == 0:
        return CAP_DB
    return float(10.0 * np.log10(mu**2 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(ref, test, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03, data_range: float = 255.0) -> float:
    """Single-scale SSIM, Gaussian-weighted statistics, mean over valid window positions."""
    r, t = _pair(ref, test)
    if min(r.shape) < window:
        raise ValueError(f"SSIM needs sides >= {window}, got {r.shape}")
    w = gaussian_window(window, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2

    def filt(a):
        return np.einsum("ijkl,kl->ij", sliding_window_view(a, w.shape), w, optimize=True)

    mu_r, mu_t = filt(r), filt(t)
    var_r = filt(r * r) - mu_r**2
    var_t = filt(t * t) - mu_t**2
    cov = filt(r * t) - mu_r * mu_t
    num = (2 * mu_r * mu_t + c1) * (2 * cov + c2)
    den = (mu_r**2 + mu_t**2 + c1) * (var_r + var_t + c2)
    return float(np.mean(num / den))


def uiq(ref, test, window: int = 8, return_skipped: bool = False):
    """Universal image quality index over sliding ``window`` x ``window`` blocks.

    Windows where both images are constant have a zero denominator; they
    are skipped and, with ``return_skipped``, counted.
    """
    r, t = _pair(ref, test)
    if min(r.shape) < window:
        raise ValueError(f"UIQ needs sides >= {window}, got {r.shape}")
    wr = sliding_window_view(r, (window, window)).reshape(-1, window * window)
    wt = sliding_window_view(t, (window, window)).reshape(-1, window * window)
    n = window * window
    mr, mt = wr.mean(axis=1), wt.mean(axis=1)
    dr, dt = wr - mr[:, None], wt - mt[:, None]
    var_r = (dr * dr).sum(axis=1) / (n - 1)
    var_t = (dt * dt).sum(axis=1) / (n - 1)
    cov = (dr * dt).sum(axis=1) / (n - 1)
    both_flat = (np.ptp(wr, axis=1) == 0) & (np.ptp(wt, axis=1) == 0)
    den = (var_r + var_t) * (mr**2 + mt**2)
    valid = ~both_flat & (den != 0)
    if not valid.any():
        raise ValueError("UIQ undefined: every window is degenerate")
    q = 4.0 * cov[valid] * mr[valid] * mt[valid] / den[valid]
    value = float(q.mean())
    skipped = int((~valid).sum())
    return (value, skipped) if return_skipped else value
