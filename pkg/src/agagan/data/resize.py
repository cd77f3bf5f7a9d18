"""Separable bicubic resampling (cubic convolution, a = -0.5)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

A = -0.5


def cubic_kernel(x: np.ndarray, a: float = A) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=np.float64))
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def _mirror(idx: np.ndarray, n: int) -> np.ndarray:
    # reflection about the pixel-grid border (edge sample repeated)
    j = np.mod(idx, 2 * n)
    return np.where(j >= n, 2 * n - 1 - j, j)


@lru_cache(maxsize=64)
def resize_matrix(in_size: int, out_size: int) -> np.ndarray:
    """(out_size, in_size) interpolation matrix; each row sums to 1.

    When shrinking, the kernel is stretched by the inverse scale so the
    result is band-limited (the usual antialiased imresize behaviour).
    """
    if in_size < 1 or out_size < 1:
        raise ValueError(f"invalid resize {in_size} -> {out_size}")
    scale = out_size / in_size
    kscale = min(scale, 1.0)
    support = 2.0 / kscale
    centers = (np.arange(out_size) + 0.5) / scale - 0.5
    left = np.floor(centers - support).astype(np.int64)
    taps = int(np.ceil(2 * support)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    w = cubic_kernel((centers[:, None] - idx) * kscale)
    w /= w.sum(axis=1, keepdims=True)
    m = np.zeros((out_size, in_size))
    rows = np.broadcast_to(np.arange(out_size)[:, None], idx.shape)
    np.add.at(m, (rows, _mirror(idx, in_size)), w)
    m.setflags(write=False)
    return m


def bicubic_resize(img: np.ndarray, out_side, out_w: int | None = None) -> np.ndarray:
    """Resize an (H, W) or (H, W, C) image; returns float64 without clipping."""
    img = np.asarray(img, dtype=np.float64)
    out_h = out_side
    out_w = out_side if out_w is None else out_w
    h, w = img.shape[:2]
    if min(h, w) < 4:
        raise ValueError(f"bicubic_resize needs sides >= 4, got {h}x{w}")
    mh = resize_matrix(h, out_h)
    mw = resize_matrix(w, out_w)
    if img.ndim == 2:
        return mh @ img @ mw.T
    return np.einsum("oh,hwc,pw->opc", mh, img, mw, optimize=True)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Round half up and clip to the 8-bit range."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def degrade(hr: np.ndarray, scale: int) -> np.ndarray:
    """HR uint8 image -> quantized bicubic LR image."""
    side = hr.shape[0] // scale
    return to_uint8(bicubic_resize(hr, side))
