"""Value-range conversion, batching and attribute masking."""

from __future__ import annotations

import numpy as np

from ..attributes import N_ATTRIBUTES, NEUTRAL, AttributeVector


def normalize(img) -> np.ndarray:
    """8-bit values -> [-1, 1] float32 via x / 127.5 - 1."""
    return (np.asarray(img, dtype=np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def denormalize(x) -> np.ndarray:
    """[-1, 1] -> uint8, clamped to [0, 255] and rounded half up."""
    v = (np.asarray(x, dtype=np.float64) + 1.0) * 127.5
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def to_nchw(images) -> np.ndarray:
    """Stack uint8 (H, W, 3) images into a normalized (N, 3, H, W) batch."""
    arr = np.stack([np.asarray(im) for im in images])
    return np.ascontiguousarray(normalize(arr).transpose(0, 3, 1, 2))


def to_hwc(batch) -> list[np.ndarray]:
    """Normalized (N, 3, H, W) batch -> list of uint8 (H, W, 3) images."""
    arr = np.asarray(batch)
    return [denormalize(a.transpose(1, 2, 0)) for a in arr]


def mask_attributes(att: AttributeVector, fraction: float, seed) -> AttributeVector:
    """Mark a seeded random subset of floor(fraction * 38) attributes unknown (value 0.5)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"mask fraction must be in [0, 1], got {fraction}")
    k = int(np.floor(fraction * N_ATTRIBUTES + 1e-9))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(N_ATTRIBUTES, size=k, replace=False)
    values = att.values.copy()
    known = att.known_mask.copy()
    values[chosen] = NEUTRAL
    known[chosen] = False
    return AttributeVector(values, known)
