"""Parameter-store-backed layer helpers shared by the three networks."""

from __future__ import annotations

import numpy as np

from .autograd import ParamStore, Tensor, glorot_uniform, he_uniform
from .autograd import functional as F

_INITS = {"he": he_uniform, "glorot": glorot_uniform}


def init_conv(store: ParamStore, rng: np.random.Generator, name: str, cin: int, cout: int, k: int = 3, init: str = "he") -> None:
    store.add(f"{name}.w", _INITS[init](rng, (cout, cin, k, k)))
    store.add(f"{name}.b", np.zeros(cout))


def init_dense(store: ParamStore, rng: np.random.Generator, name: str, fin: int, fout: int, init: str = "he") -> None:
    store.add(f"{name}.w", _INITS[init](rng, (fout, fin)))
    store.add(f"{name}.b", np.zeros(fout))


def conv(store: ParamStore, name: str, x: Tensor, stride: int = 1) -> Tensor:
    """'Same'-padded convolution using the ``name.w`` / ``name.b`` pair."""
    w = store[f"{name}.w"]
    return F.conv2d(x, w, store[f"{name}.b"], stride=stride, pad=w.shape[2] // 2)


def dense(store: ParamStore, name: str, x: Tensor) -> Tensor:
    return F.dense(x, store[f"{name}.w"], store[f"{name}.b"])


def init_subpixel(store: ParamStore, rng: np.random.Generator, name: str, cin: int, cout: int, r: int = 2) -> None:
    init_conv(store, rng, name, cin, cout * r * r)


def subpixel(store: ParamStore, name: str, x: Tensor, r: int = 2) -> Tensor:
    """Sub-pixel upsample: conv to r^2*C channels, then pixel shuffle."""
    return F.pixel_shuffle(conv(store, name, x), r)
