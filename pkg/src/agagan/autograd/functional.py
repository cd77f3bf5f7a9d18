"""Differentiable primitives on NCHW tensors in the engine dtype."""

from __future__ import annotations

import numpy as np

from . import tensor as _tensor
from .tensor import ConfigurationError, Tensor, as_tensor, make_result

_LEAKY_SLOPE = 0.2


def _open_interval_bounds():
    # smallest normal and largest value below 1 for the active dtype
    fi = np.finfo(_tensor.DTYPE)
    return fi.tiny, _tensor.DTYPE(1.0) - fi.epsneg


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0, dtype=np.float64)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True, dtype=np.float64)
    return g.astype(_tensor.DTYPE, copy=False)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.ndim != b.ndim:
        raise ConfigurationError(f"{op}: rank mismatch {a.shape} vs {b.shape}")
    for i, (sa, sb) in enumerate(zip(a.shape, b.shape)):
        if sa != sb and sb != 1 and sa != 1:
            raise ConfigurationError(f"{op}: axis {i} extents {sa} and {sb} do not broadcast")


# -- elementwise --------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape and b.ndim and a.ndim:
        _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.data + b.data, (a, b), backward)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape and b.ndim and a.ndim:
        _check_broadcast(a, b, "hadamard")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), backward)


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """``add`` or ``hadamard``; an extent of 1 in ``b`` stretches over ``a``."""
    if kind == "add":
        return add(a, b)
    if kind == "hadamard":
        return hadamard(a, b)
    raise ConfigurationError(f"unknown elementwise kind {kind!r}")


def scale(x: Tensor, c: float) -> Tensor:
    c = _tensor.DTYPE(c)
    return make_result(x.data * c, (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    return make_result(x.data + _tensor.DTYPE(c), (x,), lambda g: (g,))


def abs_(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return make_result(np.abs(x.data), (x,), lambda g: (g * sign,))


def square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def log(x: Tensor) -> Tensor:
    return make_result(np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only where the input was inside."""
    inside = (x.data >= lo) & (x.data <= hi)
    out = np.clip(x.data, _tensor.DTYPE(lo), _tensor.DTYPE(hi))
    return make_result(out, (x,), lambda g: (g * inside,))


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise ``sigmoid``, ``tanh``, ``relu`` or ``leaky_relu`` (slope 0.2)."""
    d = x.data
    if kind == "sigmoid":
        # two-branch form avoids exp overflow on either tail
        e = np.exp(-np.abs(d))
        out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(_tensor.DTYPE)
        tiny, one_minus = _open_interval_bounds()
        out = np.clip(out, tiny, one_minus)
        return make_result(out, (x,), lambda g: (g * out * (1.0 - out),))
    if kind == "tanh":
        _, one_minus = _open_interval_bounds()
        out = np.clip(np.tanh(d), -one_minus, one_minus)
        return make_result(out, (x,), lambda g: (g * (1.0 - out * out),))
    if kind == "relu":
        mask = d > 0
        return make_result(d * mask, (x,), lambda g: (g * mask,))
    if kind == "leaky_relu":
        slope = np.where(d > 0, _tensor.DTYPE(1.0), _tensor.DTYPE(_LEAKY_SLOPE))
        return make_result(d * slope, (x,), lambda g: (g * slope,))
    raise ConfigurationError(f"unknown activation {kind!r}")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    return activation(x, "tanh")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def leaky_relu(x: Tensor) -> Tensor:
    return activation(x, "leaky_relu")


# -- reductions ---------------------------------------------------------


def sum_(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=_tensor.DTYPE)
    return make_result(out, (x,), lambda g: (np.broadcast_to(g, x.shape).astype(_tensor.DTYPE),))


def mean(x: Tensor) -> Tensor:
    n = x.size
    out = np.asarray(x.data.mean(dtype=np.float64), dtype=_tensor.DTYPE)

    def backward(g):
        return (np.full(x.shape, g / n, dtype=_tensor.DTYPE),)

    return make_result(out, (x,), backward)


def mean_batch(x: Tensor) -> Tensor:
    """Per-sample mean: (N, ...) -> (N,)."""
    n = x.shape[0]
    per = x.size // n
    out = x.data.reshape(n, -1).mean(axis=1, dtype=np.float64).astype(_tensor.DTYPE)

    def backward(g):
        return (np.broadcast_to((g / per).reshape((n,) + (1,) * (x.ndim - 1)), x.shape).astype(_tensor.DTYPE),)

    return make_result(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean: NxCxHxW -> NxCx1x1."""
    if x.ndim != 4:
        raise ConfigurationError(f"global_avg_pool expects NCHW, got {x.shape}")
    hw = x.shape[2] * x.shape[3]
    out = x.data.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(_tensor.DTYPE)

    def backward(g):
        return (np.broadcast_to(g / hw, x.shape).astype(_tensor.DTYPE),)

    return make_result(out, (x,), backward)


# -- shape ops ----------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 4 or b.ndim != 4:
        raise ConfigurationError(f"concat_channels expects NCHW, got {a.shape} and {b.shape}")
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ConfigurationError(
            f"concat_channels: N/H/W mismatch {a.shape} vs {b.shape}"
        )
    ca = a.shape[1]

    def backward(g):
        return g[:, :ca], g[:, ca:]

    return make_result(np.concatenate([a.data, b.data], axis=1), (a, b), backward)


def concat(tensors) -> Tensor:
    out = tensors[0]
    for t in tensors[1:]:
        out = concat_channels(out, t)
    return out


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    def backward(g):
        full = np.zeros(x.shape, dtype=_tensor.DTYPE)
        full[:, start:stop] = g
        return (full,)

    return make_result(x.data[:, start:stop], (x,), backward)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """(N, C*r*r, H, W) -> (N, C, H*r, W*r); out[c, h*r+dy, w*r+dx] = in[c*r*r+dy*r+dx, h, w]."""
    n, crr, h, w = x.shape
    if crr % (r * r):
        raise ConfigurationError(f"pixel_shuffle: {crr} channels not divisible by r^2={r * r}")
    out = _shuffle(x.data, r)
    return make_result(out, (x,), lambda g: (_unshuffle(g, r),))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    n, c, h, w = x.shape
    if h % r or w % r:
        raise ConfigurationError(f"pixel_unshuffle: spatial {h}x{w} not divisible by {r}")
    return make_result(_unshuffle(x.data, r), (x,), lambda g: (_shuffle(g, r),))


def _shuffle(d: np.ndarray, r: int) -> np.ndarray:
    n, crr, h, w = d.shape
    c = crr // (r * r)
    return d.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)


def _unshuffle(d: np.ndarray, r: int) -> np.ndarray:
    n, c, hr, wr = d.shape
    h, w = hr // r, wr // r
    return d.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)


# -- pooling ------------------------------------------------------------


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pool, stride 2; ties route the gradient to the first row-major max."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigurationError(f"max_pool2 needs even extents, got {h}x{w}")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros(win.shape, dtype=_tensor.DTYPE)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = gw.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return make_result(out, (x,), backward)


# -- linear layers ------------------------------------------------------


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map (N, F) @ (G, F)^T + (G,)."""
    if x.ndim != 2 or weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ConfigurationError(f"dense: input {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ConfigurationError(f"dense: bias {bias.shape} does not match {weight.shape[0]} outputs")
    out = x.data @ weight.data.T + bias.data

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        gb = g.sum(axis=0, dtype=np.float64).astype(_tensor.DTYPE) if bias.requires_grad else None
        return gx, gw, gb

    return make_result(out, (x, weight, bias), backward)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    xt = xp.transpose(1, 0, 2, 3)
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=_tensor.DTYPE)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * kh * kw, n * ho * wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation with explicit zero padding (no kernel flip)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ConfigurationError(f"conv2d expects 4-d input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, cw, kh, kw = weight.shape
    if cw != c:
        raise ConfigurationError(f"conv2d: input has {c} channels but weight expects {cw}")
    if bias.shape != (o,):
        raise ConfigurationError(f"conv2d: bias {bias.shape} does not match {o} output channels")
    if stride < 1 or pad < 0:
        raise ConfigurationError(f"conv2d: invalid stride={stride} pad={pad}")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ConfigurationError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{w}")

    if kh == 1 and kw == 1 and stride == 1 and pad == 0:
        cols = x.data.transpose(1, 0, 2, 3).reshape(c, n * h * w)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
        cols = _im2col(xp, kh, kw, stride, ho, wo)
    w2 = weight.data.reshape(o, -1)
    out = (w2 @ cols).reshape(o, n, ho, wo).transpose(1, 0, 2, 3) + bias.data.reshape(1, o, 1, 1)
    out = np.ascontiguousarray(out)

    def backward(g):
        gt = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (gt @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3), dtype=np.float64).astype(_tensor.DTYPE) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (w2.T @ gt).reshape(c, kh, kw, n, ho, wo)
            gxp = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=_tensor.DTYPE)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
            gx = gxp[:, :, pad : pad + h, pad : pad + w].transpose(1, 0, 2, 3)
            gx = np.ascontiguousarray(gx)
        return gx, gw, gb

    return make_result(out, (x, weight, bias), backward)


# -- regularization -----------------------------------------------------


def dropout(x: Tensor, p: float, mode: str, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: zero with probability ``p``, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "eval" or p == 0.0:
        return x
    if mode != "train":
        raise ConfigurationError(f"unknown dropout mode {mode!r}")
    if rng is None:
        raise ConfigurationError("dropout in train mode needs a seeded generator")
    keep = (rng.random(x.shape) >= p).astype(_tensor.DTYPE) * _tensor.DTYPE(1.0 / (1.0 - p))
    return make_result(x.data * keep, (x,), lambda g: (g * keep,))


__all__ = [
    "Tensor",
    "as_tensor",
    "activation",
    "add",
    "add_scalar",
    "abs_",
    "clamp",
    "concat",
    "concat_channels",
    "conv2d",
    "dense",
    "dropout",
    "elementwise",
    "flatten",
    "global_avg_pool",
    "hadamard",
    "leaky_relu",
    "log",
    "max_pool2",
    "mean",
    "mean_batch",
    "pixel_shuffle",
    "pixel_unshuffle",
    "relu",
    "reshape",
    "scale",
    "sigmoid",
    "slice_channels",
    "square",
    "sum_",
    "tanh",
]
