"""Dual-attention U-Net refiner.

Input is the generator prediction concatenated with a bicubic upsampling of
the LR image.  Encoder levels are conv pairs followed by squeeze-and-excitation,
max pooling and dropout.  Decoder levels apply dual (channel + spatial)
attention to the incoming features, upsample them by sub-pixel convolution
and merge the same-level skip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import ConfigurationError, ParamStore, Tensor, as_tensor
from .autograd import functional as F
from .layers import conv, dense, init_conv, init_dense, init_subpixel, subpixel


_IMAGE_CHANNELS = 3
# tanh(gain * x) stays within about 38 dB PSNR of x over face intensities
PASSTHROUGH_GAIN = 1.2


@dataclass
class UNetConfig:
    depth: int = 4
    base_channels: int = 32
    dropout: float = 0.2
    se_reduction: int = 8
    hr_side: int = 128
    passthrough_init: bool = True

    def __post_init__(self) -> None:
        if self.depth < 1 or self.hr_side % (2**self.depth):
            raise ConfigurationError(f"hr_side {self.hr_side} not divisible by 2^depth (depth={self.depth})")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        for c in self.level_channels():
            if c % self.se_reduction:
                raise ConfigurationError(f"{c} channels not divisible by se_reduction {self.se_reduction}")
        if self.passthrough_init and self.base_channels < 2 * _IMAGE_CHANNELS:
            raise ConfigurationError(
                f"passthrough_init needs base_channels >= {2 * _IMAGE_CHANNELS}, got {self.base_channels}"
            )

    def level_channels(self) -> list[int]:
        return [self.base_channels * 2**level for level in range(self.depth + 1)]


@dataclass
class UNetState:
    params: ParamStore
    config: UNetConfig
    seed: int = 0


def init_se(p: ParamStore, rng: np.random.Generator, name: str, c: int, reduction: int) -> None:
    init_dense(p, rng, f"{name}.squeeze", c, c // reduction)
    init_dense(p, rng, f"{name}.excite", c // reduction, c, init="glorot")


def init_dual_attention(p: ParamStore, rng: np.random.Generator, name: str, c: int, reduction: int) -> None:
    init_se(p, rng, f"{name}.se", c, reduction)
    init_conv(p, rng, f"{name}.spatial", c, 1, k=1, init="glorot")


def build_unet(config: UNetConfig, seed: int = 0) -> UNetState:
    rng = np.random.default_rng(seed)
    p = ParamStore()
    chans = config.level_channels()
    r = config.se_reduction
    cin = 6
    for level in range(config.depth):
        c = chans[level]
        init_conv(p, rng, f"unet.enc{level}.conv0", cin, c)
        init_conv(p, rng, f"unet.enc{level}.conv1", c, c)
        init_se(p, rng, f"unet.enc{level}.se", c, r)
        cin = c
    init_conv(p, rng, "unet.mid.conv0", cin, chans[-1])
    init_conv(p, rng, "unet.mid.conv1", chans[-1], chans[-1])
    cin = chans[-1]
    for level in reversed(range(config.depth)):
        c = chans[level]
        init_dual_attention(p, rng, f"unet.dec{level}.attn", cin, r)
        init_subpixel(p, rng, f"unet.dec{level}.up", cin, c)
        init_conv(p, rng, f"unet.dec{level}.conv0", 2 * c, c)
        init_conv(p, rng, f"unet.dec{level}.conv1", c, c)
        cin = c
    init_conv(p, rng, "unet.out", cin, 3, k=1, init="glorot")
    if config.passthrough_init:
        _init_passthrough(p, chans[0])
    return UNetState(p, config, seed)


def _route(w: np.ndarray, rows: range, sources, weights) -> None:
    # rows of a 3x3 conv that copy single input channels through the centre tap
    w[rows.start : rows.stop] = 0.0
    for row, src, val in zip(rows, sources, weights):
        w[row, src, 1, 1] = val


def _init_passthrough(p: ParamStore, c: int) -> None:
    """Start the refiner as tanh(gain * sr_aga).

    Channels 0-2 of the top level carry +sr_aga and channels 3-5 carry
    -sr_aga through both encoder convs, the skip and both decoder convs.
    LeakyReLU is positively homogeneous, so the difference of the two
    copies stays linear in sr_aga.  Their SE gates are pinned at 0.5 (zero
    excitation weights) and undone by a factor 2 where the skip is merged.
    The head reads only these channels, so every other path starts with
    zero contribution and is grown by training.
    """
    k = 2 * _IMAGE_CHANNELS
    rows = range(k)
    colour = [j % _IMAGE_CHANNELS for j in rows]
    sign = [1.0 if j < _IMAGE_CHANNELS else -1.0 for j in rows]
    _route(p["unet.enc0.conv0.w"].data, rows, colour, sign)
    _route(p["unet.enc0.conv1.w"].data, rows, rows, [1.0] * k)
    p["unet.enc0.se.excite.w"].data[:k] = 0.0
    p["unet.enc0.se.excite.b"].data[:k] = 0.0
    _route(p["unet.dec0.conv0.w"].data, rows, [c + j for j in rows], [2.0] * k)
    _route(p["unet.dec0.conv1.w"].data, rows, rows, [1.0] * k)
    # four LeakyReLUs map x - (-x) to (1 + 0.2**4) x
    g = PASSTHROUGH_GAIN / (1.0 + 0.2**4)
    out = p["unet.out.w"].data
    out[...] = 0.0
    for ch in range(_IMAGE_CHANNELS):
        out[ch, ch] = g
        out[ch, ch + _IMAGE_CHANNELS] = -g


def se_scales(x: Tensor, p: ParamStore, name: str) -> Tensor:
    """Per-channel excitation weights in (0, 1), shaped (N, C, 1, 1)."""
    n, c = x.shape[:2]
    s = F.reshape(F.global_avg_pool(x), (n, c))
    s = F.relu(dense(p, f"{name}.squeeze", s))
    s = F.sigmoid(dense(p, f"{name}.excite", s))
    return F.reshape(s, (n, c, 1, 1))


def se_block_forward(x: Tensor, p: ParamStore, name: str) -> Tensor:
    return F.hadamard(x, se_scales(x, p, name))


def spatial_map(x: Tensor, p: ParamStore, name: str) -> Tensor:
    return F.sigmoid(conv(p, f"{name}.spatial", x))


def dual_attention_forward(x: Tensor, p: ParamStore, name: str) -> Tensor:
    """(X_c + 1) * X_se with X_se the SE-rescaled input and X_c the broadcast spatial map."""
    x_se = se_block_forward(x, p, f"{name}.se")
    s = spatial_map(x, p, name)
    return F.hadamard(x_se, F.add_scalar(s, 1.0))


def unet_forward(
    sr_aga,
    lr_bicubic,
    state: UNetState,
    mode: str = "train",
    rng: np.random.Generator | None = None,
    trace: list | None = None,
) -> Tensor:
    sr_aga, lr_bicubic = as_tensor(sr_aga), as_tensor(lr_bicubic)
    side = state.config.hr_side
    for name, t in (("sr_aga", sr_aga), ("lr_bicubic", lr_bicubic)):
        if t.ndim != 4 or t.shape[1:] != (3, side, side):
            raise ConfigurationError(f"U-Net {name} must be (N, 3, {side}, {side}), got {t.shape}")
    p = state.params
    cfg = state.config
    x = F.concat_channels(sr_aga, lr_bicubic)
    skips = []
    for level in range(cfg.depth):
        x = F.leaky_relu(conv(p, f"unet.enc{level}.conv0", x))
        x = F.leaky_relu(conv(p, f"unet.enc{level}.conv1", x))
        x = se_block_forward(x, p, f"unet.enc{level}.se")
        skips.append(x)
        x = F.max_pool2(x)
        x = F.dropout(x, cfg.dropout, mode, rng)
    x = F.leaky_relu(conv(p, "unet.mid.conv0", x))
    x = F.leaky_relu(conv(p, "unet.mid.conv1", x))
    for level in reversed(range(cfg.depth)):
        x = dual_attention_forward(x, p, f"unet.dec{level}.attn")
        x = F.leaky_relu(subpixel(p, f"unet.dec{level}.up", x))
        skip = skips[level]
        if x.shape[2:] != skip.shape[2:]:
            raise ConfigurationError(f"decoder level {level}: {x.shape} cannot join skip {skip.shape}")
        if trace is not None:
            trace.append((level, x.shape[2:], skip.shape[2:]))
        x = F.concat_channels(x, skip)
        x = F.leaky_relu(conv(p, f"unet.dec{level}.conv0", x))
        x = F.leaky_relu(conv(p, f"unet.dec{level}.conv1", x))
    return F.tanh(conv(p, "unet.out", x))
