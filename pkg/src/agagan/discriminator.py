"""Attribute-conditioned discriminator.

Image branch: strided conv units 128 -> 64 -> 32.  Attribute branch: dense
embedding reshaped to 3x16x16 and sub-pixel upsampled to 32x32.  The two are
concatenated at 32x32, reduced by two more units to 8x8 and mapped to a
real/fake probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attributes import N_ATTRIBUTES
from .autograd import ConfigurationError, ParamStore, Tensor, as_tensor
from .autograd import functional as F
from .layers import conv, dense, init_conv, init_dense, init_subpixel, subpixel


@dataclass
class DiscConfig:
    base_channels: int = 32
    growth: int = 2
    attr_side: int | None = None
    dense_width: int = 0
    hr_side: int = 128

    def __post_init__(self) -> None:
        if self.hr_side < 8 or self.hr_side % 8:
            raise ConfigurationError(f"hr_side must be a positive multiple of 8, got {self.hr_side}")
        if self.attr_side is None:
            self.attr_side = self.hr_side // 8
        if self.attr_side * 8 != self.hr_side:
            raise ConfigurationError(
                f"attr_side {self.attr_side} must be hr_side/8 so one x2 upsample meets the image branch"
            )

    @property
    def concat_side(self) -> int:
        return self.hr_side // 4

    @property
    def final_side(self) -> int:
        side = self.hr_side
        for _ in range(4):
            side = (side - 1) // 2 + 1
        return side

    def unit_channels(self) -> list[int]:
        return [self.base_channels * self.growth**i for i in range(4)]


@dataclass
class DiscState:
    params: ParamStore
    config: DiscConfig
    seed: int = 0


def build_discriminator(config: DiscConfig, seed: int = 0) -> DiscState:
    rng = np.random.default_rng(seed)
    p = ParamStore()
    chans = config.unit_channels()
    side = config.attr_side
    init_dense(p, rng, "disc.attr.embed", N_ATTRIBUTES, 3 * side * side, init="glorot")
    init_subpixel(p, rng, "disc.attr.up", 3, 3)
    cin = 3
    for u, c in enumerate(chans):
        if u == 2:
            cin += 3
        init_conv(p, rng, f"disc.unit{u}.conv", cin, c)
        init_conv(p, rng, f"disc.unit{u}.down", c, c)
        cin = c
    flat = chans[-1] * config.final_side**2
    if config.dense_width:
        init_dense(p, rng, "disc.hidden", flat, config.dense_width)
        flat = config.dense_width
    init_dense(p, rng, "disc.out", flat, 1, init="glorot")
    return DiscState(p, config, seed)


def attribute_branch_forward(att, state: DiscState) -> Tensor:
    """(N, 38) -> dense -> (N, 3, 16, 16) -> sub-pixel x2 -> (N, 3, 32, 32) at the default size."""
    att = as_tensor(att)
    if att.ndim != 2 or att.shape[1] != N_ATTRIBUTES:
        raise ConfigurationError(f"attributes must be (N, {N_ATTRIBUTES}), got {att.shape}")
    side = state.config.attr_side
    emb = F.reshape(dense(state.params, "disc.attr.embed", att), (att.shape[0], 3, side, side))
    return F.leaky_relu(subpixel(state.params, "disc.attr.up", emb))


def _unit(x: Tensor, state: DiscState, u: int) -> Tensor:
    x = F.leaky_relu(conv(state.params, f"disc.unit{u}.conv", x))
    return F.leaky_relu(conv(state.params, f"disc.unit{u}.down", x, stride=2))


def discriminator_forward(img, att, state: DiscState, trace: list | None = None, logits: bool = False) -> Tensor:
    """Probability (N, 1) that each (image, attributes) pair is real.

    If ``trace`` is given, the spatial shape after every stage is appended.
    ``logits`` returns the pre-sigmoid scores instead.
    """
    img = as_tensor(img)
    side = state.config.hr_side
    if img.ndim != 4 or img.shape[1:] != (3, side, side):
        raise ConfigurationError(f"discriminator expects (N, 3, {side}, {side}), got {img.shape}")
    x = img
    for u in range(2):
        x = _unit(x, state, u)
        if trace is not None:
            trace.append(x.shape[2:])
    a = attribute_branch_forward(att, state)
    if a.shape[0] != x.shape[0]:
        raise ConfigurationError(f"batch mismatch: {x.shape[0]} images, {a.shape[0]} attribute rows")
    x = F.concat_channels(x, a)
    if trace is not None:
        trace.append(("concat", x.shape[2:], a.shape[2:]))
    for u in range(2, 4):
        x = _unit(x, state, u)
        if trace is not None:
            trace.append(x.shape[2:])
    x = F.flatten(x)
    if state.config.dense_width:
        x = F.leaky_relu(dense(state.params, "disc.hidden", x))
    score = dense(state.params, "disc.out", x)
    return score if logits else F.sigmoid(score)
