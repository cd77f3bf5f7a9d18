"""Two-stream attribute-guided attention generator.

Main stream: three conv+ReLU layers and residual-in-residual dense blocks.
Attribute stream: the 38-entry descriptor densely embedded to a 3-channel
image at LR resolution, fused with conv features of the LR image.  Both
streams are upsampled x2 by sub-pixel convolution, refined by a chain of
attribute-guided attention (AGA) modules and then upsampled to the HR grid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .attributes import N_ATTRIBUTES
from .autograd import ConfigurationError, ParamStore, Tensor, as_tensor
from .autograd import functional as F
from .layers import conv, dense, init_conv, init_dense, init_subpixel, subpixel

_DENSE_LAYERS = 4
_DENSE_BLOCKS = 3


@dataclass
class GeneratorConfig:
    scale: int = 8
    main_channels: int = 64
    attr_channels: int = 32
    rrdb_count: int = 4
    rrdb_growth: int = 32
    aga_module_count: int = 3
    residual_scale: float = 0.4
    fuse_mode: str = "concat"
    hr_side: int = 128

    def __post_init__(self) -> None:
        if self.scale not in (4, 8):
            raise ConfigurationError(f"scale must be 4 or 8, got {self.scale}")
        if self.aga_module_count < 1:
            raise ConfigurationError("aga_module_count must be >= 1")
        if not 0.0 <= self.residual_scale <= 1.0:
            raise ConfigurationError(f"residual_scale must be in [0, 1], got {self.residual_scale}")
        if self.fuse_mode not in ("concat", "add"):
            raise ConfigurationError(f"fuse_mode must be 'concat' or 'add', got {self.fuse_mode!r}")
        if self.hr_side % self.scale:
            raise ConfigurationError(f"hr_side {self.hr_side} not divisible by scale {self.scale}")

    @property
    def lr_side(self) -> int:
        return self.hr_side // self.scale

    @property
    def deconv_stages(self) -> int:
        # one x2 sub-pixel step happens before the AGA chain
        return {4: 1, 8: 2}[self.scale]


@dataclass
class GeneratorState:
    params: ParamStore
    config: GeneratorConfig
    seed: int = 0
    stats: dict = field(default_factory=dict)

    @property
    def param_count(self) -> int:
        return self.params.count()


def build_generator(config: GeneratorConfig, seed: int = 0) -> GeneratorState:
    """Allocate and initialize every generator parameter from one seeded stream."""
    rng = np.random.default_rng(seed)
    p = ParamStore()
    mc, ac, g = config.main_channels, config.attr_channels, config.rrdb_growth
    side = config.lr_side

    init_conv(p, rng, "gen.main.conv0", 3, mc)
    init_conv(p, rng, "gen.main.conv1", mc, mc)
    init_conv(p, rng, "gen.main.conv2", mc, mc)
    for r in range(config.rrdb_count):
        for b in range(_DENSE_BLOCKS):
            for layer in range(_DENSE_LAYERS):
                cout = mc if layer == _DENSE_LAYERS - 1 else g
                init_conv(p, rng, f"gen.rrdb{r}.db{b}.conv{layer}", mc + layer * g, cout)

    init_dense(p, rng, "gen.attr.embed", N_ATTRIBUTES, side * side * 3, init="glorot")
    init_conv(p, rng, "gen.attr.lr_conv", 3, ac)
    init_conv(p, rng, "gen.attr.fuse0", 3 + ac, ac)
    init_conv(p, rng, "gen.attr.fuse1", ac, ac)

    init_subpixel(p, rng, "gen.up0.main", mc, mc)
    init_subpixel(p, rng, "gen.up0.attr", ac, ac)

    for i in range(config.aga_module_count):
        init_conv(p, rng, f"gen.aga{i}.main0", mc, mc)
        init_conv(p, rng, f"gen.aga{i}.main1", mc, mc)
        init_conv(p, rng, f"gen.aga{i}.attr", ac, ac)
        init_conv(p, rng, f"gen.aga{i}.att", ac, 1, k=1, init="glorot")
        if config.fuse_mode == "concat":
            init_conv(p, rng, f"gen.aga{i}.fuse", ac + mc, ac, k=1)
        else:
            init_conv(p, rng, f"gen.aga{i}.fuse", mc, ac, k=1)

    for s in range(config.deconv_stages):
        init_subpixel(p, rng, f"gen.deconv{s}.main", mc, mc)
        init_subpixel(p, rng, f"gen.deconv{s}.attr", ac, ac)
        init_conv(p, rng, f"gen.deconv{s}.fuse", mc + ac, mc)
    init_conv(p, rng, "gen.out", mc, 3, init="glorot")
    return GeneratorState(p, config, seed)


def dense_block(x: Tensor, state: GeneratorState, prefix: str) -> Tensor:
    """Densely connected conv stack; returns only the residual branch."""
    p = state.params
    feats = x
    out = None
    for layer in range(_DENSE_LAYERS):
        out = conv(p, f"{prefix}.conv{layer}", feats)
        if layer < _DENSE_LAYERS - 1:
            out = F.leaky_relu(out)
            feats = F.concat_channels(feats, out)
    return out


def rrdb_forward(x: Tensor, state: GeneratorState, idx: int) -> Tensor:
    """input + beta * (three residual dense blocks), each block also residual-scaled by beta."""
    beta = state.config.residual_scale
    h = x
    for b in range(_DENSE_BLOCKS):
        h = h + F.scale(dense_block(h, state, f"gen.rrdb{idx}.db{b}"), beta)
    return x + F.scale(h, beta)


def main_stem_forward(lr: Tensor, state: GeneratorState) -> Tensor:
    p = state.params
    x = F.relu(conv(p, "gen.main.conv0", lr))
    x = F.relu(conv(p, "gen.main.conv1", x))
    x = F.relu(conv(p, "gen.main.conv2", x))
    for r in range(state.config.rrdb_count):
        x = rrdb_forward(x, state, r)
    return x


def attribute_stem_forward(att, lr: Tensor, state: GeneratorState) -> Tensor:
    """Embed the (N, 38) descriptor into image space and fuse it with LR features."""
    att = as_tensor(att)
    n = lr.shape[0]
    if att.shape != (n, N_ATTRIBUTES):
        raise ConfigurationError(f"attributes must be ({n}, {N_ATTRIBUTES}), got {att.shape}")
    p = state.params
    h, w = lr.shape[2], lr.shape[3]
    emb = F.reshape(dense(p, "gen.attr.embed", att), (n, 3, h, w))
    lr_feat = F.relu(conv(p, "gen.attr.lr_conv", lr))
    x = F.relu(conv(p, "gen.attr.fuse0", F.concat_channels(emb, lr_feat)))
    return F.relu(conv(p, "gen.attr.fuse1", x))


def aga_module_forward(sr_main: Tensor, as_stem: Tensor, state: GeneratorState, idx: int):
    """One attribute-guided attention module.

    Returns the refined main features, the updated attribute features and
    the (N, 1, H, W) attention map.
    """
    if sr_main.shape[2:] != as_stem.shape[2:]:
        raise ConfigurationError(f"AGA module {idx}: spatial mismatch {sr_main.shape} vs {as_stem.shape}")
    p = state.params
    pre = f"gen.aga{idx}"
    m = conv(p, f"{pre}.main1", conv(p, f"{pre}.main0", sr_main))
    a = conv(p, f"{pre}.attr", as_stem)
    aga = F.sigmoid(conv(p, f"{pre}.att", a))
    aef = F.hadamard(m, aga)
    sr_next = m + aef
    if state.config.fuse_mode == "concat":
        as_next = conv(p, f"{pre}.fuse", F.concat_channels(a, sr_next))
    else:
        as_next = a + conv(p, f"{pre}.fuse", sr_next)
    return sr_next, as_next, aga


def deconv_upsample(sr_main: Tensor, as_stem: Tensor, state: GeneratorState) -> Tensor:
    p = state.params
    for s in range(state.config.deconv_stages):
        sr_main = F.leaky_relu(subpixel(p, f"gen.deconv{s}.main", sr_main))
        as_stem = F.leaky_relu(subpixel(p, f"gen.deconv{s}.attr", as_stem))
        sr_main = F.leaky_relu(conv(p, f"gen.deconv{s}.fuse", F.concat_channels(sr_main, as_stem)))
    return F.tanh(conv(p, "gen.out", sr_main))


def generator_forward(lr, att, state: GeneratorState, mode: str = "train"):
    """Super-resolve ``lr`` (N, 3, h, w in [-1, 1]) guided by ``att`` (N, 38).

    Returns the (N, 3, H, W) prediction and the list of attention maps, one
    per AGA module.  The generator has no stochastic layers, so ``mode``
    only exists for interface symmetry with the U-Net.
    """
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    lr = as_tensor(lr)
    cfg = state.config
    if lr.ndim != 4 or lr.shape[1] != 3 or lr.shape[2:] != (cfg.lr_side, cfg.lr_side):
        raise ConfigurationError(
            f"x{cfg.scale} generator expects (N, 3, {cfg.lr_side}, {cfg.lr_side}) input, got {lr.shape}"
        )
    p = state.params
    sr_main = main_stem_forward(lr, state)
    as_stem = attribute_stem_forward(att, lr, state)
    sr_main = F.leaky_relu(subpixel(p, "gen.up0.main", sr_main))
    as_stem = F.leaky_relu(subpixel(p, "gen.up0.attr", as_stem))
    maps = []
    for i in range(cfg.aga_module_count):
        sr_main, as_stem, aga = aga_module_forward(sr_main, as_stem, state, i)
        maps.append(aga)
    return deconv_upsample(sr_main, as_stem, state), maps


def config_dict(config: GeneratorConfig) -> dict:
    return asdict(config)
