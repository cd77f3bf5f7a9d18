"""Training objectives: adversarial, pixel and perceptual terms and their totals."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import ConfigurationError, ParamStore, Tensor, as_tensor, no_grad
from .autograd import functional as F
from .layers import conv, init_conv

PROB_EPS = 1e-7
ADV_WEIGHT = 0.003


def _same_shape(p: Tensor, q: Tensor, op: str) -> None:
    if p.shape != q.shape:
        raise ConfigurationError(f"{op}: shape mismatch {p.shape} vs {q.shape}")


def mae_loss(p, q) -> Tensor:
    p, q = as_tensor(p), as_tensor(q)
    _same_shape(p, q, "mae_loss")
    return F.mean(F.abs_(p - q))


def mse_loss(p, q) -> Tensor:
    p, q = as_tensor(p), as_tensor(q)
    _same_shape(p, q, "mse_loss")
    return F.mean(F.square(p - q))


# -- perceptual ---------------------------------------------------------


@dataclass
class PerceptualExtractor:
    """Frozen conv pyramid standing in for a pretrained feature network.

    Stage k is a 3x3 conv (stride 2 for k > 0) with LeakyReLU; features are
    tapped after every stage.  Weights are He-uniform from ``seed`` and never
    receive gradients.
    """

    widths: tuple[int, ...] = (8, 16, 32, 32)
    seed: int = 1234
    params: ParamStore = field(init=False, repr=False)

    def __post_init__(self) -> None:
        rng = np.random.default_rng(self.seed)
        self.params = ParamStore()
        cin = 3
        for k, c in enumerate(self.widths):
            init_conv(self.params, rng, f"percep.stage{k}", cin, c)
            cin = c
        self.params.set_trainable(False)

    @classmethod
    def from_store(cls, store: ParamStore) -> "PerceptualExtractor":
        """Use externally supplied weights (same naming scheme) instead of the seeded ones."""
        n = len([k for k in store if k.endswith(".w")])
        widths = tuple(store[f"percep.stage{k}.w"].shape[0] for k in range(n))
        ext = cls(widths=widths)
        for name, t in store.items():
            ext.params[name].data[...] = t.data
        return ext

    def features(self, x: Tensor) -> list[Tensor]:
        taps = []
        for k in range(len(self.widths)):
            x = F.leaky_relu(conv(self.params, f"percep.stage{k}", x, stride=1 if k == 0 else 2))
            taps.append(x)
        return taps


def perceptual_loss(hr, sr, extractor: PerceptualExtractor) -> Tensor:
    """Sum over taps of the mean squared feature difference."""
    hr, sr = as_tensor(hr), as_tensor(sr)
    _same_shape(hr, sr, "perceptual_loss")
    if not hr.requires_grad:
        with no_grad():
            f_hr = [t.detach() for t in extractor.features(hr)]
    else:
        f_hr = extractor.features(hr)
    f_sr = extractor.features(sr)
    total = None
    for a, b in zip(f_hr, f_sr):
        term = F.mean(F.square(a - b))
        total = term if total is None else total + term
    return total


# -- adversarial --------------------------------------------------------


@dataclass
class ClampCounter:
    """Counts probabilities that had to be pulled into [eps, 1 - eps]."""

    count: int = 0

    def guard(self, d: Tensor) -> Tensor:
        lo, hi = PROB_EPS, 1.0 - PROB_EPS
        self.count += int(np.count_nonzero((d.data < lo) | (d.data > hi)))
        return F.clamp(d, lo, hi)


_default_counter = ClampCounter()


def d_loss_terms(d_hr, d_sr, smooth: float = 0.9, counter: ClampCounter | None = None) -> tuple[Tensor, Tensor]:
    """Real and fake terms of the discriminator loss, each a batch mean."""
    counter = counter or _default_counter
    d_hr, d_sr = counter.guard(as_tensor(d_hr)), counter.guard(as_tensor(d_sr))
    real = F.scale(F.mean(F.log(d_hr)), -smooth)
    fake = F.scale(F.mean(F.log(1.0 - d_sr)), -1.0)
    return real, fake


def d_loss(d_hr, d_sr, smooth: float = 0.9, counter: ClampCounter | None = None) -> Tensor:
    """mean(-smooth * log D(HR)) + mean(-log(1 - D(SR))); only the real target is smoothed."""
    real, fake = d_loss_terms(d_hr, d_sr, smooth, counter)
    return real + fake


def g_adv_loss(d_sr, non_saturating: bool = False, counter: ClampCounter | None = None) -> Tensor:
    """mean(log(1 - D(SR))) to be minimized; ``non_saturating`` swaps in mean(-log D(SR))."""
    counter = counter or _default_counter
    d_sr = counter.guard(as_tensor(d_sr))
    if non_saturating:
        return F.scale(F.mean(F.log(d_sr)), -1.0)
    return F.mean(F.log(1.0 - d_sr))


def total_generator_loss(
    hr,
    sr,
    d_sr,
    extractor: PerceptualExtractor,
    non_saturating: bool = False,
    parts: dict | None = None,
) -> Tensor:
    """0.003 * adversarial + perceptual + MAE.

    When ``parts`` is given it receives the three component values as floats.
    """
    adv = g_adv_loss(d_sr, non_saturating)
    percep = perceptual_loss(hr, sr, extractor)
    mae = mae_loss(hr, sr)
    total = F.scale(adv, ADV_WEIGHT) + percep + mae
    if parts is not None:
        parts.update(adv=adv.item(), percep=percep.item(), mae=mae.item())
    return total


def unet_loss(hr, sr_u, extractor: PerceptualExtractor, parts: dict | None = None) -> Tensor:
    percep = perceptual_loss(hr, sr_u, extractor)
    mse = mse_loss(hr, sr_u)
    if parts is not None:
        parts.update(percep=percep.item(), mse=mse.item())
    return percep + mse
