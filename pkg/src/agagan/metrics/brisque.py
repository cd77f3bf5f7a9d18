"""BRISQUE natural-scene-statistics features and a pluggable SVR scorer.

Model file layout ("BRSQ1"): an ASCII header of ``key value...`` lines
terminated by a blank line, followed by a little-endian float32 blob of
``n_support * n_features`` support vectors then ``n_support`` dual
coefficients.  Header keys: ``kernel`` (only ``rbf``), ``gamma``, ``bias``,
``n_features``, ``n_support``, ``feature_min``, ``feature_max``, ``blob``
(byte count).  Scores are only comparable between images scored with the
same model file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.special import gamma as gamma_fn

from ..data.resize import bicubic_resize
from .fullref import to_luma

MAGIC = "BRSQ1"
N_FEATURES = 36
MSCN_C = 1.0
DEFAULT_MODEL = Path(__file__).with_name("brisque_desk.brsq")

_GAM = np.arange(0.2, 10.0, 0.001)
_GGD_RATIO = gamma_fn(1 / _GAM) * gamma_fn(3 / _GAM) / gamma_fn(2 / _GAM) ** 2
_AGGD_RATIO = gamma_fn(2 / _GAM) ** 2 / (gamma_fn(1 / _GAM) * gamma_fn(3 / _GAM))


class BrisqueModelError(ValueError):
    pass


def _gauss7() -> np.ndarray:
    ax = np.arange(7) - 3.0
    g = np.exp(-(ax**2) / (2 * (7 / 6) ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def mscn(img, c: float = MSCN_C) -> np.ndarray:
    """Mean-subtracted contrast-normalized coefficients (7x7 Gaussian, sigma 7/6)."""
    y = np.asarray(img, dtype=np.float64)
    w = _gauss7()
    mu = ndimage.correlate(y, w, mode="reflect")
    var = ndimage.correlate(y * y, w, mode="reflect") - mu * mu
    sigma = np.sqrt(np.abs(var))
    return (y - mu) / (sigma + c)


def fit_ggd(x: np.ndarray) -> tuple[float, float]:
    """Moment-matching generalized Gaussian fit -> (shape, variance)."""
    x = x.ravel()
    sigma_sq = float(np.mean(x * x))
    e = float(np.mean(np.abs(x)))
    rho = sigma_sq / e**2 if e > 0 else 0.0
    alpha = float(_GAM[np.argmin(np.abs(rho - _GGD_RATIO))])
    return alpha, sigma_sq


def fit_aggd(x: np.ndarray) -> tuple[float, float, float, float]:
    """Asymmetric generalized Gaussian fit -> (shape, mean, left variance, right variance)."""
    x = x.ravel()
    left, right = x[x < 0], x[x > 0]
    left_std = float(np.sqrt(np.mean(left * left))) if left.size else 0.0
    right_std = float(np.sqrt(np.mean(right * right))) if right.size else 0.0
    gamma_hat = left_std / right_std if right_std > 0 else 1.0
    ms = float(np.mean(x * x))
    r_hat = float(np.mean(np.abs(x))) ** 2 / ms if ms > 0 else 0.0
    r_norm = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2
    alpha = float(_GAM[np.argmin((_AGGD_RATIO - r_norm) ** 2)])
    const = np.sqrt(gamma_fn(1 / alpha) / gamma_fn(3 / alpha))
    mean = (right_std - left_std) * (gamma_fn(2 / alpha) / gamma_fn(1 / alpha)) * const
    return alpha, float(mean), left_std**2, right_std**2


_SHIFTS = ((0, 1), (1, 0), (1, 1), (1, -1))


def _scale_features(y: np.ndarray) -> list[float]:
    m = mscn(y)
    feats = list(fit_ggd(m))
    for shift in _SHIFTS:
        pair = m * np.roll(m, shift=(-shift[0], -shift[1]), axis=(0, 1))
        feats.extend(fit_aggd(pair))
    return feats


def brisque_features(img) -> np.ndarray:
    """36 features: GGD (2) and four AGGD fits (4 each) at full and half scale."""
    y = to_luma(img)
    if min(y.shape) < 32:
        raise ValueError(f"BRISQUE needs sides >= 32, got {y.shape}")
    half = bicubic_resize(y, y.shape[0] // 2, y.shape[1] // 2)
    return np.array(_scale_features(y) + _scale_features(half))


@dataclass
class BrisqueModel:
    gamma: float
    bias: float
    feature_min: np.ndarray
    feature_max: np.ndarray
    support: np.ndarray
    coef: np.ndarray

    def scale(self, features) -> np.ndarray:
        """Map the training min/max of every feature to [-1, 1]."""
        f = np.asarray(features, dtype=np.float64)
        span = self.feature_max - self.feature_min
        span = np.where(span > 0, span, 1.0)
        return 2.0 * (f - self.feature_min) / span - 1.0

    def predict(self, features) -> float:
        x = self.scale(features)
        d2 = np.sum((self.support - x) ** 2, axis=1)
        return float(np.dot(self.coef, np.exp(-self.gamma * d2)) + self.bias)

    def save(self, path) -> None:
        support = np.asarray(self.support, dtype="<f4")
        coef = np.asarray(self.coef, dtype="<f4")
        blob = support.tobytes() + coef.tobytes()
        fmt = lambda arr: " ".join(repr(float(v)) for v in arr)  # noqa: E731
        header = [
            MAGIC,
            "kernel rbf",
            f"gamma {self.gamma!r}",
            f"bias {self.bias!r}",
            f"n_features {support.shape[1]}",
            f"n_support {support.shape[0]}",
            f"feature_min {fmt(self.feature_min)}",
            f"feature_max {fmt(self.feature_max)}",
            f"blob {len(blob)}",
            "",
            "",
        ]
        Path(path).write_bytes("\n".join(header).encode("ascii") + blob)


def load_model(path=None) -> BrisqueModel:
    path = Path(path) if path is not None else DEFAULT_MODEL
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise BrisqueModelError(f"cannot read BRISQUE model {path}: {exc}") from exc
    end = raw.find(b"\n\n")
    if end < 0:
        raise BrisqueModelError(f"{path}: missing header terminator")
    lines = raw[:end].decode("ascii", errors="replace").split("\n")
    if lines[0] != MAGIC:
        raise BrisqueModelError(f"{path}: bad magic {lines[0]!r}")
    fields = {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest
    try:
        if fields["kernel"] != "rbf":
            raise BrisqueModelError(f"{path}: unsupported kernel {fields['kernel']!r}")
        nf, ns = int(fields["n_features"]), int(fields["n_support"])
        fmin = np.array(fields["feature_min"].split(), dtype=np.float64)
        fmax = np.array(fields["feature_max"].split(), dtype=np.float64)
        nblob = int(fields["blob"])
        gamma, bias = float(fields["gamma"]), float(fields["bias"])
    except (KeyError, ValueError) as exc:
        raise BrisqueModelError(f"{path}: malformed header ({exc})") from exc
    blob = raw[end + 2 :]
    if nblob != 4 * (ns * nf + ns) or len(blob) != nblob:
        raise BrisqueModelError(f"{path}: coefficient blob is {len(blob)} bytes, header says {nblob}")
    if fmin.size != nf or fmax.size != nf:
        raise BrisqueModelError(f"{path}: feature range length does not match n_features={nf}")
    data = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    support = data[: ns * nf].reshape(ns, nf)
    coef = data[ns * nf :]
    return BrisqueModel(gamma, bias, fmin, fmax, support, coef)


_cache: dict[str, BrisqueModel] = {}


def brisque_score(features, model_file=None) -> float:
    """Regress a quality score from BRISQUE features; lower means better quality."""
    key = str(model_file) if model_file is not None else str(DEFAULT_MODEL)
    if key not in _cache:
        _cache[key] = load_model(model_file)
    return _cache[key].predict(features)


def brisque(img, model_file=None) -> float:
    return brisque_score(brisque_features(img), model_file)
