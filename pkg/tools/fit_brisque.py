"""Fit the desk BRISQUE regressor shipped with the package.

Training pairs come from synthetic faces degraded by Gaussian blur and
additive noise; the regression target is 100 * (1 - SSIM) against the clean
face, so the clean image scores near 0 and heavier damage scores higher.
Requires scikit-learn (``pip install .[fit]``).

    python tools/fit_brisque.py [--out src/agagan/metrics/brisque_desk.brsq]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.svm import SVR

from agagan.data import SynthSpec, render_face
from agagan.metrics.brisque import DEFAULT_MODEL, BrisqueModel, brisque_features
from agagan.metrics.fullref import ssim

BLUR_SIGMAS = (0.0, 0.6, 1.0, 1.5, 2.2, 3.0)
NOISE_SIGMAS = (0.0, 4.0, 10.0)
FIT_SEED = 9001


def degrade_variants(img: np.ndarray, rng: np.random.Generator):
    img = img.astype(np.float64)
    for blur in BLUR_SIGMAS:
        base = ndimage.gaussian_filter(img, sigma=(blur, blur, 0)) if blur else img
        for noise in NOISE_SIGMAS:
            out = base + rng.normal(0, noise, base.shape) if noise else base
            yield np.clip(out, 0, 255)


def build_training_set(count: int, seed: int = FIT_SEED):
    rng = np.random.default_rng(seed)
    spec = SynthSpec(seed=seed, count=count)
    feats, targets = [], []
    for i in range(count):
        clean = render_face(spec, i).image
        for variant in degrade_variants(clean, rng):
            feats.append(brisque_features(variant))
            targets.append(100.0 * (1.0 - ssim(clean, variant)))
    return np.array(feats), np.array(targets)


def fit(features: np.ndarray, targets: np.ndarray, c: float = 100.0, gamma: float = 0.05) -> BrisqueModel:
    fmin, fmax = features.min(axis=0), features.max(axis=0)
    model = BrisqueModel(gamma, 0.0, fmin, fmax, np.zeros((0, features.shape[1])), np.zeros(0))
    scaled = model.scale(features)
    svr = SVR(kernel="rbf", C=c, gamma=gamma, epsilon=0.5).fit(scaled, targets)
    model.support = svr.support_vectors_
    model.coef = svr.dual_coef_[0]
    model.bias = float(svr.intercept_[0])
    return model


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DEFAULT_MODEL)
    ap.add_argument("--count", type=int, default=60)
    args = ap.parse_args()
    x, y = build_training_set(args.count)
    model = fit(x, y)
    model.save(args.out)
    pred = np.array([model.predict(f) for f in x])
    print(f"{len(y)} samples, {model.support.shape[0]} support vectors, train MAE {np.abs(pred - y).mean():.3f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
