"""
How the quality metrics react to damage
=======================================

Render a synthetic face, damage it in two ways, and score every version
with the full-reference metrics and the no-reference BRISQUE score.
"""

import numpy as np
from scipy import ndimage

from agagan.data import SynthSpec, bicubic_resize, degrade, render_face
from agagan.metrics import compute_metrics

face = render_face(SynthSpec(seed=7), 0).image.astype(np.float64)
rng = np.random.default_rng(1)

versions = {
    "identical": face,
    "noise sigma 8": np.clip(face + rng.normal(0, 8, face.shape), 0, 255),
    "blur sigma 1.5": ndimage.gaussian_filter(face, (1.5, 1.5, 0)),
    "x4 bicubic": bicubic_resize(degrade(face.astype(np.uint8), 4).astype(np.float64), 128),
}

print(f"{'version':16s} {'psnr':>7s} {'ssim':>6s} {'fsim':>6s} {'sre':>6s} {'uiq':>6s} {'brisque':>8s}")
for name, img in versions.items():
    m = compute_metrics(face, img)
    print(f"{name:16s} {m['psnr']:7.2f} {m['ssim']:6.3f} {m['fsim']:6.3f} {m['sre']:6.2f} {m['uiq']:6.3f} {m['brisque']:8.2f}")

# Identical images hit the caps (100 dB for PSNR and SRE, 1 for the rest);
# lower BRISQUE means a more natural-looking image.
