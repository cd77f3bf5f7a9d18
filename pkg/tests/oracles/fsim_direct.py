"""Direct FSIM evaluation used to produce the frozen golden values.

Written independently of ``agagan.metrics.fsim``: frequency grids come from
``np.fft.fftfreq``, gradients from an explicit shifted-sum convolution, and
every intermediate is float64.  Only even image sides are supported, which
is all the golden pairs use.

    python tests/oracles/fsim_direct.py   # rewrites fsim_golden.json
"""

import json
from pathlib import Path

import numpy as np

GOLDEN = Path(__file__).with_name("fsim_golden.json")


def luma(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    return img


def conv_same(img, kernel):
    # true convolution (kernel flipped), zero padding, output cropped to input size
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.zeros((img.shape[0] + 2 * ph, img.shape[1] + 2 * pw))
    padded[ph : ph + img.shape[0], pw : pw + img.shape[1]] = img
    out = np.zeros_like(img)
    flipped = kernel[::-1, ::-1]
    for u in range(kh):
        for v in range(kw):
            out += flipped[u, v] * padded[u : u + img.shape[0], v : v + img.shape[1]]
    return out


def phase_congruency(img, nscale=4, norient=4, min_wl=6, mult=2.0, sigma_onf=0.55, d_theta=1.2, k=2.0, eps=1e-4):
    rows, cols = img.shape
    assert rows % 2 == 0 and cols % 2 == 0
    fy = np.fft.fftfreq(rows)[:, None] * np.ones((1, cols))
    fx = np.ones((rows, 1)) * np.fft.fftfreq(cols)[None, :]
    radius = np.hypot(fx, fy)
    radius[0, 0] = 1.0
    theta = np.arctan2(-fy, fx)
    lowpass = 1.0 / (1.0 + (radius / 0.45) ** 30)
    spec = np.fft.fft2(img)

    gabors = []
    for s in range(nscale):
        wavelength = min_wl * mult**s
        g = np.exp(-(np.log(radius * wavelength) ** 2) / (2 * np.log(sigma_onf) ** 2)) * lowpass
        g[0, 0] = 0.0
        gabors.append(g)

    theta_sigma = np.pi / norient / d_theta
    energy_all = np.zeros_like(img)
    an_all = np.zeros_like(img)
    for o in range(norient):
        angle = o * np.pi / norient
        dtheta = np.abs(np.angle(np.exp(1j * (theta - angle))))
        spread = np.exp(-(dtheta**2) / (2 * theta_sigma**2))
        eo = []
        ifft_filters = []
        for s in range(nscale):
            filt = gabors[s] * spread
            eo.append(np.fft.ifft2(spec * filt))
            ifft_filters.append(np.fft.ifft2(filt).real * np.sqrt(rows * cols))
            if s == 0:
                em_n = float((filt**2).sum())
        sum_e = sum(r.real for r in eo)
        sum_o = sum(r.imag for r in eo)
        sum_an = sum(np.abs(r) for r in eo)
        norm = np.sqrt(sum_e**2 + sum_o**2) + eps
        me, mo = sum_e / norm, sum_o / norm
        energy = np.zeros_like(img)
        for r in eo:
            energy += r.real * me + r.imag * mo - np.abs(r.real * mo - r.imag * me)

        mean_e2n = -np.median(np.abs(eo[0]) ** 2) / np.log(0.5)
        noise_power = mean_e2n / em_n
        an2 = sum(f**2 for f in ifft_filters).sum()
        aiaj = 0.0
        for i in range(nscale):
            for j in range(i + 1, nscale):
                aiaj += (ifft_filters[i] * ifft_filters[j]).sum()
        tau = np.sqrt((2 * noise_power * an2 + 4 * noise_power * aiaj) / 2)
        threshold = (tau * np.sqrt(np.pi / 2) + k * np.sqrt((2 - np.pi / 2) * tau**2)) / 1.7
        energy_all += np.maximum(energy - threshold, 0.0)
        an_all += sum_an
    return energy_all / an_all


def fsim(ref, test, t1=0.85, t2=160.0):
    y1, y2 = luma(ref), luma(test)
    pc1, pc2 = phase_congruency(y1), phase_congruency(y2)
    dx = np.array([[3.0, 0, -3], [10, 0, -10], [3, 0, -3]]) / 16
    g1 = np.hypot(conv_same(y1, dx), conv_same(y1, dx.T))
    g2 = np.hypot(conv_same(y2, dx), conv_same(y2, dx.T))
    s_pc = (2 * pc1 * pc2 + t1) / (pc1**2 + pc2**2 + t1)
    s_g = (2 * g1 * g2 + t2) / (g1**2 + g2**2 + t2)
    pcm = np.maximum(pc1, pc2)
    return float((s_pc * s_g * pcm).sum() / pcm.sum())


# -- fixed pattern pairs ------------------------------------------------------


def _grating(rows, cols):
    y, x = np.mgrid[0:rows, 0:cols]
    return 128 + 90 * np.sin(2 * np.pi * (x / 11.0 + y / 17.0))


def _rings(rows, cols):
    y, x = np.mgrid[0:rows, 0:cols]
    r = np.hypot(y - rows / 2, x - cols / 2)
    return np.where(np.sin(r / 2.5) > 0, 200.0, 40.0)


def _box_blur(img, size=3):
    return conv_same(img, np.full((size, size), 1.0 / size**2))


def pattern_pairs():
    rng = np.random.default_rng(2024)
    g = _grating(64, 64)
    r = _rings(48, 80)
    blocks = np.kron(rng.integers(0, 256, (8, 8)), np.ones((8, 8))).astype(np.float64)
    colour = np.stack([_grating(64, 48), _rings(64, 48), 255 - _grating(64, 48)], axis=-1)
    return {
        "grating_noise": (g, np.clip(g + rng.normal(0, 12, g.shape), 0, 255).round()),
        "rings_blur": (r, _box_blur(r)),
        "blocks_contrast": (blocks, 0.7 * blocks + 30),
        "grating_shift": (g, np.roll(g, 2, axis=1)),
        "colour_noise": (colour, np.clip(colour + rng.normal(0, 8, colour.shape), 0, 255).round()),
    }


def main():
    values = {name: fsim(a, b) for name, (a, b) in pattern_pairs().items()}
    GOLDEN.write_text(json.dumps(values, indent=2, sort_keys=True) + "\n")
    for name, v in values.items():
        print(f"{name:16s} {v:.8f}")


if __name__ == "__main__":
    main()
