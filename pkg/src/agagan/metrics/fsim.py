"""Feature similarity index (FSIM) with log-Gabor phase congruency."""

from __future__ import annotations

import numpy as np
from scipy import ndimage, signal

from .fullref import _pair

N_SCALES = 4
N_ORIENT = 4
MIN_WAVELENGTH = 6
MULT = 2.0
SIGMA_ON_F = 0.55
D_THETA_ON_SIGMA = 1.2
NOISE_K = 2.0
EPSILON = 1e-4
T1 = 0.85
T2 = 160.0

SCHARR_X = np.array([[3, 0, -3], [10, 0, -10], [3, 0, -3]]) / 16.0
SCHARR_Y = SCHARR_X.T


def _freq_grid(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    def axis(n):
        if n % 2:
            return np.arange(-(n - 1) / 2, (n - 1) / 2 + 1) / (n - 1)
        return np.arange(-n / 2, n / 2) / n

    return np.meshgrid(axis(cols), axis(rows))


def _lowpass(rows: int, cols: int, cutoff: float = 0.45, order: int = 15) -> np.ndarray:
    x, y = _freq_grid(rows, cols)
    radius = np.sqrt(x**2 + y**2)
    return np.fft.ifftshift(1.0 / (1.0 + (radius / cutoff) ** (2 * order)))


def phase_congruency(img: np.ndarray) -> np.ndarray:
    """Phase congruency map from a 4-scale, 4-orientation log-Gabor bank."""
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape
    spectrum = np.fft.fft2(img)
    x, y = _freq_grid(rows, cols)
    radius = np.fft.ifftshift(np.sqrt(x**2 + y**2))
    theta = np.fft.ifftshift(np.arctan2(-y, x))
    radius[0, 0] = 1.0
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    lp = _lowpass(rows, cols)

    log_gabor = []
    for s in range(N_SCALES):
        fo = 1.0 / (MIN_WAVELENGTH * MULT**s)
        lg = np.exp(-(np.log(radius / fo) ** 2) / (2 * np.log(SIGMA_ON_F) ** 2)) * lp
        lg[0, 0] = 0.0
        log_gabor.append(lg)

    theta_sigma = np.pi / N_ORIENT / D_THETA_ON_SIGMA
    energy_all = np.zeros((rows, cols))
    an_all = np.zeros((rows, cols))
    for o in range(N_ORIENT):
        angle = o * np.pi / N_ORIENT
        ds = sin_t * np.cos(angle) - cos_t * np.sin(angle)
        dc = cos_t * np.cos(angle) + sin_t * np.sin(angle)
        spread = np.exp(-(np.abs(np.arctan2(ds, dc)) ** 2) / (2 * theta_sigma**2))

        sum_e = np.zeros((rows, cols))
        sum_o = np.zeros((rows, cols))
        sum_an = np.zeros((rows, cols))
        responses = []
        spatial_filters = []
        em_n = 0.0
        for s in range(N_SCALES):
            filt = log_gabor[s] * spread
            spatial_filters.append(np.real(np.fft.ifft2(filt)) * np.sqrt(rows * cols))
            eo = np.fft.ifft2(spectrum * filt)
            responses.append(eo)
            sum_an += np.abs(eo)
            sum_e += eo.real
            sum_o += eo.imag
            if s == 0:
                em_n = np.sum(filt**2)

        x_energy = np.sqrt(sum_e**2 + sum_o**2) + EPSILON
        mean_e, mean_o = sum_e / x_energy, sum_o / x_energy
        energy = np.zeros((rows, cols))
        for eo in responses:
            e, od = eo.real, eo.imag
            energy += e * mean_e + od * mean_o - np.abs(e * mean_o - od * mean_e)

        # noise compensation from the smallest-scale response statistics
        median_e2n = np.median(np.abs(responses[0]) ** 2)
        mean_e2n = -median_e2n / np.log(0.5)
        noise_power = mean_e2n / em_n
        est_sum_an2 = sum(f**2 for f in spatial_filters)
        est_sum_aiaj = np.zeros((rows, cols))
        for i in range(N_SCALES - 1):
            for j in range(i + 1, N_SCALES):
                est_sum_aiaj += spatial_filters[i] * spatial_filters[j]
        noise_energy2 = 2 * noise_power * est_sum_an2.sum() + 4 * noise_power * est_sum_aiaj.sum()
        tau = np.sqrt(noise_energy2 / 2)
        threshold = (tau * np.sqrt(np.pi / 2) + NOISE_K * np.sqrt((2 - np.pi / 2) * tau**2)) / 1.7
        energy_all += np.maximum(energy - threshold, 0.0)
        an_all += sum_an

    with np.errstate(invalid="ignore", divide="ignore"):
        pc = np.where(an_all > 0, energy_all / an_all, 0.0)
    return pc


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    gx = signal.convolve2d(img, SCHARR_X, mode="same")
    gy = signal.convolve2d(img, SCHARR_Y, mode="same")
    return np.sqrt(gx**2 + gy**2)


def _downsample(y: np.ndarray) -> np.ndarray:
    rows, cols = y.shape
    f = max(1, int(np.floor(min(rows, cols) / 256 + 0.5)))
    if f == 1:
        return y
    avg = ndimage.uniform_filter(y, size=f, mode="constant")
    return avg[::f, ::f]


def fsim(ref, test) -> float:
    """FSIM = sum(S_PC * S_G * PC_m) / sum(PC_m), PC_m = max(PC_ref, PC_test)."""
    r, t = _pair(ref, test)
    if min(r.shape) < 32:
        raise ValueError(f"FSIM needs sides >= 32, got {r.shape}")
    r, t = _downsample(r), _downsample(t)
    pc1, pc2 = phase_congruency(r), phase_congruency(t)
    g1, g2 = gradient_magnitude(r), gradient_magnitude(t)
    s_pc = (2 * pc1 * pc2 + T1) / (pc1**2 + pc2**2 + T1)
    s_g = (2 * g1 * g2 + T2) / (g1**2 + g2**2 + T2)
    pcm = np.maximum(pc1, pc2)
    total = pcm.sum()
    if total == 0:
        # no phase-congruent structure anywhere; fall back to gradient similarity
        return float(s_g.mean())
    return float((s_pc * s_g * pcm).sum() / total)
