"""Image fidelity metrics: PSNR (capped) and Gaussian-windowed SSIM."""

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidParameterError

PSNR_CAP_DB = 100.0
PSNR_CAP_MSE = 1e-10

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidParameterError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) for unit-range images, capped at 100 dB."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < PSNR_CAP_MSE:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window() -> np.ndarray:
    offsets = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2.0
    w = np.exp(-(offsets**2) / (2.0 * SSIM_SIGMA**2))
    return w / w.sum()


def _windowed(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Separable correlation; cropping the margin leaves exactly the windows
    # that fit fully inside the image.
    half = SSIM_WINDOW // 2
    out = correlate1d(x, w, axis=0, mode="constant")
    out = correlate1d(out, w, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity, 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03, unit dynamic range, averaged over channels."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise InvalidParameterError(f"images must be at least {SSIM_WINDOW} pixels per side")
    w = _gaussian_window()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    channel_means = []
    for c in range(a.shape[2]):
        xa = a[:, :, c]
        xb = b[:, :, c]
        mu_a = _windowed(xa, w)
        mu_b = _windowed(xb, w)
        var_a = _windowed(xa * xa, w) - mu_a * mu_a
        var_b = _windowed(xb * xb, w) - mu_b * mu_b
        cov_ab = _windowed(xa * xb, w) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov_ab + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        channel_means.append(float(np.mean(num / den)))
    return float(np.mean(channel_means))
