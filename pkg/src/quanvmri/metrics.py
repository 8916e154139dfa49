"""Image quality metrics: MSE, PSNR, and Gaussian-window SSIM.

Metrics are computed on normalized magnitude images, so the default data
range is 1. PSNR of a perfect reconstruction is reported as the 99 dB
sentinel to keep CSV reports numeric.
"""

from __future__ import annotations

import math

import numpy as np

PSNR_CAP_DB = 99.0


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(prediction: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over all elements."""
    prediction, target = _check_same_shape(prediction, target)
    return float(np.mean((prediction - target) ** 2))


def psnr_from_mse(mse_value: float, data_range: float = 1.0) -> float:
    """10 * log10(data_range^2 / MSE), capped at the 99 dB sentinel."""
    if mse_value < 0:
        raise ValueError("MSE cannot be negative")
    if mse_value == 0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(data_range**2 / mse_value), PSNR_CAP_DB)


def psnr(prediction: np.ndarray, target: np.ndarray, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB."""
    return psnr_from_mse(mse(prediction, target), data_range)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Sampled 2-D Gaussian kernel, normalized to sum 1."""
    half = (size - 1) / 2
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    windows = np.lib.stride_tricks.sliding_window_view(image, kernel.shape)
    return np.tensordot(windows, kernel, axes=([2, 3], [0, 1]))


def ssim(
    prediction: np.ndarray,
    target: np.ndarray,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> float:
    """Mean structural similarity over valid Gaussian windows.

    Standard local-statistics SSIM (11x11 Gaussian window, sigma 1.5,
    K1=0.01, K2=0.03 by default) with population covariances; only windows
    fully inside the image contribute. Result lies in [-1, 1] and equals
    exactly 1.0 for identical images.
    """
    prediction, target = _check_same_shape(prediction, target)
    if prediction.ndim != 2:
        raise ValueError(f"expected 2-D images, got shape {prediction.shape}")
    if min(prediction.shape) < window_size:
        raise ValueError(
            f"image {prediction.shape} smaller than the {window_size}x{window_size} window"
        )

    window = gaussian_window(window_size, sigma)
    mu_x = _filter_valid(prediction, window)
    mu_y = _filter_valid(target, window)
    var_x = _filter_valid(prediction * prediction, window) - mu_x * mu_x
    var_y = _filter_valid(target * target, window) - mu_y * mu_y
    cov = _filter_valid(prediction * target, window) - mu_x * mu_y

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(numerator / denominator))
