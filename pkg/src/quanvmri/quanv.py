"""Parameter-free quantum convolution: 2x2 patches, stride 2, circuit per patch.

Pixel-to-qubit assignment is row-major within each patch (top-left -> qubit 0,
top-right -> 1, bottom-left -> 2, bottom-right -> 3) and patches are scanned
row-major. A trailing odd row/column is dropped, so the feature map is always
floor(H/2) x floor(W/2). The layer has no trainable parameters and gradients
never flow into it.
"""

from __future__ import annotations

import numpy as np

from . import qsim
from .qsim import CircuitConfig


def encode_patch(pixels: np.ndarray) -> np.ndarray:
    """Angle-encode 4 pixel values: qubit q gets RY(p_q) and RZ(p_q^2).

    Returns the (4, 2) array of (RY, RZ) angle pairs.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1)
    if pixels.shape != (4,):
        raise ValueError(f"expected 4 pixel values, got {pixels.size}")
    if not np.all(np.isfinite(pixels)):
        raise ValueError("pixel values must be finite")
    return np.stack([pixels, pixels * pixels], axis=1)


def _extract_patches(image: np.ndarray) -> tuple[np.ndarray, int, int]:
    h, w = image.shape[0] // 2, image.shape[1] // 2
    blocks = image[: 2 * h, : 2 * w].reshape(h, 2, w, 2)
    patches = blocks.transpose(0, 2, 1, 3).reshape(h * w, 4)
    return patches, h, w


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {image.shape}")
    if image.shape[0] < 2 or image.shape[1] < 2:
        raise ValueError(f"image must be at least 2x2, got {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image must contain only finite values")
    return image


def quanvolve(image: np.ndarray, config: CircuitConfig | None = None) -> np.ndarray:
    """Quantum-convolve an image into a half-resolution feature map.

    Returns shape (floor(H/2), floor(W/2)) for ``mean-z`` readout and
    (4, floor(H/2), floor(W/2)) for ``per-qubit-z``. All values lie in
    [-1, 1] (Pauli-Z range).
    """
    if config is None:
        config = CircuitConfig()
    image = _check_image(image)
    patches, h, w = _extract_patches(image)
    angles = np.stack([patches, patches * patches], axis=2)
    out = qsim.run_patch_batch(angles, config)
    if config.readout == "mean-z":
        return out.reshape(h, w)
    return out.T.reshape(4, h, w)


def quanvolve_cached(
    image: np.ndarray,
    config: CircuitConfig | None = None,
    quantization_levels: int = 256,
) -> np.ndarray:
    """Quanvolve with pixel quantization and per-patch memoization.

    Pixels are snapped to ``quantization_levels`` uniform levels in [0, 1];
    the circuit runs once per distinct quantized patch. The result equals
    ``quanvolve`` of the quantized image exactly.
    """
    if config is None:
        config = CircuitConfig()
    if not isinstance(quantization_levels, (int, np.integer)) or quantization_levels < 2:
        raise ValueError(f"quantization_levels must be an integer >= 2, got {quantization_levels!r}")
    image = _check_image(image)
    steps = quantization_levels - 1
    quantized = np.round(np.clip(image, 0.0, 1.0) * steps) / steps
    patches, h, w = _extract_patches(quantized)
    unique, inverse = np.unique(patches, axis=0, return_inverse=True)
    angles = np.stack([unique, unique * unique], axis=2)
    out = qsim.run_patch_batch(angles, config)
    if config.readout == "mean-z":
        return out[inverse].reshape(h, w)
    return out[inverse].T.reshape(4, h, w)
