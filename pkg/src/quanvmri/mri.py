"""MRI physics layer: centered unitary FFTs, Cartesian line masks, zero-filled
reconstruction, sum-of-squares coil combination, and a synthetic multicoil
phantom generator.

The FFT pair is centered (DC at ``H//2, W//2``) and unitary (``1/sqrt(HW)``),
so the inverse transform is simultaneously the adjoint: zero-filled
reconstruction is literally "adjoint of the undersampled transform". Masks
select whole phase-encode lines (rows), constant along readout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_pow2_dims(shape: tuple[int, ...]) -> None:
    h, w = shape[-2], shape[-1]
    if not (_is_pow2(h) and _is_pow2(w)):
        raise ValueError(
            f"image dims must be powers of two, got {h}x{w}; "
            "zero-pad upstream (see pad_center_pow2)"
        )


def fft2c(image: np.ndarray) -> np.ndarray:
    """Centered, unitary 2-D DFT over the last two axes."""
    image = np.asarray(image)
    if image.ndim < 2:
        raise ValueError("expected at least 2 dimensions")
    _check_pow2_dims(image.shape)
    shifted = np.fft.ifftshift(image, axes=(-2, -1))
    k = np.fft.fft2(shifted, norm="ortho")
    return np.fft.fftshift(k, axes=(-2, -1))


def ifft2c(kspace: np.ndarray) -> np.ndarray:
    """Inverse (and adjoint) of :func:`fft2c`."""
    kspace = np.asarray(kspace)
    if kspace.ndim < 2:
        raise ValueError("expected at least 2 dimensions")
    _check_pow2_dims(kspace.shape)
    shifted = np.fft.ifftshift(kspace, axes=(-2, -1))
    img = np.fft.ifft2(shifted, norm="ortho")
    return np.fft.fftshift(img, axes=(-2, -1))


def pad_center_pow2(kspace: np.ndarray) -> np.ndarray:
    """Zero-pad the last two axes up to the next power of two, keeping the
    center sample at ``H//2, W//2`` (left pad = diff // 2)."""
    kspace = np.asarray(kspace)
    h, w = kspace.shape[-2], kspace.shape[-1]
    th = 1 << max(0, (h - 1).bit_length())
    tw = 1 << max(0, (w - 1).bit_length())
    pad = [(0, 0)] * (kspace.ndim - 2)
    pad += [((th - h) // 2, th - h - (th - h) // 2), ((tw - w) // 2, tw - w - (tw - w) // 2)]
    return np.pad(kspace, pad)


@dataclass(frozen=True)
class SamplingMask:
    """Cartesian line mask: one boolean per phase-encode line (row)."""

    lines: np.ndarray
    width: int
    acceleration: float
    center_fraction: float
    seed: int

    @property
    def height(self) -> int:
        return self.lines.size

    @property
    def num_selected(self) -> int:
        return int(self.lines.sum())

    @property
    def achieved_acceleration(self) -> float:
        return self.height / self.num_selected

    def as_array(self) -> np.ndarray:
        """Full (H, W) 0/1 mask, constant along readout."""
        return np.repeat(self.lines[:, None].astype(np.float64), self.width, axis=1)


def make_cartesian_mask(
    height: int,
    width: int,
    acceleration: float,
    center_fraction: float,
    seed: int,
) -> SamplingMask:
    """Random Cartesian line mask with a fully sampled center band.

    The central ``ceil(center_fraction * H)`` lines are always selected; the
    remaining budget up to ``ceil(H / acceleration)`` lines is drawn uniformly
    without replacement. Deterministic per seed.
    """
    if height < 1 or width < 1:
        raise ValueError("mask dims must be positive")
    if acceleration < 1:
        raise ValueError(f"acceleration must be >= 1, got {acceleration}")
    if not 0 < center_fraction < 1:
        raise ValueError(f"center_fraction must be in (0, 1), got {center_fraction}")

    n_total = math.ceil(height / acceleration)
    n_center = math.ceil(center_fraction * height)
    if n_center > n_total:
        raise ValueError(
            f"center band of {n_center} lines exceeds the {n_total}-line budget "
            f"at acceleration {acceleration}"
        )

    lines = np.zeros(height, dtype=bool)
    start = height // 2 - n_center // 2
    lines[start : start + n_center] = True

    rng = np.random.default_rng(seed)
    remaining = np.flatnonzero(~lines)
    chosen = rng.choice(remaining, size=n_total - n_center, replace=False)
    lines[chosen] = True
    return SamplingMask(lines, int(width), float(acceleration), float(center_fraction), int(seed))


def apply_mask(kspace: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Zero out unselected phase-encode lines in every coil."""
    kspace = np.asarray(kspace)
    if kspace.shape[-2] != mask.height or kspace.shape[-1] != mask.width:
        raise ValueError(
            f"k-space dims {kspace.shape[-2:]} do not match mask {mask.height}x{mask.width}"
        )
    return kspace * mask.lines[:, None]


def zero_fill_recon(kspace: np.ndarray) -> np.ndarray:
    """Per-coil inverse transform of (masked) k-space: z = F* f."""
    kspace = np.asarray(kspace)
    if kspace.ndim != 3:
        raise ValueError(f"expected (coils, H, W) k-space, got shape {kspace.shape}")
    return ifft2c(kspace)


def sos_combine(coil_images: np.ndarray) -> np.ndarray:
    """Sum-of-squares coil combination: sqrt(sum_c |x_c|^2) per pixel."""
    coil_images = np.asarray(coil_images)
    if coil_images.ndim != 3 or coil_images.shape[0] < 1:
        raise ValueError(f"expected a non-empty (coils, H, W) stack, got shape {coil_images.shape}")
    return np.sqrt((np.abs(coil_images) ** 2).sum(axis=0))


def normalize(image: np.ndarray) -> tuple[np.ndarray, float]:
    """Divide by the image max so values land in [0, 1]; returns (image, scale)."""
    image = np.asarray(image, dtype=np.float64)
    scale = float(image.max(initial=0.0))
    if not scale > 0:
        raise ValueError("cannot normalize an image with no positive values")
    return image / scale, scale


@dataclass(frozen=True)
class PhantomSpec:
    """Synthetic multicoil slice: random soft-edged ellipses + Gaussian coils."""

    height: int = 64
    width: int = 64
    n_ellipses: int = 6
    coil_count: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.height < 8 or self.width < 8:
            raise ValueError("phantom dims must be at least 8")
        if self.n_ellipses < 1:
            raise ValueError("need at least one ellipse")
        if self.coil_count < 1:
            raise ValueError("need at least one coil")


def coil_sensitivities(height: int, width: int, coil_count: int) -> np.ndarray:
    """Gaussian-bump sensitivities on a ring, normalized to unit SOS per pixel."""
    yy, xx = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    if coil_count == 1:
        return np.ones((1, height, width))
    radius = 0.45 * min(height, width)
    sigma = 0.6 * min(height, width)
    maps = []
    for c in range(coil_count):
        angle = 2 * np.pi * c / coil_count
        cy = height / 2 + radius * np.sin(angle)
        cx = width / 2 + radius * np.cos(angle)
        maps.append(np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2)))
    sens = np.stack(maps)
    return sens / np.sqrt((sens**2).sum(axis=0))


def phantom_generate(spec: PhantomSpec) -> tuple[np.ndarray, np.ndarray]:
    """Generate (ground_truth, fully_sampled_kspace) for one synthetic slice.

    The ground truth is a max-normalized superposition of soft-edged ellipses
    (magnitude in [0, 1]); per-coil k-space is fft2c(sensitivity * image).
    Unit-SOS sensitivities make the ground truth exactly recoverable from the
    fully sampled data. Deterministic per seed.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")

    image = np.zeros((h, w))
    for _ in range(spec.n_ellipses):
        cy = rng.uniform(0.25, 0.75) * h
        cx = rng.uniform(0.25, 0.75) * w
        a = rng.uniform(0.08, 0.32) * h
        b = rng.uniform(0.08, 0.32) * w
        phi = rng.uniform(0, np.pi)
        intensity = rng.uniform(0.3, 1.0)
        yr = (yy - cy) * np.cos(phi) + (xx - cx) * np.sin(phi)
        xr = -(yy - cy) * np.sin(phi) + (xx - cx) * np.cos(phi)
        r = np.sqrt((yr / a) ** 2 + (xr / b) ** 2)
        # ~1.5-pixel smoothstep edge keeps the slice roughly band-limited
        edge = 1.5 / min(a, b)
        t = np.clip((1.0 - r) / edge, 0.0, 1.0)
        image += intensity * t * t * (3.0 - 2.0 * t)

    image, _ = normalize(image)
    sens = coil_sensitivities(h, w, spec.coil_count)
    kspace = fft2c((sens * image).astype(np.complex128))
    return image, kspace
