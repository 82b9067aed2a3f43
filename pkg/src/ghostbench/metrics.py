"""Reconstruction quality metrics: SNR, MSE/PSNR, double-slit resolvability."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .optics import ObjectMask, SlitGeometry, grid_coords

# Valley-to-peak ratio below which a double slit counts as resolved; near the
# classical two-point criterion for sinc^2-like profiles.
RESOLVED_THRESHOLD = 0.8


@dataclass(frozen=True)
class ReconImage:
    """Shared reconstruction output: grid values plus provenance tag and digest."""

    values: np.ndarray
    provenance: str
    params_digest: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigError(f"reconstruction must be square 2-D, got {values.shape}")
        if not np.isfinite(values).all():
            raise ConfigError("reconstruction contains non-finite values")
        arr = values.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


def image_values(img) -> np.ndarray:
    """Accept a bare array or anything carrying a ``.values`` grid."""
    values = getattr(img, "values", img)
    return np.asarray(values, dtype=float)


def minmax_normalize(img) -> np.ndarray:
    """Rescale to [0, 1]; a constant image maps to all zeros."""
    values = image_values(img)
    lo = values.min()
    span = values.max() - lo
    if span <= 0:
        return np.zeros_like(values)
    return (values - lo) / span


def recon_snr(img, truth: ObjectMask) -> float:
    """Background-normalized contrast: (mean on support - mean off) / std off.

    Support is truth > 0.5.  Affine-invariant in the image.  A zero-variance
    background yields the +inf sentinel.
    """
    values = image_values(img)
    t = truth.values
    if values.shape != t.shape:
        raise ConfigError("image and truth grids differ")
    support = t > 0.5
    background = ~support
    if not support.any():
        raise ConfigError("truth mask has empty support above 0.5")
    if not background.any():
        raise ConfigError("truth mask has no background at or below 0.5")
    bg = values[background]
    bg_std = float(bg.std())
    signal = float(values[support].mean() - bg.mean())
    if bg_std == 0.0:
        return math.inf
    return signal / bg_std


def mse(img, truth: ObjectMask) -> float:
    """Mean squared difference; callers normalize the image to [0, 1] first."""
    values = image_values(img)
    if values.shape != truth.values.shape:
        raise ConfigError("image and truth grids differ")
    return float(np.mean((values - truth.values) ** 2))


def psnr(img, truth: ObjectMask) -> float:
    err = mse(img, truth)
    if err == 0.0:
        return math.inf
    return -10.0 * math.log10(err)


def slit_dip(img, geometry: SlitGeometry, pitch: float,
             resolved_threshold: float = RESOLVED_THRESHOLD) -> tuple[float, bool]:
    """Valley-to-peak ratio of the row-averaged profile across the slit band.

    dip_ratio = profile at the midpoint between the slit centers divided by
    the mean of the two per-slit peaks (each searched within half a separation
    of its slit center); resolved iff dip_ratio < resolved_threshold.
    """
    values = image_values(img)
    if values.ndim != 2:
        raise ConfigError("slit_dip expects a 2-D image")
    n = values.shape[0]
    coords = grid_coords(n, pitch)
    tol = 1e-9 * pitch

    cx, cy = geometry.center
    band = np.abs(coords - cy) <= geometry.height / 2.0 + tol
    if not band.any():
        raise ConfigError("slit band lies outside the image grid")
    profile = values[band, :].mean(axis=0)

    span = profile.max() - profile.min()
    if span <= 1e-12 * max(1.0, abs(profile.max())):
        raise ConfigError("flat profile: peaks not locatable")

    half = geometry.separation / 2.0
    peaks = []
    for center_x in geometry.slit_centers_x:
        window = np.abs(coords - center_x) <= half + tol
        if not window.any():
            raise ConfigError("slit peak window lies outside the image grid")
        peaks.append(float(profile[window].max()))
    peak = 0.5 * (peaks[0] + peaks[1])
    if peak <= 0:
        raise ConfigError("non-positive peaks: peaks not locatable")

    mid_index = int(np.argmin(np.abs(coords - cx)))
    dip_ratio = float(profile[mid_index]) / peak
    return dip_ratio, dip_ratio < resolved_threshold
