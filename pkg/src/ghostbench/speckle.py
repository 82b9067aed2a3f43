"""Pseudo-thermal speckle synthesis with a prescribed transverse coherence length.

A frame is the far-field intensity of spatially incoherent light from a square
aperture: draw i.i.d. circular complex Gaussian samples on a source-plane grid,
keep only the samples inside the aperture of side D, and discrete-Fourier
transform to the object plane.  The source-plane sample pitch is chosen as
``wavelength * z / (n_src * pixel_pitch)`` so the transform's output pitch is
exactly one detector pixel, which makes the ensemble field correlation on the
object plane separable ``sinc(D dx / (lambda z)) * sinc(D dy / (lambda z))``
(first zero at the coherence length ``lambda z / D``).  Intensity is |field|^2
scaled to unit ensemble mean.

Only a K x K block of source samples is nonzero (K = aperture width in source
samples), so the transform is evaluated as an explicit (grid_n x K) DFT-matrix
product instead of a full source-grid FFT; the output samples are identical.
The K x K noise block is the frame's entire random stream, derived from
(master_seed, frame_index) alone, so frames can be generated in any order or
concurrently with bit-identical results.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .optics import OpticalConfig
from . import ioutil

# Minimum source samples across the aperture; below this the rasterized
# aperture is too coarse for the target sinc correlation.  Raise
# OpticalConfig.source_oversample to satisfy it for wide-coherence setups.
MIN_APERTURE_SAMPLES = 8

_SEED_LIMIT = 2**64


@dataclass(frozen=True)
class SpeckleFrame:
    """One reference-plane intensity realization plus its provenance."""

    intensity: np.ndarray
    seed: int
    frame_index: int

    def __post_init__(self):
        intensity = np.asarray(self.intensity, dtype=float)
        if intensity.ndim != 2 or intensity.shape[0] != intensity.shape[1]:
            raise ConfigError(f"frame intensity must be square 2-D, got {intensity.shape}")
        if not np.isfinite(intensity).all() or intensity.min() < 0:
            raise ConfigError("frame intensity must be finite and non-negative")
        if intensity.mean() <= 0:
            raise ConfigError("frame intensity has non-positive mean")
        if not (0 <= int(self.seed) < _SEED_LIMIT):
            raise ConfigError("seed must fit an unsigned 64-bit integer")
        if int(self.frame_index) < 0:
            raise ConfigError("frame_index must be non-negative")
        arr = intensity.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "intensity", arr)

    @property
    def grid_n(self) -> int:
        return self.intensity.shape[0]


@dataclass(frozen=True)
class SpeckleStats:
    """Ensemble statistics: mean, contrast, row-lag covariance profile, measured l_c.

    Degenerate (zero-variance) ensembles report contrast 0 with NaN profile
    and NaN measured_lc.
    """

    mean_intensity: float
    contrast: float
    covariance_profile: np.ndarray
    measured_lc: float

    def __post_init__(self):
        profile = np.asarray(self.covariance_profile, dtype=float).copy()
        profile.flags.writeable = False
        object.__setattr__(self, "covariance_profile", profile)
        if self.contrast < 0:
            raise ConfigError("contrast cannot be negative")


def aperture_sample_count(config: OpticalConfig) -> int:
    """Source samples spanned by the aperture (quantizes the realized D)."""
    n_src = config.source_oversample * config.grid_n
    delta_src = config.wavelength * config.z_source_to_object / (n_src * config.pixel_pitch)
    return int(round(config.source_width / delta_src))


@lru_cache(maxsize=16)
def _dft_factor(grid_n: int, n_src: int, k: int) -> np.ndarray:
    out_idx = np.arange(grid_n, dtype=float)[:, None]
    src_idx = np.arange(k, dtype=float)[None, :]
    w = np.exp((-2j * np.pi / n_src) * (out_idx * src_idx))
    w.flags.writeable = False
    return w


def synthesize_frame(config: OpticalConfig, master_seed: int, frame_index: int) -> SpeckleFrame:
    """Synthesize one speckle frame; pure in (config, master_seed, frame_index)."""
    if not (0 <= int(master_seed) < _SEED_LIMIT):
        raise ConfigError("master_seed must fit an unsigned 64-bit integer")
    if int(frame_index) < 0:
        raise ConfigError("frame_index must be non-negative")
    k = aperture_sample_count(config)
    if k < 1:
        raise ConfigError("source aperture is narrower than one source-plane sample")
    if k < MIN_APERTURE_SAMPLES:
        raise ConfigError(
            f"source aperture spans only {k} source samples (need >= "
            f"{MIN_APERTURE_SAMPLES}); increase source_oversample")
    n_src = config.source_oversample * config.grid_n
    w = _dft_factor(config.grid_n, n_src, k)
    rng = np.random.default_rng([int(master_seed), int(frame_index)])
    noise = rng.standard_normal((2, k, k))
    amplitudes = np.sqrt(0.5) * (noise[0] + 1j * noise[1])
    field = (w @ amplitudes) @ w.T
    intensity = (field.real**2 + field.imag**2) / float(k * k)
    return SpeckleFrame(intensity, int(master_seed), int(frame_index))


def intensity_stats(frames, pixel_pitch: float, max_lag: int | None = None) -> SpeckleStats:
    """Ensemble statistics over frames of identical geometry.

    mean_intensity averages the per-pixel ensemble mean over the central half
    of the field; contrast is std/mean of the central pixel across the
    ensemble; the covariance profile is the ensemble intensity covariance at
    row lags 0..max_lag, averaged over rows and base positions and normalized
    to 1 at lag 0; measured_lc interpolates the profile's first zero crossing.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise ConfigError("need at least 2 frames for ensemble statistics")
    shape = frames[0].intensity.shape
    for f in frames[1:]:
        if f.intensity.shape != shape:
            raise ConfigError("frames have mismatched grids")
    if pixel_pitch <= 0:
        raise ConfigError("pixel_pitch must be positive")

    stack = np.stack([f.intensity for f in frames])
    n = shape[0]
    if max_lag is None:
        max_lag = n // 2
    max_lag = min(max_lag, n - 1)

    ens_mean = stack.mean(axis=0)
    quarter = n // 4
    central = slice(quarter, quarter + n // 2)
    mean_intensity = float(ens_mean[central, central].mean())

    center_series = stack[:, n // 2, n // 2]
    center_mean = center_series.mean()
    contrast = float(center_series.std() / center_mean) if center_mean > 0 else 0.0

    fluct = stack - ens_mean
    raw = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        if lag == 0:
            raw[0] = np.mean(fluct * fluct)
        else:
            raw[lag] = np.mean(fluct[:, :, :-lag] * fluct[:, :, lag:])

    # fluctuation std below 1e-12 of the mean level is roundoff, not signal
    if raw[0] <= (1e-12 * float(stack.mean())) ** 2:
        profile = np.full(max_lag + 1, np.nan)
        return SpeckleStats(mean_intensity, contrast, profile, float("nan"))

    profile = raw / raw[0]
    measured_lc = _first_zero(profile) * pixel_pitch
    return SpeckleStats(mean_intensity, contrast, profile, measured_lc)


def _first_zero(profile: np.ndarray) -> float:
    """Lag (fractional) of the covariance profile's first zero.

    The ideal thermal profile is a squared field correlation: non-negative,
    touching zero at the coherence length rather than crossing it.  When the
    estimate does go negative (dense lag sampling plus estimator noise) the
    zero is the literal sign crossing, linearly interpolated.  Otherwise the
    touch sits between strictly positive samples, so the zero is interpolated
    on the amplitude profile sqrt(C), which is linear in the lag near its zero.
    """
    amp = np.sqrt(np.maximum(profile, 0.0))
    for lag in range(1, len(profile)):
        if profile[lag] < 0.0:
            frac = profile[lag - 1] / (profile[lag - 1] - profile[lag])
            return lag - 1 + frac
        if amp[lag] >= amp[lag - 1]:  # stopped descending: the touch was passed
            m = lag - 1
            if m >= 1 and amp[m - 1] > amp[m]:
                zero = m + amp[m] / (amp[m - 1] - amp[m])
                if zero <= lag:  # segment (m-1, m) lies left of the touch
                    return zero
            if m >= 2 and amp[m - 2] > amp[m - 1]:
                return (m - 1) + amp[m - 1] / (amp[m - 2] - amp[m - 1])
            return float("nan")
    return float("nan")


def export_frame_pgm(frame: SpeckleFrame, path: str | Path) -> None:
    """Write the frame as a P5 graymap scaled to maxval 65535, plus a sidecar.

    The sidecar ``<path>.meta`` records the linear scale and the frame's
    provenance as key=value text.
    """
    path = Path(path)
    peak = float(frame.intensity.max())
    scale = 65535.0 / peak if peak > 0 else 0.0
    samples = np.rint(frame.intensity * scale).astype(np.int64)
    ioutil.write_pgm(path, samples, 65535, binary=True)
    meta = {
        "scale": repr(scale),
        "seed": frame.seed,
        "frame_index": frame.frame_index,
    }
    ioutil.atomic_write_text(path.with_name(path.name + ".meta"), ioutil.format_kv_text(meta))
