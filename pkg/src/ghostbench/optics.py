"""Bench geometry, source configuration, and transmissive object masks.

Coordinate convention used everywhere: the grid is ``grid_n`` pixels per side
and pixel ``i`` (0-based) has its center at ``(i - grid_n//2) * pixel_pitch``
meters, i.e. physical 0 sits on a pixel center.  Analytic shapes are
rasterized by the pixel-center rule: a pixel is lit iff its center falls
inside the shape (boundary inclusive, with a tiny float guard).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from . import ioutil

# Keys of the standalone optics config file, in canonical order.
CONFIG_FILE_KEYS = ("wavelength_m", "z_m", "z1_m", "source_width_m", "grid_n", "pixel_pitch_m")

# Relative slack applied to boundary comparisons so pixel centers that land
# exactly on a shape edge (an exact-arithmetic tie) rasterize deterministically.
_EDGE_TOL = 1e-9


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class OpticalConfig:
    """Source and geometry parameters of the two-arm speckle bench.

    ``source_width`` is the side of the square emitting aperture; the
    transverse coherence length it produces on the object plane is
    ``wavelength * z_source_to_object / source_width``.  The reference-arm
    distance ``z_source_to_reference`` is carried for provenance; the
    simulated reference plane is optically conjugate to the object plane.
    ``source_oversample`` sets the source-plane sampling density used by the
    speckle synthesizer (source grid is ``source_oversample * grid_n`` samples
    per side).
    """

    wavelength: float
    z_source_to_object: float
    z_source_to_reference: float
    source_width: float
    grid_n: int
    pixel_pitch: float
    source_oversample: int = 4

    def __post_init__(self):
        for name in ("wavelength", "z_source_to_object", "z_source_to_reference",
                     "source_width", "pixel_pitch"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive finite length, got {value!r}")
        if not isinstance(self.grid_n, (int, np.integer)) or self.grid_n < 8:
            raise ConfigError(f"grid_n must be an integer >= 8, got {self.grid_n!r}")
        if not isinstance(self.source_oversample, (int, np.integer)) or self.source_oversample < 1:
            raise ConfigError("source_oversample must be an integer >= 1")
        lc = self.wavelength * self.z_source_to_object / self.source_width
        if lc < 2.0 * self.pixel_pitch:
            raise ConfigError(
                f"coherence length {lc:.4g} m is below two pixel pitches "
                f"({2 * self.pixel_pitch:.4g} m); speckle would not be resolvable on the grid")

    @property
    def field_of_view(self) -> float:
        return self.grid_n * self.pixel_pitch


def coherence_length(config: OpticalConfig) -> float:
    """Transverse coherence length on the object plane: wavelength * z / D."""
    return config.wavelength * config.z_source_to_object / config.source_width


def config_for_coherence_length(config: OpticalConfig, lc: float) -> OpticalConfig:
    """Same bench with the source width adjusted to hit a target coherence length."""
    if not (lc > 0 and math.isfinite(lc)):
        raise ConfigError(f"target coherence length must be positive, got {lc!r}")
    import dataclasses

    return dataclasses.replace(
        config, source_width=config.wavelength * config.z_source_to_object / lc)


def grid_coords(grid_n: int, pitch: float) -> np.ndarray:
    """Physical pixel-center coordinates along one axis."""
    return (np.arange(grid_n) - grid_n // 2) * pitch


@dataclass(frozen=True)
class ObjectMask:
    """Discretized intensity transmittance on the object grid, values in [0, 1]."""

    values: np.ndarray
    pitch: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigError(f"mask must be a square 2-D array, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ConfigError("mask contains non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ConfigError("mask values must lie in [0, 1]")
        if not (values > 0).any():
            raise ConfigError("mask is entirely opaque (no positive transmittance)")
        if not (isinstance(self.pitch, (int, float)) and self.pitch > 0):
            raise ConfigError("mask pitch must be positive")
        object.__setattr__(self, "values", _frozen_array(values))

    @property
    def grid_n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SlitGeometry:
    """Double-slit layout: two vertical slits of width/height, centers `separation` apart."""

    width: float
    height: float
    separation: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ConfigError("slit width and height must be positive")
        if self.separation <= self.width:
            raise ConfigError(
                f"slit separation {self.separation!r} must exceed slit width {self.width!r} "
                "(slits may not overlap)")

    @property
    def slit_centers_x(self) -> tuple[float, float]:
        cx = self.center[0]
        return (cx - self.separation / 2.0, cx + self.separation / 2.0)


def make_double_slit(config: OpticalConfig, slit_width: float, slit_height: float,
                     separation: float, center: tuple[float, float] = (0.0, 0.0)) -> ObjectMask:
    """Binary double-slit mask rasterized by the pixel-center rule."""
    geom = SlitGeometry(slit_width, slit_height, separation, center)
    n = config.grid_n
    pitch = config.pixel_pitch
    coords = grid_coords(n, pitch)
    tol = _EDGE_TOL * pitch

    left, right = geom.slit_centers_x
    x_lo = left - slit_width / 2.0
    x_hi = right + slit_width / 2.0
    y_lo = center[1] - slit_height / 2.0
    y_hi = center[1] + slit_height / 2.0
    lo_edge = coords[0] - pitch / 2.0
    hi_edge = coords[-1] + pitch / 2.0
    if x_lo < lo_edge - tol or x_hi > hi_edge + tol or y_lo < lo_edge - tol or y_hi > hi_edge + tol:
        raise ConfigError("double slit extends outside the grid")

    in_x = np.zeros(n, dtype=bool)
    for cx in geom.slit_centers_x:
        in_x |= np.abs(coords - cx) <= slit_width / 2.0 + tol
    in_y = np.abs(coords - center[1]) <= slit_height / 2.0 + tol
    values = np.outer(in_y, in_x).astype(float)
    return ObjectMask(values, pitch)


def load_mask_pgm(path: str | Path, config: OpticalConfig) -> ObjectMask:
    """Load a P2/P5 graymap as a transmittance mask (samples scaled by 1/maxval).

    The image must be square and match ``config.grid_n`` exactly; no resampling.
    """
    samples, maxval = ioutil.read_pgm(path)
    height, width = samples.shape
    if height != width:
        raise ConfigError(f"mask graymap must be square, got {width}x{height}")
    if height != config.grid_n:
        raise ConfigError(
            f"mask graymap is {width}x{height} but the grid is "
            f"{config.grid_n}x{config.grid_n}")
    if not samples.any():
        raise ConfigError("mask graymap is all zero")
    return ObjectMask(samples / float(maxval), config.pixel_pitch)


def save_mask_pgm(mask: ObjectMask, path: str | Path, maxval: int = 255,
                  binary: bool = True) -> None:
    """Quantize transmittance to ``round(value * maxval)`` and write a graymap."""
    samples = np.rint(mask.values * maxval).astype(np.int64)
    ioutil.write_pgm(path, samples, maxval, binary=binary)


def load_config(path: str | Path) -> OpticalConfig:
    """Read the flat key=value optics config file (exactly the six canonical keys)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_pairs(ioutil.parse_kv_text(text))


def parse_config_pairs(pairs: dict[str, str]) -> OpticalConfig:
    unknown = set(pairs) - set(CONFIG_FILE_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    missing = set(CONFIG_FILE_KEYS) - set(pairs)
    if missing:
        raise ConfigError(f"missing config key(s): {', '.join(sorted(missing))}")
    try:
        grid_n = int(pairs["grid_n"])
    except ValueError:
        raise ConfigError(f"grid_n must be an integer, got {pairs['grid_n']!r}") from None

    def num(key: str) -> float:
        try:
            return float(pairs[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {pairs[key]!r}") from None

    return OpticalConfig(
        wavelength=num("wavelength_m"),
        z_source_to_object=num("z_m"),
        z_source_to_reference=num("z1_m"),
        source_width=num("source_width_m"),
        grid_n=grid_n,
        pixel_pitch=num("pixel_pitch_m"),
    )


def save_config(config: OpticalConfig, path: str | Path) -> None:
    pairs = {
        "wavelength_m": repr(config.wavelength),
        "z_m": repr(config.z_source_to_object),
        "z1_m": repr(config.z_source_to_reference),
        "source_width_m": repr(config.source_width),
        "grid_n": config.grid_n,
        "pixel_pitch_m": repr(config.pixel_pitch),
    }
    ioutil.atomic_write_text(path, ioutil.format_kv_text(pairs))
