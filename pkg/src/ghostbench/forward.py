"""Two-arm forward model: bucket detector behind the object, full reference record.

The reference arm carries the same frame as the object plane (perfect arm
correlation); detector noise is modeled as additive Gaussian noise on the
bucket only, seeded per record so campaigns are reproducible regardless of
execution order or worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .optics import ObjectMask, OpticalConfig
from .speckle import SpeckleFrame, synthesize_frame
from . import ioutil

# Extra entropy word separating the bucket-noise stream from the frame stream.
_NOISE_STREAM = 0x4255434B


@dataclass(frozen=True)
class MeasurementRecord:
    frame: SpeckleFrame
    bucket: float


@dataclass(frozen=True)
class MeasurementSet:
    """Paired (reference frame, bucket value) records from one campaign."""

    records: tuple[MeasurementRecord, ...]
    config: OpticalConfig
    noise_sigma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if len(self.records) < 1:
            raise ConfigError("a measurement set needs at least one record")
        if not (self.noise_sigma >= 0 and np.isfinite(self.noise_sigma)):
            raise ConfigError("noise_sigma must be finite and non-negative")
        if self.noise_sigma == 0 and any(r.bucket < 0 for r in self.records):
            raise ConfigError("noiseless buckets cannot be negative")

    @property
    def m(self) -> int:
        return len(self.records)

    @cached_property
    def buckets(self) -> np.ndarray:
        out = np.array([r.bucket for r in self.records], dtype=float)
        out.flags.writeable = False
        return out

    def intensity_stack(self) -> np.ndarray:
        """(m, grid_n, grid_n) view stack of the reference intensities."""
        return np.stack([r.frame.intensity for r in self.records])

    def to_csv(self, path: str | Path) -> None:
        lines = ["frame_index,bucket"]
        lines += [f"{r.frame.frame_index},{r.bucket!r}" for r in self.records]
        ioutil.atomic_write_text(path, "\n".join(lines) + "\n")


def bucket_measure(frame: SpeckleFrame, mask: ObjectMask) -> float:
    """Total intensity transmitted by the mask: sum of intensity * transmittance."""
    if frame.intensity.shape != mask.values.shape:
        raise ConfigError(
            f"frame grid {frame.intensity.shape} does not match mask grid {mask.values.shape}")
    return float(np.sum(frame.intensity * mask.values))


def run_campaign(config: OpticalConfig, mask: ObjectMask, m: int, master_seed: int,
                 noise_sigma: float = 0.0, workers: int = 1) -> MeasurementSet:
    """Acquire m records: frame r, its bucket, optional additive Gaussian noise.

    Record r uses frame_index r (0-based).  Output is bit-identical for fixed
    inputs whatever the worker count.
    """
    if m < 1:
        raise ConfigError("a campaign needs m >= 1 measurements")
    if mask.grid_n != config.grid_n:
        raise ConfigError(
            f"mask grid {mask.grid_n} does not match config grid {config.grid_n}")
    if not (noise_sigma >= 0 and np.isfinite(noise_sigma)):
        raise ConfigError("noise_sigma must be finite and non-negative")

    def acquire(index: int) -> MeasurementRecord:
        frame = synthesize_frame(config, master_seed, index)
        bucket = bucket_measure(frame, mask)
        if noise_sigma > 0:
            rng = np.random.default_rng([int(master_seed), index, _NOISE_STREAM])
            bucket += noise_sigma * rng.standard_normal()
        return MeasurementRecord(frame, bucket)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = tuple(pool.map(acquire, range(m)))
    else:
        records = tuple(acquire(i) for i in range(m))
    return MeasurementSet(records, config, noise_sigma)
