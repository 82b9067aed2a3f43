"""Sparse reconstruction from bucket data: l1-regularized least squares.

build_sensing turns a campaign into the linear system (rows = flattened
reference intensities, rhs = buckets), optionally mean-centered and
column-scaled.  gpsr_solve minimizes 0.5 ||rhs - rows @ x||^2 + tau ||x||_1
by gradient projection on the split x = u - v (u, v >= 0) with
Barzilai-Borwein step lengths; ista_reference is an independent
proximal-gradient oracle used to cross-check it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SolverError
from .forward import MeasurementSet
from .metrics import ReconImage
from . import ioutil


@dataclass(frozen=True)
class GicsParams:
    """Solver knobs; tau is the l1 weight of the convex program."""

    tau: float = 1e-3
    max_iters: int = 2000
    tol_rel_obj: float = 1e-8
    bb_step_min: float = 1e-30
    bb_step_max: float = 1e30
    debias: bool = False
    nonneg: bool = False

    def __post_init__(self):
        if not (self.tau >= 0 and np.isfinite(self.tau)):
            raise ConfigError("tau must be finite and non-negative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be positive")
        if not (self.tol_rel_obj > 0):
            raise ConfigError("tol_rel_obj must be positive")
        if not (0 < self.bb_step_min < self.bb_step_max):
            raise ConfigError("need 0 < bb_step_min < bb_step_max")


@dataclass(frozen=True)
class SolveReport:
    """Solver diagnostics; history rows are (iteration, objective, kkt_residual)."""

    iterations: int
    final_objective: float
    kkt_residual: float
    converged: bool
    history: tuple[tuple[int, float, float], ...] = ()


@dataclass(frozen=True)
class SensingSystem:
    """Linear model of a campaign, possibly centered and column-scaled.

    ``rows * col_scale + col_offset`` and ``rhs + rhs_offset`` reproduce the
    original intensities and buckets (up to float roundoff of the scaling).
    """

    rows: np.ndarray
    rhs: np.ndarray
    col_scale: np.ndarray
    centered: bool
    col_offset: np.ndarray
    rhs_offset: float

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        rhs = np.asarray(self.rhs, dtype=float)
        col_scale = np.asarray(self.col_scale, dtype=float)
        col_offset = np.asarray(self.col_offset, dtype=float)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ConfigError("sensing rows must be a non-empty 2-D matrix")
        if rhs.shape != (rows.shape[0],):
            raise ConfigError("rhs length must match the number of rows")
        if col_scale.shape != (rows.shape[1],) or col_offset.shape != (rows.shape[1],):
            raise ConfigError("column scale/offset length must match the number of columns")
        if not (col_scale > 0).all():
            raise ConfigError("column scales must be strictly positive")
        for name, arr in (("rows", rows), ("rhs", rhs), ("col_scale", col_scale),
                          ("col_offset", col_offset)):
            if not np.isfinite(arr).all():
                raise ConfigError(f"sensing {name} contains non-finite values")
            frozen = arr.copy()
            frozen.flags.writeable = False
            object.__setattr__(self, name, frozen)

    @classmethod
    def from_arrays(cls, rows: np.ndarray, rhs: np.ndarray) -> "SensingSystem":
        """Raw (uncentered, unscaled) system, e.g. for solver tests."""
        rows = np.asarray(rows, dtype=float)
        n = rows.shape[1] if rows.ndim == 2 else 0
        return cls(rows, rhs, np.ones(n), False, np.zeros(n), 0.0)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n_pix(self) -> int:
        return self.rows.shape[1]

    def original_rows(self) -> np.ndarray:
        return self.rows * self.col_scale + self.col_offset

    def original_rhs(self) -> np.ndarray:
        return self.rhs + self.rhs_offset


def build_sensing(ms: MeasurementSet, centered: bool = True,
                  scale_columns: bool = True) -> SensingSystem:
    """Flatten the campaign into rows/rhs; optionally center and unit-RMS-scale columns.

    A zero-variance column (dead pixel) keeps scale 1 and triggers a warning.
    """
    stack = ms.intensity_stack()
    m = stack.shape[0]
    rows = stack.reshape(m, -1).astype(float)
    rhs = np.array(ms.buckets, dtype=float)
    n = rows.shape[1]

    col_offset = np.zeros(n)
    rhs_offset = 0.0
    if centered:
        col_offset = rows.mean(axis=0)
        rows = rows - col_offset
        rhs_offset = float(rhs.mean())
        rhs = rhs - rhs_offset

    col_scale = np.ones(n)
    if scale_columns:
        scale = np.linalg.norm(rows, axis=0) / np.sqrt(m)
        dead = scale == 0
        if dead.any():
            warnings.warn(f"{int(dead.sum())} zero-variance column(s); scale left at 1",
                          stacklevel=2)
            scale[dead] = 1.0
        rows = rows / scale
        col_scale = scale

    return SensingSystem(rows, rhs, col_scale, centered, col_offset, rhs_offset)


def lasso_objective(rows: np.ndarray, rhs: np.ndarray, x: np.ndarray, tau: float) -> float:
    resid = rows @ x - rhs
    return float(0.5 * (resid @ resid) + tau * np.abs(x).sum())


def kkt_residual(x: np.ndarray, grad: np.ndarray, tau: float) -> float:
    """Infinity-norm violation of the l1 least-squares optimality conditions."""
    worst = 0.0
    pos = x > 0
    neg = x < 0
    zero = ~(pos | neg)
    if pos.any():
        worst = max(worst, float(np.abs(grad[pos] + tau).max()))
    if neg.any():
        worst = max(worst, float(np.abs(grad[neg] - tau).max()))
    if zero.any():
        worst = max(worst, max(0.0, float(np.abs(grad[zero]).max()) - tau))
    return worst


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def gpsr_solve(system: SensingSystem, params: GicsParams) -> tuple[np.ndarray, SolveReport]:
    """Gradient projection with Barzilai-Borwein steps on the split u - v.

    The split objective is quadratic, so the step along the projection arc is
    the exact minimizer clipped to [0, 1] (monotone descent; the final
    objective never exceeds the objective at x = 0).  Stops when the relative
    objective change drops below tol_rel_obj or after max_iters iterations.
    """
    rows = system.rows
    rhs = system.rhs
    tau = float(params.tau)
    if tau < 0:
        raise ConfigError("tau must be non-negative")
    n = system.n_pix

    u = np.zeros(n)
    v = np.zeros(n)
    resid = -rhs.copy()  # rows @ (u - v) - rhs at the origin
    objective = 0.5 * float(resid @ resid)
    grad = rows.T @ resid
    alpha = 1.0

    history = [(0, objective, kkt_residual(u - v, grad, tau))]
    converged = False
    iterations = 0

    for it in range(1, params.max_iters + 1):
        grad_u = grad + tau
        grad_v = tau - grad
        du = np.maximum(u - alpha * grad_u, 0.0) - u
        dv = np.zeros(n) if params.nonneg else np.maximum(v - alpha * grad_v, 0.0) - v
        dd = float(du @ du + dv @ dv)
        if dd == 0.0:
            converged = True  # projected-gradient fixed point
            break

        step_image = rows @ (du - dv)
        curvature = float(step_image @ step_image)
        slope = float(grad_u @ du + grad_v @ dv)
        if curvature > 0.0:
            lam = min(max(-slope / curvature, 0.0), 1.0)
        elif slope < 0.0:
            lam = 1.0
        else:
            converged = True
            break

        u = u + lam * du
        v = v + lam * dv
        resid = resid + lam * step_image
        new_objective = 0.5 * float(resid @ resid) + tau * float(u.sum() + v.sum())
        if not np.isfinite(new_objective):
            raise SolverError("non-finite objective; check system scaling")

        if curvature <= 0.0:
            alpha = params.bb_step_max
        else:
            alpha = min(max(dd / curvature, params.bb_step_min), params.bb_step_max)

        grad = rows.T @ resid
        iterations = it
        history.append((it, new_objective, kkt_residual(u - v, grad, tau)))
        small_change = abs(objective - new_objective) <= params.tol_rel_obj * max(
            abs(objective), 1e-300)
        objective = new_objective
        if small_change:
            converged = True
            break

    x = u - v
    if params.debias:
        x, resid = _debias(rows, rhs, x, params)
        grad = rows.T @ resid
        objective = 0.5 * float(resid @ resid) + tau * float(np.abs(x).sum())
    report = SolveReport(
        iterations=iterations,
        final_objective=objective,
        kkt_residual=kkt_residual(x, grad, tau),
        converged=converged,
        history=tuple(history),
    )
    return x, report


def _debias(rows, rhs, x, params):
    """Least-squares polish restricted to the solver's final support."""
    support = np.flatnonzero(x)
    if support.size == 0 or support.size > rows.shape[0]:
        return x, rows @ x - rhs
    solution, *_ = np.linalg.lstsq(rows[:, support], rhs, rcond=None)
    polished = np.zeros_like(x)
    polished[support] = solution
    if params.nonneg:
        polished = np.maximum(polished, 0.0)
    return polished, rows @ polished - rhs


def ista_reference(system: SensingSystem, tau: float, kkt_tol: float,
                   max_iters: int = 100_000, on_iterate=None) -> np.ndarray:
    """Independent proximal-gradient oracle: soft-threshold steps of size 1/L.

    L bounds the largest squared singular value of the rows (power iteration
    with a small safety margin).  Deterministic from x0 = 0; iterates until
    the KKT residual reaches kkt_tol or the iteration cap (reported via a
    warning, not fatal).
    """
    if tau < 0:
        raise ConfigError("tau must be non-negative")
    rows = system.rows
    rhs = system.rhs
    lipschitz = _gram_spectral_bound(rows) * 1.02
    if lipschitz <= 0:
        lipschitz = 1.0

    x = np.zeros(system.n_pix)
    image = np.zeros(system.m)
    for it in range(max_iters + 1):
        grad = rows.T @ (image - rhs)
        if kkt_residual(x, grad, tau) <= kkt_tol:
            return x
        x = soft_threshold(x - grad / lipschitz, tau / lipschitz)
        if not np.isfinite(x).all():
            raise SolverError("non-finite iterate in the proximal-gradient oracle")
        image = rows @ x
        if on_iterate is not None:
            on_iterate(it, x)
    warnings.warn(f"proximal-gradient oracle hit the {max_iters}-iteration cap", stacklevel=2)
    return x


def _gram_spectral_bound(rows: np.ndarray, iters: int = 500, tol: float = 1e-12) -> float:
    n = rows.shape[1]
    vec = np.full(n, 1.0 / np.sqrt(n))
    estimate = 0.0
    for _ in range(iters):
        image = rows.T @ (rows @ vec)
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            return 0.0
        vec = image / norm
        if abs(norm - estimate) <= tol * norm:
            return norm
        estimate = norm
    return estimate


def gics_reconstruct(ms: MeasurementSet, params: GicsParams, centered: bool = True,
                     scale_columns: bool = True) -> tuple[ReconImage, SolveReport]:
    """Centered, column-scaled sensing build, GPSR solve, map back to mask units.

    Negative transmittance estimates are clamped to zero after the solve (the
    program itself is unconstrained unless params.nonneg is set).  Centering
    drops the DC mode (the centered system has rank at most m - 1); disable it
    for full-rank inversion checks.
    """
    system = build_sensing(ms, centered=centered, scale_columns=scale_columns)
    solution, report = gpsr_solve(system, params)
    physical = solution / system.col_scale
    physical = np.maximum(physical, 0.0)
    grid_n = ms.config.grid_n
    digest = f"gics:m={ms.m}:tau={params.tau!r}:seed={ms.records[0].frame.seed}"
    image = ReconImage(physical.reshape(grid_n, grid_n), "GICS", digest)
    return image, report


def write_solve_csv(report: SolveReport, path: str | Path) -> None:
    """Per-iteration solver diagnostics as ``iter,objective,kkt_residual``."""
    lines = ["iter,objective,kkt_residual"]
    lines += [f"{it},{obj!r},{kkt!r}" for it, obj, kkt in report.history]
    ioutil.atomic_write_text(path, "\n".join(lines) + "\n")
