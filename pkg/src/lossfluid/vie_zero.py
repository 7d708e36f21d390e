"""Zero-buffer fluid solver.

Solves the discontinuous Volterra equation for the occupancy fraction of
a time-varying loss system without waiting room, generalized to a
capacity threshold ``c``:

    rho(t) = r0 * Fbar(t) + int_0^t w(u) lam(u) Gbar(t - u) du,

where the acceptance function ``w`` equals 1 while ``rho < c`` and
``min(d/lambda, 1)`` on the capacity boundary, ``d`` being the
instantaneous departure rate

    d(t) = r0 * f(t) + int_0^t w(u) lam(u) g(t - u) du.

Discretization is an explicit first-order recursion on a uniform grid
with left-history quadrature (weight ``dt``, nodes ``t_1..t_i``),
matching the update order: the acceptance value at ``t_{i+1}`` is chosen
from the state at ``t_i``, then the occupancy is advanced.  ``rho`` is
clamped to ``[0, c]`` after every step and the boundary test uses a
tolerance of one maximal Euler increment, ``dt * rate_bound``, so a
crossing cannot step past the threshold undetected.

``w`` is only identified where the arrival rate is positive; where
``lambda(t) = 0`` the boundary value is defined as 1 (the conservative
acceptance choice), and it can jump at boundary-hitting times, which is
expected and preserved by the scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericalError
from .model import Grid, SystemConfig

__all__ = [
    "ZeroTrajectory",
    "solve_zero_buffer",
    "acceptance_at",
    "cumulative_departures",
    "boundary_tolerance",
]


def boundary_tolerance(grid: Grid, rate_bound: float) -> float:
    """Capacity-boundary detection tolerance: one maximal Euler step."""
    return max(grid.step * rate_bound, 1e-9)


@dataclass(frozen=True)
class ZeroTrajectory:
    """Discretized zero-buffer fluid solution on a uniform grid.

    ``rho`` is the occupancy, ``w`` the acceptance function, ``d`` the
    instantaneous departure rate, ``boundary_flags`` marks grid points at
    capacity (within tolerance).  ``lam`` caches the arrival rate at the
    grid nodes for downstream consumers (acceptance masking).
    """

    grid: Grid
    rho: np.ndarray
    w: np.ndarray
    d: np.ndarray
    boundary_flags: np.ndarray
    lam: np.ndarray
    capacity: float
    boundary_tol: float

    def to_csv(self, path: str | Path) -> None:
        """Write ``t,rho,w,d,at_boundary`` rows at full double precision."""
        t = self.grid.points()
        with open(path, "w", newline="") as fh:
            fh.write("t,rho,w,d,at_boundary\n")
            for i in range(t.shape[0]):
                fh.write(
                    "%.17g,%.17g,%.17g,%.17g,%d\n"
                    % (t[i], self.rho[i], self.w[i], self.d[i], int(self.boundary_flags[i]))
                )


def solve_zero_buffer(cfg: SystemConfig, grid: Grid) -> ZeroTrajectory:
    """Solve the zero-buffer system on ``grid``.

    Requires ``cfg.buffer_ratio == 0`` and initial occupancy within the
    capacity threshold.  Raises ``NumericalError`` with the offending
    grid index if a nonfinite value appears.
    """
    if cfg.buffer_ratio != 0.0:
        raise ConfigError(
            "zero-buffer solver requires buffer_ratio = 0 "
            f"(got {cfg.buffer_ratio}); use the finite-buffer solver"
        )
    if cfg.initial_fraction > cfg.capacity + 1e-12:
        raise ConfigError(
            f"initial_fraction {cfg.initial_fraction} exceeds capacity {cfg.capacity}"
        )
    if abs(grid.horizon - cfg.horizon) > 1e-9 * max(1.0, cfg.horizon):
        raise ConfigError(
            f"grid horizon {grid.horizon} does not cover config horizon {cfg.horizon}"
        )

    t = grid.points()
    lam = np.asarray(cfg.rate(t), dtype=float)
    gbar = np.asarray(cfg.service.survival(t), dtype=float)
    gpdf = np.asarray(cfg.service.pdf(t), dtype=float)
    r0 = cfg.initial_fraction
    if r0 > 0:
        init_occ = r0 * np.asarray(cfg.initial_dist.survival(t), dtype=float)
        init_dep = r0 * np.asarray(cfg.initial_dist.pdf(t), dtype=float)
    else:
        init_occ = np.zeros_like(t)
        init_dep = np.zeros_like(t)

    tol = boundary_tolerance(grid, cfg.rate.rate_bound)
    rho, w, flags, err = _kernels.solve_zero_vie(
        lam, gbar, gpdf, init_occ, init_dep, grid.step, cfg.capacity, tol
    )
    if err >= 0:
        raise NumericalError("nonfinite occupancy during zero-buffer solve", int(err))

    wlam = w * lam
    wlam[0] = 0.0  # the t_0 node carries no quadrature weight
    d = init_dep + np.convolve(wlam, gpdf)[: t.shape[0]] * grid.step
    if not np.all(np.isfinite(d)):
        raise NumericalError(
            "nonfinite departure rate", int(np.argmin(np.isfinite(d)))
        )
    return ZeroTrajectory(
        grid=grid,
        rho=rho,
        w=w,
        d=d,
        boundary_flags=flags.astype(bool),
        lam=lam,
        capacity=cfg.capacity,
        # report the hysteresis exit width: no point further than this
        # from capacity ever carries boundary behavior
        boundary_tol=2.0 * tol,
    )


def acceptance_at(traj: ZeroTrajectory, t: float) -> float:
    """Acceptance value at the last grid point at or before ``t``.

    Left-continuous step interpolation; the acceptance function is only
    identified up to arrival-rate-null sets and may be discontinuous at
    boundary-hitting times, so no smoothing is applied.
    """
    idx = traj.grid.index_at_or_before(t)
    return float(traj.w[idx])


def cumulative_departures(traj: ZeroTrajectory, cfg: SystemConfig) -> np.ndarray:
    """Cumulative fluid departures ``D(t_i)`` consistent with the scheme.

    Uses the same quadrature and acceptance history as the solver, so
    ``rho + D`` equals initial mass plus accepted inflow up to clamping.
    """
    t = traj.grid.points()
    gcdf = np.asarray(cfg.service.cdf(t), dtype=float)
    r0 = cfg.initial_fraction
    base = (
        r0 * np.asarray(cfg.initial_dist.cdf(t), dtype=float)
        if r0 > 0
        else np.zeros_like(t)
    )
    wlam = traj.w * traj.lam
    wlam[0] = 0.0
    return base + np.convolve(wlam, gcdf)[: t.shape[0]] * traj.grid.step
