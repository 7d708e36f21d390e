"""Finite-buffer fluid solver.

Solves the coupled system of Volterra equations for a loss system with
waiting room, generalized to thresholds ``(c, beta)``:

    rho(t) = min(r0, c) Fbar(t) + int z1 lam Gbar + int z2 d Gbar,
    eta(t) = max(r0 - c, 0) + int (1 - z1) z3 lam - int z2 d,
    D(t)   = min(r0, c) F(t)  + int z1 lam G    + int z2 d G,
    d(t)   = min(r0, c) f(t)  + int (z1 lam + z2 d) g,

where the auxiliary selection functions ``(z1, z2, z3)`` switch with the
four-state classification of the pair (occupancy at capacity? buffer
empty / partial / full?).  The explicit recursion picks the z-values at
``t_{i+1}`` from the state at ``t_i``, advances the departure rate (with
the self-coupling term lagged one step to stay explicit), then occupancy
and buffer, clamping to ``[0, c] x [0, beta]``.

State-2 handling: the continuous solution keeps the buffer empty there
only while arrivals and departures balance; when arrivals exceed
departures the solution immediately behaves like state 3 (buffer starts
filling).  The recursion mirrors this by comparing ``lam`` with ``d`` at
the current node; keeping the nominal state-2 values in that regime
would pin the buffer at zero for all time.  Conversely, if a transient
leaves free capacity while buffer mass remains (possible under
oscillating service kernels), arrivals are admitted directly to service
until the gap closes; promotions alone cannot close it because they are
capped at the departure rate.

With ``beta = 0`` states 2 and 4 coincide and the boundary law becomes
``(z1, z2, z3) = (0, min(lam/d, 1), min(d/lam, 1))``, whose accepted
inflow ``min(lam, d)`` recovers the zero-buffer solver's law; the two
solvers then agree to discretization error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericalError
from .model import Grid, SystemConfig
from .vie_zero import boundary_tolerance

__all__ = [
    "FluidState",
    "FiniteTrajectory",
    "classify_state",
    "solve_finite_buffer",
    "acceptance_at",
    "cumulative_inflow",
]


class FluidState(IntEnum):
    """Labels for the four boundary regimes of the coupled system."""

    S1 = 1  # rho < c, eta = 0
    S2 = 2  # rho = c, eta = 0
    S3 = 3  # rho = c, 0 < eta < beta
    S4 = 4  # rho = c, eta = beta


def classify_state(rho: float, eta: float, c: float, beta: float, tol: float) -> FluidState:
    """Classify a clamped ``(rho, eta)`` pair under tolerance ``tol``.

    With ``beta = 0`` the buffer coordinate is identically zero, so only
    S1/S2 occur and the solver applies the merged boundary law in S2.
    """
    return FluidState(_kernels.classify_scalar(rho, eta, c, beta, tol))


@dataclass(frozen=True)
class FiniteTrajectory:
    """Discretized finite-buffer fluid solution on a uniform grid.

    ``z3_clamped`` flags grid points where the full-buffer acceptance was
    clamped because departures exceeded arrivals there; this is expected
    while the full-buffer state drains toward its exit (the clamped value
    1 is the correct continuation) and the flags identify those points.
    """

    grid: Grid
    rho: np.ndarray
    eta: np.ndarray
    Dcum: np.ndarray
    d: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    states: np.ndarray
    lam: np.ndarray
    capacity: float
    buffer_ratio: float
    boundary_tol: float
    z3_clamped: np.ndarray

    def state_labels(self) -> list[str]:
        return [f"S{int(s)}" for s in self.states]

    def to_csv(self, path: str | Path) -> None:
        """Write ``t,rho,eta,Dcum,d,z1,z2,z3,state`` rows, 17 digits."""
        t = self.grid.points()
        with open(path, "w", newline="") as fh:
            fh.write("t,rho,eta,Dcum,d,z1,z2,z3,state\n")
            for i in range(t.shape[0]):
                fh.write(
                    "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,S%d\n"
                    % (
                        t[i],
                        self.rho[i],
                        self.eta[i],
                        self.Dcum[i],
                        self.d[i],
                        self.z1[i],
                        self.z2[i],
                        self.z3[i],
                        int(self.states[i]),
                    )
                )


def solve_finite_buffer(cfg: SystemConfig, grid: Grid) -> FiniteTrajectory:
    """Solve the coupled finite-buffer system on ``grid``.

    Accepts ``buffer_ratio = 0`` (degenerate case, agrees with the
    zero-buffer solver).  Raises ``NumericalError`` with the offending
    index on nonfinite intermediates, and warns if a state transition
    skips a neighbor (grid too coarse for the input functions).
    """
    if cfg.initial_fraction > cfg.capacity + cfg.buffer_ratio + 1e-12:
        raise ConfigError(
            f"initial_fraction {cfg.initial_fraction} exceeds "
            f"capacity + buffer_ratio = {cfg.capacity + cfg.buffer_ratio}"
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
    occ0 = min(r0, cfg.capacity)
    if occ0 > 0:
        init_occ = occ0 * np.asarray(cfg.initial_dist.survival(t), dtype=float)
        init_dep = occ0 * np.asarray(cfg.initial_dist.pdf(t), dtype=float)
        init_cdf = occ0 * np.asarray(cfg.initial_dist.cdf(t), dtype=float)
    else:
        init_occ = np.zeros_like(t)
        init_dep = np.zeros_like(t)
        init_cdf = np.zeros_like(t)
    init_buf = max(r0 - cfg.capacity, 0.0)

    tol = boundary_tolerance(grid, cfg.rate.rate_bound)
    rho, eta, d, z1, z2, z3, states, clamped, err = _kernels.solve_finite_vie(
        lam,
        gbar,
        gpdf,
        init_occ,
        init_dep,
        init_buf,
        grid.step,
        cfg.capacity,
        cfg.buffer_ratio,
        tol,
    )
    if err >= 0:
        raise NumericalError("nonfinite value during finite-buffer solve", int(err))

    gcdf = 1.0 - gbar
    inflow = z1 * lam + z2 * d
    inflow[0] = 0.0
    Dcum = init_cdf + np.convolve(inflow, gcdf)[: t.shape[0]] * grid.step

    _warn_on_state_jumps(states)

    return FiniteTrajectory(
        grid=grid,
        rho=rho,
        eta=eta,
        Dcum=Dcum,
        d=d,
        z1=z1,
        z2=z2,
        z3=z3,
        states=states,
        lam=lam,
        capacity=cfg.capacity,
        buffer_ratio=cfg.buffer_ratio,
        boundary_tol=2.0 * tol,  # hysteresis exit width, as in the zero solver
        z3_clamped=clamped.astype(bool),
    )


def acceptance_at(traj: FiniteTrajectory, t: float) -> float:
    """Acceptance value ``z3`` at the last grid point at or before ``t``."""
    idx = traj.grid.index_at_or_before(t)
    return float(traj.z3[idx])


def cumulative_inflow(traj: FiniteTrajectory) -> np.ndarray:
    """Accepted-arrival mass ``int [z1 + (1 - z1) z3] lam`` on the grid.

    Book-keeping counterpart of the solution: initial mass plus this
    inflow equals ``rho + eta + Dcum`` up to clamping.
    """
    rate = (traj.z1 + (1.0 - traj.z1) * traj.z3) * traj.lam
    rate[0] = 0.0
    return np.cumsum(rate) * traj.grid.step


def _warn_on_state_jumps(states: np.ndarray) -> None:
    """Adjacent grid points should move between neighboring states only."""
    a = states[:-1].astype(np.int64)
    b = states[1:].astype(np.int64)
    jumps = np.abs(b - a) > 1
    if np.any(jumps):
        idx = int(np.argmax(jumps)) + 1
        warnings.warn(
            f"state transition S{int(a[idx - 1])} -> S{int(b[idx - 1])} at grid "
            f"index {idx} skips a neighboring state; the grid is too coarse "
            "for the input functions",
            RuntimeWarning,
            stacklevel=3,
        )


