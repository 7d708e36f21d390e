"""Fluid-based capacity planning under transient blocking constraints.

Two problems:

* minimal server level: the smallest capacity ``c`` whose worst-case
  acceptance over the horizon stays at or above ``1 - alpha``
  (zero-buffer system; the worst-case acceptance is nondecreasing in
  ``c``, so bisection applies);
* joint server/buffer sizing: minimize ``v*c + (1-v)*beta`` subject to
  the same constraint on the finite-buffer acceptance, by grid search
  over ``c`` with a bisection on ``beta`` at each grid point (worst-case
  acceptance is nondecreasing in ``beta`` at fixed ``c``).

The worst-case acceptance is taken over arrival-active grid points only
(``lambda(t) > 1e-6``); the acceptance function is not identified where
no arrivals occur, and including such points would make episodic rates
that vanish at the endpoints infeasible for spurious reasons.

The constraint targets the smallest feasible point of a monotone
constraint rather than an exact root: the worst-case acceptance can jump
with ``c`` (the acceptance function is discontinuous in time), so an
exact equality may not exist.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BracketError, ConfigError, InfeasibleError
from .model import Grid, SystemConfig
from .vie_finite import FiniteTrajectory, solve_finite_buffer
from .vie_zero import ZeroTrajectory, solve_zero_buffer

__all__ = [
    "LAMBDA_ACTIVE_EPS",
    "CapacityPlan",
    "min_acceptance",
    "optimize_staffing_zero",
    "optimize_joint",
]

LAMBDA_ACTIVE_EPS = 1e-6

# feasibility comparisons use a machine-scale slack only; discretization
# error is part of the model being optimized, not something to hide
_FEAS_SLACK = 1e-9


def min_acceptance(traj: ZeroTrajectory | FiniteTrajectory) -> float:
    """Worst-case acceptance over arrival-active grid points.

    Returns 1.0 when no grid point is arrival-active (vacuous infimum).
    """
    accept = traj.z3 if isinstance(traj, FiniteTrajectory) else traj.w
    mask = traj.lam > LAMBDA_ACTIVE_EPS
    if not np.any(mask):
        return 1.0
    return float(np.min(accept[mask]))


@dataclass
class CapacityPlan:
    """Optimizer output: thresholds, achieved worst-case acceptance,
    objective value, and the full search trace."""

    c_star: float
    beta_star: float
    achieved_inf_acceptance: float
    objective: float
    alpha: float
    tol_c: float | None
    tol_beta: float | None
    trace: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_json(self, path: str | Path) -> None:
        payload = {
            "c_star": self.c_star,
            "beta_star": self.beta_star,
            "achieved_inf_acceptance": self.achieved_inf_acceptance,
            "objective": self.objective,
            "alpha": self.alpha,
            "tol_c": self.tol_c,
            "tol_beta": self.tol_beta,
            "trace": self.trace,
            "notes": self.notes,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _default_grid(cfg: SystemConfig) -> Grid:
    return Grid.from_count(cfg.horizon, 10_000)


def _audit_monotone(trace: list[dict], key: str, notes: list[str]) -> None:
    """Worst-case acceptance should be nondecreasing along the threshold;
    log violations beyond a small numerical allowance."""
    pts = sorted(
        ((e[key], e["inf_acceptance"]) for e in trace if key in e), key=lambda p: p[0]
    )
    for (x0, a0), (x1, a1) in zip(pts, pts[1:]):
        if a1 < a0 - 1e-6:
            msg = (
                f"monotonicity violation: inf-acceptance fell from {a0:.6g} to "
                f"{a1:.6g} as {key} rose from {x0:.6g} to {x1:.6g}"
            )
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)


def optimize_staffing_zero(
    cfg: SystemConfig,
    alpha: float,
    bracket: tuple[float, float],
    tol_c: float = 1e-3,
    grid: Grid | None = None,
) -> CapacityPlan:
    """Smallest capacity meeting the worst-case acceptance constraint.

    Bisects on ``c`` within ``bracket``; requires the constraint to hold
    at the upper end (otherwise ``BracketError``).  If the lower end is
    already feasible it is returned (smallest-feasible convention for
    flat or vacuous constraints).  The returned plan is re-validated by a
    direct solve at ``c_star``.
    """
    if not (0.0 < alpha < 1.0):
        raise ConfigError("alpha must lie in (0, 1)")
    c_lo, c_hi = bracket
    if not (0.0 < c_lo < c_hi):
        raise ConfigError("bracket must satisfy 0 < c_lo < c_hi")
    if cfg.buffer_ratio != 0.0:
        raise ConfigError("staffing optimization uses the zero-buffer system")
    if cfg.initial_fraction > c_lo:
        raise ConfigError(
            "initial_fraction exceeds the lower capacity bracket; no candidate is valid"
        )
    grid = grid or _default_grid(cfg)
    target = 1.0 - alpha
    trace: list[dict] = []
    notes: list[str] = []

    def evaluate(c: float) -> float:
        traj = solve_zero_buffer(cfg.with_thresholds(capacity=c), grid)
        acc = min_acceptance(traj)
        trace.append({"c": c, "inf_acceptance": acc})
        return acc

    acc_lo = evaluate(c_lo)
    if acc_lo >= target - _FEAS_SLACK:
        # constraint already met at the bracket floor
        _audit_monotone(trace, "c", notes)
        return CapacityPlan(
            c_star=c_lo,
            beta_star=0.0,
            achieved_inf_acceptance=acc_lo,
            objective=c_lo,
            alpha=alpha,
            tol_c=tol_c,
            tol_beta=None,
            trace=trace,
            notes=notes,
        )
    acc_hi = evaluate(c_hi)
    if acc_hi < target - _FEAS_SLACK:
        raise BracketError(
            f"constraint unmet at c_hi={c_hi}: inf-acceptance {acc_hi:.6g} < "
            f"{target:.6g}"
        )

    lo, hi = c_lo, c_hi
    while hi - lo > tol_c:
        mid = 0.5 * (lo + hi)
        if evaluate(mid) >= target - _FEAS_SLACK:
            hi = mid
        else:
            lo = mid

    achieved = evaluate(hi)  # direct re-solve at the returned capacity
    _audit_monotone(trace, "c", notes)
    return CapacityPlan(
        c_star=hi,
        beta_star=0.0,
        achieved_inf_acceptance=achieved,
        objective=hi,
        alpha=alpha,
        tol_c=tol_c,
        tol_beta=None,
        trace=trace,
        notes=notes,
    )


def optimize_joint(
    cfg: SystemConfig,
    alpha: float,
    v: float,
    c_grid: list[float],
    tol_beta: float = 1e-3,
    beta_bracket: tuple[float, float] | None = None,
    grid: Grid | None = None,
) -> CapacityPlan:
    """Minimize ``v*c + (1-v)*beta`` over the capacity grid.

    For each ``c`` the smallest feasible buffer ratio is found by
    bisection within ``beta_bracket`` (default ``[0, 10*c]``); grid
    points with no feasible buffer are recorded as infeasible.  Raises
    ``InfeasibleError`` when every grid point is infeasible, reporting
    the best acceptance achieved.  Ties in the objective resolve to the
    smallest capacity.
    """
    if not (0.0 < alpha < 1.0):
        raise ConfigError("alpha must lie in (0, 1)")
    if not (0.0 <= v <= 1.0):
        raise ConfigError("v must lie in [0, 1]")
    if not c_grid:
        raise ConfigError("c_grid must be nonempty")
    if any(b <= a for a, b in zip(c_grid, c_grid[1:])):
        raise ConfigError("c_grid must be strictly ascending")
    if cfg.initial_fraction > min(c_grid):
        raise ConfigError(
            "initial_fraction exceeds the smallest capacity candidate"
        )
    grid = grid or _default_grid(cfg)
    target = 1.0 - alpha
    trace: list[dict] = []
    notes: list[str] = []
    best: tuple[float, float, float, float] | None = None  # (objective, c, beta, acc)
    max_achieved = -1.0

    def evaluate(c: float, beta: float) -> float:
        traj = solve_finite_buffer(
            cfg.with_thresholds(capacity=c, buffer_ratio=beta), grid
        )
        acc = min_acceptance(traj)
        trace.append({"c": c, "beta": beta, "inf_acceptance": acc})
        return acc

    for c in c_grid:
        b_lo, b_hi = beta_bracket if beta_bracket is not None else (0.0, 10.0 * c)
        if b_lo < 0 or b_hi < b_lo:
            raise ConfigError("beta bracket must satisfy 0 <= b_lo <= b_hi")
        acc_hi = evaluate(c, b_hi)
        max_achieved = max(max_achieved, acc_hi)
        if acc_hi < target - _FEAS_SLACK:
            trace.append({"c": c, "feasible": False, "max_acceptance": acc_hi})
            continue
        acc_lo = evaluate(c, b_lo)
        max_achieved = max(max_achieved, acc_lo)
        if acc_lo >= target - _FEAS_SLACK:
            beta_c, acc_c = b_lo, acc_lo
        else:
            lo, hi = b_lo, b_hi
            while hi - lo > tol_beta:
                mid = 0.5 * (lo + hi)
                if evaluate(c, mid) >= target - _FEAS_SLACK:
                    hi = mid
                else:
                    lo = mid
            beta_c = hi
            acc_c = evaluate(c, beta_c)
        objective = v * c + (1.0 - v) * beta_c
        trace.append(
            {
                "c": c,
                "beta_c": beta_c,
                "objective": objective,
                "inf_acceptance": acc_c,
                "feasible": True,
            }
        )
        if best is None or objective < best[0]:
            best = (objective, c, beta_c, acc_c)

    if best is None:
        raise InfeasibleError(
            "no capacity in the grid meets the acceptance constraint",
            max_achieved=max_achieved,
        )
    for c in c_grid:  # monotonicity in beta is per capacity level
        _audit_monotone(
            [e for e in trace if e.get("c") == c and "beta" in e], "beta", notes
        )
    objective, c_star, beta_star, achieved = best
    return CapacityPlan(
        c_star=c_star,
        beta_star=beta_star,
        achieved_inf_acceptance=achieved,
        objective=objective,
        alpha=alpha,
        tol_c=None,
        tol_beta=tol_beta,
        trace=trace,
        notes=notes,
    )
