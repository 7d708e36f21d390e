"""Simulation-versus-fluid comparison harness.

Quantifies how closely scaled sample paths track the fluid solution:
per-replication sup-norm gaps of each path component (median over
seeds), and the pointwise discrepancy between the empirical acceptance
fraction and the fluid acceptance function.

Acceptance comparisons are restricted to arrival-active grid points
(``lambda(t) > 1e-6``): the acceptance function is only identified where
arrivals occur, and the limit statement holds arrival-rate-almost
everywhere.  The comparison uses the left-limit state of each path, the
state an arriving customer would see.

Reports serialize to JSON deterministically; wall-clock runtime is kept
on the in-memory report but excluded from the file by default so that
repeated runs produce byte-identical outputs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .model import Grid, SystemConfig
from .simulator import ReplicationSet, empirical_acceptance, run_replications
from .vie_finite import solve_finite_buffer
from .vie_zero import solve_zero_buffer

__all__ = [
    "LAMBDA_ACTIVE_EPS",
    "sup_norm_gap",
    "acceptance_gap",
    "ConvergenceReport",
    "convergence_report",
    "write_figure_data",
]

LAMBDA_ACTIVE_EPS = 1e-6


def sup_norm_gap(sim_values: np.ndarray, fluid_values: np.ndarray) -> float:
    """Maximum absolute difference of two trajectories on a shared grid."""
    a = np.asarray(sim_values, dtype=float)
    b = np.asarray(fluid_values, dtype=float)
    if a.shape != b.shape:
        raise DomainError(
            f"mismatched horizons/grids: shapes {a.shape} vs {b.shape}"
        )
    if a.size == 0:
        raise DomainError("empty trajectories")
    return float(np.max(np.abs(a - b)))


def acceptance_gap(
    empirical: np.ndarray, fluid_acceptance: np.ndarray, lam: np.ndarray
) -> float:
    """Max pointwise acceptance discrepancy over arrival-active points.

    Points with ``lambda(t) <= 1e-6`` are excluded; returns 0 when no
    point is active.
    """
    emp = np.asarray(empirical, dtype=float)
    flu = np.asarray(fluid_acceptance, dtype=float)
    if emp.shape != flu.shape or emp.shape != np.asarray(lam).shape:
        raise DomainError("acceptance arrays must share the grid")
    mask = np.asarray(lam) > LAMBDA_ACTIVE_EPS
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(emp - flu)[mask]))


@dataclass
class ConvergenceReport:
    """Gap statistics for a ladder of system sizes.

    ``entries`` holds one record per ``n`` (ascending): median-over-seeds
    sup-norm gap of each scaled component and the max acceptance
    discrepancy over arrival-active grid points.  Medians are used
    rather than means for robustness at small replication counts.
    """

    config: dict
    grid: dict
    n_values: list[int]
    replications: int
    master_seed: int
    entries: list[dict]
    seeds_used: list[int]
    runtime_seconds: float | None = None
    finite_buffer: bool = False
    _arrays: dict = field(default_factory=dict, repr=False)

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "config": self.config,
            "grid": self.grid,
            "n_values": self.n_values,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "finite_buffer": self.finite_buffer,
            "entries": self.entries,
            "seeds_used": self.seeds_used,
        }
        if include_runtime:
            out["runtime_seconds"] = self.runtime_seconds
        return out

    def to_json(self, path: str | Path, include_runtime: bool = False) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_runtime), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _component_gaps(reps: ReplicationSet, fluid, finite: bool) -> dict:
    """Median-over-replications sup gaps for each scaled component."""
    occ = np.max(np.abs(reps.occupancy - fluid.rho[None, :]), axis=1)
    out = {"occupancy_gap_median": float(np.median(occ))}
    if finite:
        que = np.max(np.abs(reps.queue - fluid.eta[None, :]), axis=1)
        dep = np.max(np.abs(reps.departures - fluid.Dcum[None, :]), axis=1)
        out["queue_gap_median"] = float(np.median(que))
        out["departures_gap_median"] = float(np.median(dep))
    return out


def convergence_report(
    cfg: SystemConfig,
    n_list: list[int],
    R: int,
    master_seed: int,
    grid: Grid,
    workers: int = 1,
) -> ConvergenceReport:
    """Run R replications at each n and compare against the fluid solution.

    ``n_list`` must be nonempty and ascending.  The fluid system is
    solved once on ``grid``; each replication is sampled onto the same
    grid and its sup-norm gaps recorded.  Also keeps the raw per-n mean
    paths for figure export.
    """
    if not n_list:
        raise ConfigError("n_list must be nonempty")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("n_list must be strictly ascending")
    t_start = time.perf_counter()
    finite = cfg.buffer_ratio > 0.0
    if finite:
        fluid = solve_finite_buffer(cfg, grid)
        fluid_accept = fluid.z3
    else:
        fluid = solve_zero_buffer(cfg, grid)
        fluid_accept = fluid.w

    entries = []
    arrays = {"fluid": fluid}
    for n in n_list:
        reps = run_replications(cfg, n, R, master_seed, grid, workers=workers)
        emp = empirical_acceptance(reps, grid)
        entry = {"n": n}
        entry.update(_component_gaps(reps, fluid, finite))
        entry["acceptance_gap_max"] = acceptance_gap(emp, fluid_accept, fluid.lam)
        entries.append(entry)
        arrays[n] = {
            "occupancy_mean": reps.occupancy.mean(axis=0),
            "queue_mean": reps.queue.mean(axis=0),
            "departures_mean": reps.departures.mean(axis=0),
            "empirical_acceptance": emp,
        }

    return ConvergenceReport(
        config=cfg.summary(),
        grid={"step": grid.step, "count": grid.count, "horizon": grid.horizon},
        n_values=list(n_list),
        replications=R,
        master_seed=master_seed,
        entries=entries,
        seeds_used=list(range(R)),
        runtime_seconds=time.perf_counter() - t_start,
        finite_buffer=finite,
        _arrays=arrays,
    )


def write_figure_data(report: ConvergenceReport, out_dir: str | Path, stem: str) -> list[Path]:
    """Write per-figure CSV bundles (occupancy and acceptance per n).

    Files are named ``fig_<stem>_<component>_n<k>.csv`` and contain the
    grid, the fluid solution, and the ensemble means, ready for external
    plotting.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fluid = report._arrays["fluid"]
    finite = report.finite_buffer
    step = report.grid["step"]
    count = report.grid["count"]
    t = np.linspace(0.0, step * count, count + 1)
    written: list[Path] = []
    for n in report.n_values:
        data = report._arrays[n]
        occ_path = out_dir / f"fig_{stem}_occupancy_n{n}.csv"
        with open(occ_path, "w", newline="") as fh:
            if finite:
                fh.write("t,rho_fluid,eta_fluid,occupancy_mean,queue_mean\n")
                for i in range(t.shape[0]):
                    fh.write(
                        "%.17g,%.17g,%.17g,%.17g,%.17g\n"
                        % (
                            t[i],
                            fluid.rho[i],
                            fluid.eta[i],
                            data["occupancy_mean"][i],
                            data["queue_mean"][i],
                        )
                    )
            else:
                fh.write("t,rho_fluid,occupancy_mean\n")
                for i in range(t.shape[0]):
                    fh.write(
                        "%.17g,%.17g,%.17g\n"
                        % (t[i], fluid.rho[i], data["occupancy_mean"][i])
                    )
        written.append(occ_path)

        acc_path = out_dir / f"fig_{stem}_acceptance_n{n}.csv"
        fluid_acc = fluid.z3 if finite else fluid.w
        with open(acc_path, "w", newline="") as fh:
            fh.write("t,acceptance_fluid,acceptance_empirical,lam\n")
            for i in range(t.shape[0]):
                fh.write(
                    "%.17g,%.17g,%.17g,%.17g\n"
                    % (t[i], fluid_acc[i], data["empirical_acceptance"][i], fluid.lam[i])
                )
        written.append(acc_path)
    return written
