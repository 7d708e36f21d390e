"""Seeded discrete-event simulation of the scaled loss systems.

Simulates the n-th system (``floor(n*c)`` servers, optionally
``floor(n*beta)`` buffer spaces) with nonhomogeneous Poisson arrivals of
rate ``n * lambda(t)`` and i.i.d. service durations, producing scaled
sample paths for comparison against the fluid solvers.

Randomness discipline
---------------------
Every path owns independent sub-streams derived from
``(master_seed, replication, role)`` through a counter-based seed
sequence; see ``substream``.  Roles separate arrivals, services drawn at
arrival, initial residual work, and fresh services drawn at buffer
promotions.  All raw variates are drawn up front in a fixed order, so a
path is a pure function of ``(config, n, b, seed, replication)`` -
bit-identical across runs, thread counts, and kernel backends.

Arrivals use thinning: a homogeneous process at the rate bound is
generated via the order-statistics construction, then each candidate is
kept with probability ``lambda(t)/rate_bound``.

Event order at equal timestamps is departure, then promotion, then
arrival (promotions are atomic with the departure that triggers them and
share its timestamp).  Promoted customers draw a fresh service duration
at promotion time.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError
from .model import Grid, RateFunction, SystemConfig

__all__ = [
    "ROLE_ARRIVALS",
    "ROLE_SERVICES",
    "ROLE_INITIAL",
    "ROLE_PROMOTIONS",
    "substream",
    "generate_nhpp",
    "SimPath",
    "simulate_zero_buffer",
    "simulate_finite_buffer",
    "ReplicationSet",
    "run_replications",
    "empirical_acceptance",
]

ROLE_ARRIVALS = 0
ROLE_SERVICES = 1
ROLE_INITIAL = 2
ROLE_PROMOTIONS = 3

KIND_NAMES = (
    "arrival-accepted-to-service",
    "arrival-accepted-to-buffer",
    "arrival-blocked",
    "departure",
    "promotion",
)


def substream(master_seed: int, replication: int, role: int) -> np.random.Generator:
    """Independent generator for ``(master_seed, replication, role)``."""
    if master_seed < 0 or replication < 0:
        raise ConfigError("seeds and replication indices must be nonnegative")
    seq = np.random.SeedSequence(entropy=(int(master_seed), int(replication), int(role)))
    return np.random.Generator(np.random.PCG64(seq))


def generate_nhpp(
    rate: RateFunction, n: int, rng: np.random.Generator, horizon: float | None = None
) -> np.ndarray:
    """Arrival times of a Poisson process with rate ``n * lambda(t)``.

    Thinning of a homogeneous process at rate ``n * rate_bound``:
    candidates are uniform order statistics on the horizon, each kept
    with probability ``lambda(t)/rate_bound``.  Output is strictly
    increasing (exact float ties, probability zero, are nudged apart).
    """
    horizon = rate.horizon if horizon is None else horizon
    bound = rate.rate_bound
    if bound == 0.0:
        return np.empty(0)
    count = rng.poisson(n * bound * horizon)
    times = np.sort(rng.uniform(0.0, horizon, count))
    keep = rng.uniform(0.0, bound, count) < rate(times)
    out = times[keep]
    for i in range(1, out.shape[0]):  # enforce strict monotonicity
        if out[i] <= out[i - 1]:
            out[i] = np.nextafter(out[i - 1], math.inf)
    return out


@dataclass(frozen=True)
class SimPath:
    """One scaled sample path as an event log plus step functions.

    ``servers``, ``buffers``, ``departures`` hold the post-event counts;
    the pre-event (left-limit) state is recoverable from the previous
    record.  Scaled paths divide by ``n``.  Zero-buffer paths have
    ``b = 0`` and an identically zero buffer column.
    """

    n: int
    c_n: int
    b: int
    seed: int
    replication: int
    horizon: float
    times: np.ndarray
    kinds: np.ndarray
    servers: np.ndarray
    buffers: np.ndarray
    departures: np.ndarray
    initial_servers: int
    initial_buffer: int

    def _values_at(self, values: np.ndarray, t, initial: int, side: str) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side=side) - 1
        vals = np.concatenate(([initial], values))
        return vals[idx + 1]

    def occupancy(self, t, left: bool = False) -> np.ndarray:
        """Scaled number in service; right-continuous, or the left limit."""
        side = "left" if left else "right"
        return self._values_at(self.servers, t, self.initial_servers, side) / self.n

    def queue(self, t, left: bool = False) -> np.ndarray:
        """Scaled number in buffer; right-continuous, or the left limit."""
        side = "left" if left else "right"
        return self._values_at(self.buffers, t, self.initial_buffer, side) / self.n

    def departures_scaled(self, t, left: bool = False) -> np.ndarray:
        side = "left" if left else "right"
        return self._values_at(self.departures, t, 0, side) / self.n

    def admits(self, t) -> np.ndarray:
        """Whether an arrival at ``t`` would be admitted (left-limit state).

        True when a server is free or the buffer has room.
        """
        t = np.asarray(t, dtype=float)
        srv = self._values_at(self.servers, t, self.initial_servers, "left")
        buf = self._values_at(self.buffers, t, self.initial_buffer, "left")
        return (srv < self.c_n) | (buf < self.b)

    def to_csv(self, path: str | Path) -> None:
        """Event log as ``time,kind,server_count,buffer_count,departures``."""
        with open(path, "w", newline="") as fh:
            fh.write("time,kind,server_count,buffer_count,departures\n")
            for i in range(self.times.shape[0]):
                fh.write(
                    "%.17g,%s,%d,%d,%d\n"
                    % (
                        self.times[i],
                        KIND_NAMES[self.kinds[i]],
                        self.servers[i],
                        self.buffers[i],
                        self.departures[i],
                    )
                )


def _initial_counts(cfg: SystemConfig, n: int, b: int) -> tuple[int, int, int]:
    c_n = int(math.floor(n * cfg.capacity + 1e-9))
    n0 = int(math.floor(n * cfg.initial_fraction + 1e-9))
    s0 = min(n0, c_n)
    q0 = min(n0 - s0, b)
    return c_n, s0, q0


def simulate_zero_buffer(
    cfg: SystemConfig, n: int, seed: int, replication: int = 0
) -> SimPath:
    """Simulate the zero-buffer system with ``floor(n*c)`` servers."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if cfg.buffer_ratio != 0.0:
        raise ConfigError("zero-buffer simulator requires buffer_ratio = 0")
    c_n, s0, _ = _initial_counts(cfg, n, 0)
    arrivals = generate_nhpp(
        cfg.rate, n, substream(seed, replication, ROLE_ARRIVALS), cfg.horizon
    )
    services = np.asarray(
        cfg.service.sample(substream(seed, replication, ROLE_SERVICES), arrivals.shape[0]),
        dtype=float,
    )
    if s0 > 0:
        resid = np.asarray(
            cfg.initial_dist.sample(substream(seed, replication, ROLE_INITIAL), s0),
            dtype=float,
        )
    else:
        resid = np.empty(0)

    cap = 2 * arrivals.shape[0] + 2 * s0 + 4
    ev_time = np.empty(cap)
    ev_kind = np.empty(cap, np.int8)
    ev_srv = np.empty(cap, np.int64)
    ev_dep = np.empty(cap, np.int64)
    m = _kernels.zero_sim(
        arrivals, services, resid, c_n, cfg.horizon, ev_time, ev_kind, ev_srv, ev_dep
    )
    return SimPath(
        n=n,
        c_n=c_n,
        b=0,
        seed=seed,
        replication=replication,
        horizon=cfg.horizon,
        times=ev_time[:m].copy(),
        kinds=ev_kind[:m].copy(),
        servers=ev_srv[:m].copy(),
        buffers=np.zeros(m, np.int64),
        departures=ev_dep[:m].copy(),
        initial_servers=s0,
        initial_buffer=0,
    )


def simulate_finite_buffer(
    cfg: SystemConfig, n: int, seed: int, b: int | None = None, replication: int = 0
) -> SimPath:
    """Simulate the finite-buffer system; ``b`` defaults to ``floor(n*beta)``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if b is None:
        b = int(math.floor(n * cfg.buffer_ratio + 1e-9))
    if b < 0:
        raise ConfigError("buffer count must be nonnegative")
    c_n, s0, q0 = _initial_counts(cfg, n, b)
    arrivals = generate_nhpp(
        cfg.rate, n, substream(seed, replication, ROLE_ARRIVALS), cfg.horizon
    )
    services = np.asarray(
        cfg.service.sample(substream(seed, replication, ROLE_SERVICES), arrivals.shape[0]),
        dtype=float,
    )
    if s0 > 0:
        resid = np.asarray(
            cfg.initial_dist.sample(substream(seed, replication, ROLE_INITIAL), s0),
            dtype=float,
        )
    else:
        resid = np.empty(0)
    promo = np.asarray(
        cfg.service.sample(
            substream(seed, replication, ROLE_PROMOTIONS), arrivals.shape[0] + q0
        ),
        dtype=float,
    )

    cap = 4 * arrivals.shape[0] + 2 * s0 + 3 * q0 + 8
    ev_time = np.empty(cap)
    ev_kind = np.empty(cap, np.int8)
    ev_srv = np.empty(cap, np.int64)
    ev_buf = np.empty(cap, np.int64)
    ev_dep = np.empty(cap, np.int64)
    m, _ = _kernels.finite_sim(
        arrivals,
        services,
        promo,
        resid,
        q0,
        c_n,
        b,
        cfg.horizon,
        ev_time,
        ev_kind,
        ev_srv,
        ev_buf,
        ev_dep,
    )
    return SimPath(
        n=n,
        c_n=c_n,
        b=b,
        seed=seed,
        replication=replication,
        horizon=cfg.horizon,
        times=ev_time[:m].copy(),
        kinds=ev_kind[:m].copy(),
        servers=ev_srv[:m].copy(),
        buffers=ev_buf[:m].copy(),
        departures=ev_dep[:m].copy(),
        initial_servers=s0,
        initial_buffer=q0,
    )


@dataclass(frozen=True)
class ReplicationSet:
    """R seeded sample paths of one configuration, sampled onto a grid.

    Path ``r`` uses the sub-streams of ``(master_seed, r, role)``, so the
    set is reproducible bit-exactly from ``(config, n, b, master_seed)``.
    Grid samples are right-continuous; ``admits`` holds the left-limit
    admission indicator used for acceptance statistics.  Full event logs
    are retained only when ``keep_paths`` was set.
    """

    R: int
    master_seed: int
    n: int
    b: int
    grid: Grid
    occupancy: np.ndarray  # (R, N+1) scaled number in service
    queue: np.ndarray  # (R, N+1) scaled number in buffer
    departures: np.ndarray  # (R, N+1) scaled cumulative departures
    admits: np.ndarray  # (R, N+1) uint8 left-limit admission indicator
    paths: tuple | None = None


def _simulate_one(cfg: SystemConfig, n: int, b: int, master_seed: int, r: int) -> SimPath:
    if b == 0 and cfg.buffer_ratio == 0.0:
        return simulate_zero_buffer(cfg, n, master_seed, replication=r)
    return simulate_finite_buffer(cfg, n, master_seed, b=b, replication=r)


def run_replications(
    cfg: SystemConfig,
    n: int,
    R: int,
    master_seed: int,
    grid: Grid,
    b: int | None = None,
    workers: int = 1,
    keep_paths: bool = False,
) -> ReplicationSet:
    """Run R independent replications and sample them onto ``grid``.

    Replications are embarrassingly parallel; results are merged by
    replication index, so the outcome does not depend on ``workers``.
    """
    if R < 1:
        raise ConfigError("R must be >= 1")
    if b is None:
        b = int(math.floor(n * cfg.buffer_ratio + 1e-9))
    t = grid.points()
    shape = (R, t.shape[0])
    occ = np.empty(shape)
    que = np.empty(shape)
    dep = np.empty(shape)
    adm = np.empty(shape, np.uint8)
    paths: list[SimPath | None] = [None] * R

    def work(r: int) -> None:
        path = _simulate_one(cfg, n, b, master_seed, r)
        occ[r] = path.occupancy(t)
        que[r] = path.queue(t)
        dep[r] = path.departures_scaled(t)
        adm[r] = path.admits(t)
        if keep_paths:
            paths[r] = path

    if workers <= 1:
        for r in range(R):
            work(r)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(R)))

    return ReplicationSet(
        R=R,
        master_seed=master_seed,
        n=n,
        b=b,
        grid=grid,
        occupancy=occ,
        queue=que,
        departures=dep,
        admits=adm,
        paths=tuple(paths) if keep_paths else None,
    )


def empirical_acceptance(reps: ReplicationSet, grid: Grid) -> np.ndarray:
    """Fraction of replications whose state just before each grid point
    admits an arrival; equals one minus the empirical blocking fraction."""
    if reps.R < 1 or reps.admits.shape[0] < 1:
        raise DomainError("empirical acceptance of an empty replication set")
    if grid != reps.grid:
        raise DomainError("grid does not match the replication set's grid")
    return reps.admits.mean(axis=0)


def ensemble_summary(reps: ReplicationSet) -> dict:
    """JSON-ready summary: per-point mean/quantiles of the scaled paths
    and the empirical acceptance."""
    qs = (0.05, 0.5, 0.95)

    def stats(a: np.ndarray) -> dict:
        quant = np.quantile(a, qs, axis=0)
        return {
            "mean": a.mean(axis=0).tolist(),
            "q05": quant[0].tolist(),
            "q50": quant[1].tolist(),
            "q95": quant[2].tolist(),
        }

    return {
        "replications": reps.R,
        "master_seed": reps.master_seed,
        "n": reps.n,
        "buffer": reps.b,
        "grid": {"step": reps.grid.step, "count": reps.grid.count},
        "occupancy": stats(reps.occupancy),
        "queue": stats(reps.queue),
        "departures": stats(reps.departures),
        "empirical_acceptance": empirical_acceptance(reps, reps.grid).tolist(),
    }
