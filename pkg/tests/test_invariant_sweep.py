"""Structural invariants over a randomized spread of configurations.

Each generated system runs through both solvers and a small simulation;
the checks are the model-free properties that must hold for any valid
input: solution bounds, mass conservation, buffer complementarity,
adjacent state transitions, zero-buffer degeneration, and exact integer
flow balance on sample paths.
"""

from __future__ import annotations

import numpy as np
import pytest

from lossfluid.model import Grid, RateFunction, ServiceDistribution, SystemConfig
from lossfluid.simulator import simulate_finite_buffer, simulate_zero_buffer
from lossfluid.vie_finite import cumulative_inflow, solve_finite_buffer
from lossfluid.vie_zero import cumulative_departures, solve_zero_buffer


def make_config(seed: int) -> SystemConfig:
    rng = np.random.default_rng(seed)
    horizon = float(rng.uniform(3.0, 8.0))
    kind = rng.integers(0, 4)
    if kind == 0:
        rate = RateFunction.constant(float(rng.uniform(0.3, 2.5)), horizon)
    elif kind == 1:
        rate = RateFunction.periodic_sinusoid(
            float(rng.uniform(0.3, 1.2)),
            float(rng.uniform(1.0, 2.0)),
            float(rng.uniform(2.0, horizon)),
            horizon,
        )
    elif kind == 2:
        rate = RateFunction.episodic_parabola(
            float(rng.uniform(0.05, 0.4)), horizon
        )
    else:
        times = np.sort(rng.uniform(0.0, horizon, 3))
        times[0] = 0.0
        values = rng.uniform(0.0, 2.0, 3)
        rate = RateFunction.piecewise_linear(times, values, horizon)

    skind = rng.integers(0, 4)
    if skind == 0:
        service = ServiceDistribution.exponential(float(rng.uniform(0.5, 2.0)))
    elif skind == 1:
        service = ServiceDistribution.lognormal(
            float(rng.uniform(-1.0, 0.3)), float(rng.uniform(0.5, 1.5))
        )
    elif skind == 2:
        service = ServiceDistribution.weibull(
            float(rng.uniform(1.0, 2.5)), float(rng.uniform(0.5, 1.5))
        )
    else:
        service = ServiceDistribution.shifted_exponential(
            float(rng.uniform(0.0, 0.3)), float(rng.uniform(0.8, 2.0))
        )

    capacity = float(rng.uniform(0.6, 1.6))
    beta = float(rng.choice([0.1, 0.25, 0.5, 1.0]))
    r0 = float(rng.uniform(0.0, capacity + beta))
    return SystemConfig(
        rate=rate,
        service=service,
        initial_fraction=r0,
        initial_dist=ServiceDistribution.exponential(1.0) if r0 > 0 else None,
        capacity=capacity,
        buffer_ratio=beta,
        horizon=horizon,
    )


@pytest.mark.parametrize("seed", range(12))
def test_solver_invariants_hold(seed):
    cfg = make_config(seed)
    grid = Grid.from_count(cfg.horizon, 4000)
    tol_mass = 10 * grid.step

    traj = solve_finite_buffer(cfg, grid)
    assert np.all(traj.rho >= 0.0) and np.all(traj.rho <= cfg.capacity)
    assert np.all(traj.eta >= 0.0) and np.all(traj.eta <= cfg.buffer_ratio)
    assert np.all(traj.d >= 0.0)
    assert np.all(np.diff(traj.Dcum) >= -1e-12)
    for z in (traj.z1, traj.z2, traj.z3):
        assert np.all(z >= 0.0) and np.all(z <= 1.0)
    # complementarity: buffer mass only at capacity
    slack = np.max(traj.eta * (cfg.capacity - traj.rho))
    assert slack <= traj.boundary_tol * max(cfg.capacity, cfg.buffer_ratio) + 1e-12
    # arrivals are always admitted to service while capacity is free
    below = traj.rho[:-1] < cfg.capacity - traj.boundary_tol
    assert np.all(traj.z1[1:][below] == 1.0)
    # adjacent state transitions only
    assert np.all(np.abs(np.diff(traj.states.astype(int))) <= 1)
    # mass conservation
    defect = np.max(
        np.abs(
            traj.rho + traj.eta + traj.Dcum
            - cfg.initial_fraction
            - cumulative_inflow(traj)
        )
    )
    assert defect < tol_mass


@pytest.mark.parametrize("seed", range(12))
def test_zero_buffer_invariants_and_degeneration(seed):
    cfg = make_config(seed)
    if cfg.initial_fraction > cfg.capacity:
        cfg = SystemConfig(
            rate=cfg.rate,
            service=cfg.service,
            initial_fraction=cfg.capacity,
            initial_dist=cfg.initial_dist,
            capacity=cfg.capacity,
            buffer_ratio=0.0,
            horizon=cfg.horizon,
        )
    else:
        cfg = cfg.with_thresholds(buffer_ratio=0.0)
    grid = Grid.from_count(cfg.horizon, 4000)

    traj = solve_zero_buffer(cfg, grid)
    assert np.all(traj.rho >= 0.0) and np.all(traj.rho <= cfg.capacity)
    assert np.all(traj.w >= 0.0) and np.all(traj.w <= 1.0)
    assert np.all(traj.d >= 0.0)
    off = traj.rho[:-1] < cfg.capacity - traj.boundary_tol
    assert np.all(traj.w[1:][off] == 1.0)
    depart = cumulative_departures(traj, cfg)
    wlam = traj.w * traj.lam
    wlam[0] = 0.0
    inflow = np.cumsum(wlam) * grid.step
    defect = np.max(np.abs(traj.rho + depart - cfg.initial_fraction - inflow))
    assert defect < 10 * grid.step

    fin = solve_finite_buffer(cfg, grid)
    assert np.max(np.abs(fin.rho - traj.rho)) < 10 * grid.step
    assert np.max(np.abs(fin.z3 - traj.w)) < 10 * grid.step


@pytest.mark.parametrize("seed", range(6))
def test_sample_path_invariants(seed):
    cfg = make_config(seed)
    path = simulate_finite_buffer(cfg, 80, 1000 + seed)
    acc_srv = np.cumsum(path.kinds == 0)
    acc_buf = np.cumsum(path.kinds == 1)
    total0 = path.initial_servers + path.initial_buffer
    balance = acc_srv + acc_buf + total0 - path.servers - path.buffers - path.departures
    assert np.all(balance == 0)
    assert np.all(path.servers <= path.c_n)
    assert np.all(path.buffers <= path.b)
    assert np.all(np.diff(path.departures) >= 0)
    blocked = path.kinds == 2
    assert np.all(path.buffers[blocked] == path.b)

    zcfg = cfg.with_thresholds(buffer_ratio=0.0)
    if zcfg.initial_fraction <= zcfg.capacity:
        z = simulate_zero_buffer(zcfg, 80, 1000 + seed)
        f = simulate_finite_buffer(zcfg, 80, 1000 + seed, b=0)
        assert np.array_equal(z.times, f.times)
        assert np.array_equal(z.kinds, f.kinds)
