"""Simulator tests: arrival generation, path laws, determinism, invariants.

Statistical checks run at fixed seeds with explicitly derived standard
errors; the stationary cross-checks use independent closed forms (the
two-state chain for a single server, promotion-gap sums for the buffer
drain).
"""

from __future__ import annotations

import numpy as np
import pytest

from lossfluid.errors import ConfigError, DomainError
from lossfluid.model import Grid, RateFunction, ServiceDistribution, SystemConfig
from lossfluid.simulator import (
    ROLE_ARRIVALS,
    ROLE_SERVICES,
    empirical_acceptance,
    ensemble_summary,
    generate_nhpp,
    run_replications,
    simulate_finite_buffer,
    simulate_zero_buffer,
    substream,
)

EXP1 = ServiceDistribution.exponential(1.0)


# -- arrival generation --------------------------------------------------


def test_nhpp_zero_rate_is_empty():
    rate = RateFunction.constant(0.0, 10.0)
    times = generate_nhpp(rate, 1000, substream(1, 0, ROLE_ARRIVALS))
    assert times.shape == (0,)


def test_nhpp_constant_rate_count():
    # n * lambda * T = 20000 per replication; over 200 seeds the
    # standardized mean deviates by at most 4 standard errors
    rate = RateFunction.constant(2.0, 10.0)
    counts = [
        generate_nhpp(rate, 1000, substream(123, r, ROLE_ARRIVALS)).shape[0]
        for r in range(200)
    ]
    se = np.sqrt(20000.0) / np.sqrt(200.0)
    assert abs(np.mean(counts) - 20000.0) <= 4.0 * se


def test_nhpp_periodic_rate_count():
    # the sinusoid integrates to zero over one period, so the expected
    # count is n * (2/3) * 10 = 10000 at n = 1500
    rate = RateFunction.periodic_sinusoid(2.0 / 3.0, 1.0, 10.0, 10.0)
    counts = [
        generate_nhpp(rate, 1500, substream(77, r, ROLE_ARRIVALS)).shape[0]
        for r in range(200)
    ]
    se = np.sqrt(10000.0) / np.sqrt(200.0)
    assert abs(np.mean(counts) - 10000.0) <= 3.0 * se


def test_nhpp_strictly_increasing():
    rate = RateFunction.periodic_sinusoid(1.0, 1.0, 5.0, 10.0)
    times = generate_nhpp(rate, 2000, substream(5, 0, ROLE_ARRIVALS))
    assert np.all(np.diff(times) > 0)
    assert times[0] >= 0.0 and times[-1] <= 10.0


def test_substreams_are_independent():
    a = substream(9, 0, ROLE_ARRIVALS).uniform(size=4)
    b = substream(9, 0, ROLE_SERVICES).uniform(size=4)
    c = substream(9, 1, ROLE_ARRIVALS).uniform(size=4)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)
    again = substream(9, 0, ROLE_ARRIVALS).uniform(size=4)
    assert np.array_equal(a, again)


# -- zero-buffer paths ----------------------------------------------------


def test_empty_system_has_no_events():
    rate = RateFunction.constant(0.0, 5.0)
    cfg = SystemConfig(rate=rate, service=EXP1, horizon=5.0)
    path = simulate_zero_buffer(cfg, 100, 7)
    assert path.times.shape == (0,)
    assert path.occupancy(np.array([0.0, 2.5, 5.0])).tolist() == [0.0, 0.0, 0.0]
    assert path.admits(np.array([1.0])).all()


def test_path_determinism_bit_exact():
    rate = RateFunction.constant(2.0, 10.0)
    cfg = SystemConfig(rate=rate, service=EXP1, horizon=10.0)
    a = simulate_zero_buffer(cfg, 200, 42)
    b = simulate_zero_buffer(cfg, 200, 42)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.kinds, b.kinds)
    assert np.array_equal(a.servers, b.servers)
    c = simulate_zero_buffer(cfg, 200, 43)
    assert not np.array_equal(a.times, c.times)


def test_flow_balance_exact():
    rate = RateFunction.periodic_sinusoid(1.0, 1.2, 4.0, 8.0)
    cfg = SystemConfig(
        rate=rate, service=EXP1, initial_fraction=0.5, initial_dist=EXP1, horizon=8.0
    )
    path = simulate_zero_buffer(cfg, 150, 11)
    accepted = np.cumsum(path.kinds == 0)
    balance = accepted + path.initial_servers - path.servers - path.departures
    assert np.all(balance == 0)


def test_blocking_only_when_full():
    rate = RateFunction.constant(3.0, 6.0)
    cfg = SystemConfig(rate=rate, service=EXP1, horizon=6.0)
    path = simulate_zero_buffer(cfg, 50, 3)
    blocked = path.kinds == 2
    # blocked arrivals leave the count unchanged at capacity
    assert np.all(path.servers[blocked] == path.c_n)


def test_single_server_stationary_occupancy():
    # M/M/1/1 alternating renewal: P(busy) = lambda / (lambda + mu) = 2/3.
    # Snapshot at t = 37 over 400 paths: 3 standard errors ~ 0.0707.
    rate = RateFunction.constant(2.0, 40.0)
    cfg = SystemConfig(rate=rate, service=EXP1, horizon=40.0)
    busy = [
        float(simulate_zero_buffer(cfg, 1, 1000, replication=r).occupancy(37.0))
        for r in range(400)
    ]
    p_hat = np.mean(busy)
    se = np.sqrt((2.0 / 3.0) * (1.0 / 3.0) / 400.0)
    assert abs(p_hat - 2.0 / 3.0) <= 3.0 * se


# -- finite-buffer paths ---------------------------------------------------


def test_b_zero_reproduces_zero_buffer_exactly():
    rate = RateFunction.constant(2.0, 10.0)
    cfg = SystemConfig(rate=rate, service=EXP1, horizon=10.0)
    z = simulate_zero_buffer(cfg, 200, 42)
    f = simulate_finite_buffer(cfg, 200, 42, b=0)
    assert np.array_equal(z.times, f.times)
    assert np.array_equal(z.kinds, f.kinds)
    assert np.array_equal(z.servers, f.servers)
    assert np.all(f.buffers == 0)


def test_finite_flow_balance_and_work_conservation():
    rate = RateFunction.constant(2.0, 10.0)
    cfg = SystemConfig(
        rate=rate,
        service=EXP1,
        initial_fraction=1.1,
        initial_dist=EXP1,
        buffer_ratio=0.3,
        horizon=10.0,
    )
    path = simulate_finite_buffer(cfg, 150, 11)
    acc_srv = np.cumsum(path.kinds == 0)
    acc_buf = np.cumsum(path.kinds == 1)
    total0 = path.initial_servers + path.initial_buffer
    balance = acc_srv + acc_buf + total0 - path.servers - path.buffers - path.departures
    assert np.all(balance == 0)
    # an idle server may coexist with buffered work only within a
    # departure record whose promotion follows at the same timestamp
    idle_with_queue = np.where((path.servers < path.c_n) & (path.buffers > 0))[0]
    for i in idle_with_queue:
        assert path.kinds[i] == 3
        assert path.kinds[i + 1] == 4
        assert path.times[i + 1] == path.times[i]
    # blocking requires a full buffer
    blocked = path.kinds == 2
    assert np.all(path.buffers[blocked] == path.b)
    assert np.all(path.servers[blocked] == path.c_n)


def test_fifo_buffer_discipline():
    # replay the log: promotions must serve buffer entries in order
    rate = RateFunction.constant(3.0, 8.0)
    cfg = SystemConfig(rate=rate, service=EXP1, buffer_ratio=0.2, horizon=8.0)
    path = simulate_finite_buffer(cfg, 60, 5)
    entries = 0
    exits = 0
    queue = 0
    for kind in path.kinds:
        if kind == 1:
            entries += 1
            queue += 1
        elif kind == 4:
            exits += 1
            queue -= 1
            assert queue >= 0
            assert exits <= entries + path.initial_buffer
    assert queue == path.buffers[-1] - path.initial_buffer


def test_promotion_drain_time():
    # full system with no arrivals: the buffer empties after floor(n*beta)
    # departures; at full occupancy departures form a Poisson stream of
    # rate n, so the mean drain time is b/n = beta (exponential services)
    beta = 0.2
    rate = RateFunction.constant(0.0, 5.0)
    cfg = SystemConfig(
        rate=rate,
        service=EXP1,
        initial_fraction=1.0 + beta,
        initial_dist=EXP1,
        buffer_ratio=beta,
        horizon=5.0,
    )
    n = 100
    drain_times = []
    for r in range(200):
        path = simulate_finite_buffer(cfg, n, 314, replication=r)
        k = np.argmax(path.buffers == 0)
        drain_times.append(path.times[k])
    drain_times = np.array(drain_times)
    # sum of b iid exp(n) gaps: mean beta, sd sqrt(b)/n
    se = (np.sqrt(n * beta) / n) / np.sqrt(200.0)
    assert abs(drain_times.mean() - beta) <= 3.0 * se


def test_large_system_tracks_finite_fluid():
    # single paths at n = 5000 track the coupled fluid solution: both the
    # in-service and buffer components stay within 0.05 in sup norm
    from lossfluid.vie_finite import solve_finite_buffer

    rate = RateFunction.periodic_sinusoid(2.0 / 3.0, 1.5, 10.0, 10.0)
    serv = ServiceDistribution.lognormal(-0.5, 1.2)
    cfg = SystemConfig(rate=rate, service=serv, buffer_ratio=0.5, horizon=10.0)
    grid = Grid.from_count(10.0, 10_000)
    fluid = solve_finite_buffer(cfg, grid)
    t = grid.points()
    for rep in range(3):
        path = simulate_finite_buffer(cfg, 5000, 42, replication=rep)
        assert np.max(np.abs(path.occupancy(t) - fluid.rho)) < 0.05
        assert np.max(np.abs(path.queue(t) - fluid.eta)) < 0.05


# -- replication sets -----------------------------------------------------


def test_replication_set_worker_independence():
    rate = RateFunction.periodic_sinusoid(2.0 / 3.0, 1.0, 10.0, 10.0)
    serv = ServiceDistribution.lognormal(-0.5, 2.0)
    cfg = SystemConfig(rate=rate, service=serv, horizon=10.0)
    grid = Grid.from_count(10.0, 500)
    a = run_replications(cfg, 100, 8, 21, grid, workers=1)
    b = run_replications(cfg, 100, 8, 21, grid, workers=4)
    assert np.array_equal(a.occupancy, b.occupancy)
    assert np.array_equal(a.admits, b.admits)


def test_empirical_acceptance_trivial_cases():
    rate = RateFunction.constant(0.0, 4.0)
    cfg = SystemConfig(rate=rate, service=EXP1, horizon=4.0)
    grid = Grid.from_count(4.0, 100)
    reps = run_replications(cfg, 50, 5, 3, grid)
    acc = empirical_acceptance(reps, grid)
    assert np.all(acc == 1.0)
    with pytest.raises(DomainError):
        empirical_acceptance(reps, Grid.from_count(4.0, 50))


def test_fully_saturated_acceptance_zero():
    # overwhelming load on one server: by t >= 1 every path is full
    rate = RateFunction.constant(50.0, 2.0)
    serv = ServiceDistribution.exponential(0.01)
    cfg = SystemConfig(rate=rate, service=serv, horizon=2.0)
    grid = Grid.from_count(2.0, 10)
    reps = run_replications(cfg, 1, 20, 8, grid)
    acc = empirical_acceptance(reps, grid)
    assert np.all(acc[grid.points() >= 1.0] == 0.0)


def test_ensemble_summary_shape():
    rate = RateFunction.constant(1.0, 3.0)
    cfg = SystemConfig(rate=rate, service=EXP1, buffer_ratio=0.2, horizon=3.0)
    grid = Grid.from_count(3.0, 30)
    reps = run_replications(cfg, 40, 6, 12, grid)
    summary = ensemble_summary(reps)
    assert summary["replications"] == 6
    assert len(summary["empirical_acceptance"]) == 31
    assert len(summary["occupancy"]["q50"]) == 31


def test_event_log_csv(tmp_path):
    rate = RateFunction.constant(2.0, 3.0)
    cfg = SystemConfig(rate=rate, service=EXP1, buffer_ratio=0.1, horizon=3.0)
    path = simulate_finite_buffer(cfg, 30, 2)
    out = tmp_path / "log.csv"
    path.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "time,kind,server_count,buffer_count,departures"
    assert len(lines) == path.times.shape[0] + 1
    kinds = {ln.split(",")[1] for ln in lines[1:]}
    assert kinds <= {
        "arrival-accepted-to-service",
        "arrival-accepted-to-buffer",
        "arrival-blocked",
        "departure",
        "promotion",
    }


def test_invalid_inputs():
    rate = RateFunction.constant(1.0, 2.0)
    cfg = SystemConfig(rate=rate, service=EXP1, horizon=2.0)
    with pytest.raises(ConfigError):
        simulate_zero_buffer(cfg, 0, 1)
    with pytest.raises(ConfigError):
        simulate_finite_buffer(cfg, 10, 1, b=-1)
    with pytest.raises(ConfigError):
        run_replications(cfg, 10, 0, 1, Grid.from_count(2.0, 10))
    with pytest.raises(ConfigError):
        substream(-1, 0, 0)
