"""Shared fixtures: benchmark configurations and their closed-form oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from lossfluid import _kernels
from lossfluid.model import Grid, RateFunction, ServiceDistribution, SystemConfig

LN2 = math.log(2.0)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once so timed tests measure solves only."""
    _kernels.warm_up()


@pytest.fixture(scope="session")
def exp_service():
    return ServiceDistribution.exponential(1.0)


@pytest.fixture(scope="session")
def mm_zero_cfg(exp_service):
    """Constant lambda=2, exponential(1) services, capacity 1, horizon 3.

    Closed form: rho(t) = min(2(1 - e^-t), 1); the boundary is hit at
    ln 2, after which the acceptance is 1/2 and the departure rate 1.
    """
    rate = RateFunction.constant(2.0, 3.0)
    return SystemConfig(rate=rate, service=exp_service, capacity=1.0, horizon=3.0)


@pytest.fixture(scope="session")
def mm_finite_cfg(exp_service):
    """Same load with buffer ratio 0.5: eta(t) = clip(t - ln 2, 0, 1/2)."""
    rate = RateFunction.constant(2.0, 3.0)
    return SystemConfig(
        rate=rate, service=exp_service, capacity=1.0, buffer_ratio=0.5, horizon=3.0
    )


@pytest.fixture(scope="session")
def drain_cfg(exp_service):
    """No arrivals, full system (r0 = 1.5 = capacity + buffer).

    Closed form: eta(t) = max(1/2 - t, 0); rho = 1 until the buffer
    empties at t = 1/2, then e^-(t - 1/2).
    """
    rate = RateFunction.constant(0.0, 3.0)
    return SystemConfig(
        rate=rate,
        service=exp_service,
        initial_fraction=1.5,
        initial_dist=exp_service,
        capacity=1.0,
        buffer_ratio=0.5,
        horizon=3.0,
    )


@pytest.fixture(scope="session")
def periodic_zero_cfg():
    """Periodic rate (2/3)(1 + sin(2 pi t / 10)), lognormal(-0.5, 2)."""
    rate = RateFunction.periodic_sinusoid(2.0 / 3.0, 1.0, 10.0, 10.0)
    serv = ServiceDistribution.lognormal(-0.5, 2.0)
    return SystemConfig(rate=rate, service=serv, capacity=1.0, horizon=10.0)


@pytest.fixture(scope="session")
def periodic_finite_cfg():
    """Periodic rate (2/3)(1.5 + sin(2 pi t / 10)), lognormal(-0.5, 1.2),
    buffer ratio 0.5."""
    rate = RateFunction.periodic_sinusoid(2.0 / 3.0, 1.5, 10.0, 10.0)
    serv = ServiceDistribution.lognormal(-0.5, 1.2)
    return SystemConfig(
        rate=rate, service=serv, capacity=1.0, buffer_ratio=0.5, horizon=10.0
    )


@pytest.fixture(scope="session")
def episodic_zero_cfg():
    """Single-surge rate 0.005 t (T - t) on a horizon of 20."""
    rate = RateFunction.episodic_parabola(0.005, 20.0)
    serv = ServiceDistribution.lognormal(-0.5, 2.0)
    return SystemConfig(rate=rate, service=serv, capacity=1.0, horizon=20.0)


@pytest.fixture(scope="session")
def grid_1ms():
    return Grid.from_step(3.0, 1e-3)


def mm_zero_oracle(t: np.ndarray) -> np.ndarray:
    return np.minimum(2.0 * (1.0 - np.exp(-t)), 1.0)


def mm_eta_oracle(t: np.ndarray) -> np.ndarray:
    return np.clip(t - LN2, 0.0, 0.5)


def drain_rho_oracle(t: np.ndarray) -> np.ndarray:
    return np.where(t <= 0.5, 1.0, np.exp(-(t - 0.5)))


def drain_eta_oracle(t: np.ndarray) -> np.ndarray:
    return np.maximum(0.5 - t, 0.0)
