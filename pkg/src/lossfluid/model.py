"""System primitives: arrival-rate functions, service distributions, configs.

Everything downstream (fluid solvers, simulator, optimizers) is expressed
in terms of three ingredients:

* an arrival-rate trajectory ``lambda(t)`` on a finite horizon, with a
  known upper bound used both for thinning in the simulator and for
  tolerance scaling in the solvers;
* a service-time distribution ``G`` with evaluable cdf/pdf/survival/hazard
  and a sampler (a second instance of the same type serves as the
  initial-work distribution ``F``);
* a system configuration bundling rate, distributions, the initial
  occupancy fraction, the capacity threshold ``c`` and buffer ratio
  ``beta``.

All types are immutable after construction and safe to share across
threads.  Random streams are owned by one consumer at a time; see
``lossfluid.simulator.substream`` for the splitting scheme.

Lognormal convention: parameters are the mean and standard deviation of
the *underlying normal* (so ``lognormal(-0.5, 2)`` has median
``exp(-0.5)`` and log-sd 2).  Deterministic service times are represented
by the shift of a ``deterministic-shifted-exponential`` whose exponential
part degenerates (``rate = inf``); its density is then a point mass and
pdf/hazard evaluation is refused.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DomainError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "RateFunction",
    "ServiceDistribution",
    "SystemConfig",
    "Grid",
    "load_config",
    "config_from_dict",
]

RATE_KINDS = (
    "constant",
    "periodic-sinusoid",
    "episodic-parabola",
    "piecewise-linear",
    "table",
)

SERVICE_KINDS = (
    "exponential",
    "lognormal",
    "weibull",
    "deterministic-shifted-exponential",
)

# Number of points in the construction-time scan verifying 0 <= rate <= bound.
_SCAN_POINTS = 10_000


def _normal_cdf(x):
    return 0.5 * (1.0 + erf(np.asarray(x, dtype=float) / math.sqrt(2.0)))


def _normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class RateFunction:
    """Arrival-rate trajectory ``lambda(t)`` on ``[0, horizon]``.

    ``params`` is kind-specific; use the classmethod constructors rather
    than building instances by hand.  ``rate_bound`` is a true upper bound
    of the rate over the horizon (exact for the closed-form kinds), which
    the thinning sampler and the solvers' boundary tolerances rely on.
    """

    kind: str
    params: tuple
    horizon: float
    rate_bound: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ConfigError(f"unknown rate kind {self.kind!r}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError("rate horizon must be positive and finite")
        exact = self._exact_bound()
        bound = self.rate_bound if self.rate_bound else exact
        if bound < 0 or not math.isfinite(bound):
            raise ConfigError("rate_bound must be finite and nonnegative")
        object.__setattr__(self, "rate_bound", float(bound))
        scan = self(np.linspace(0.0, self.horizon, _SCAN_POINTS + 1))
        if not np.all(np.isfinite(scan)):
            raise ConfigError("rate function must be finite on [0, horizon]")
        if scan.min() < 0:
            raise ConfigError("rate function must be nonnegative on [0, horizon]")
        if scan.max() > self.rate_bound * (1 + 1e-12) + 1e-300:
            raise ConfigError(
                f"rate exceeds rate_bound: {scan.max():.6g} > {self.rate_bound:.6g}"
            )

    # -- constructors ---------------------------------------------------

    @classmethod
    def constant(cls, value: float, horizon: float) -> "RateFunction":
        if value < 0:
            raise ConfigError("constant rate must be nonnegative")
        return cls("constant", (float(value),), float(horizon))

    @classmethod
    def periodic_sinusoid(
        cls, scale: float, offset: float, period: float, horizon: float
    ) -> "RateFunction":
        """``lambda(t) = scale * (offset + sin(2*pi*t / period))``."""
        if scale < 0:
            raise ConfigError("periodic scale must be nonnegative")
        if offset < 1:
            raise ConfigError("periodic offset must be >= 1 to keep the rate nonnegative")
        if period <= 0:
            raise ConfigError("periodic period must be positive")
        return cls(
            "periodic-sinusoid",
            (float(scale), float(offset), float(period)),
            float(horizon),
        )

    @classmethod
    def episodic_parabola(cls, coefficient: float, horizon: float) -> "RateFunction":
        """``lambda(t) = coefficient * t * (horizon - t)``."""
        if coefficient < 0:
            raise ConfigError("episodic coefficient must be nonnegative")
        return cls("episodic-parabola", (float(coefficient),), float(horizon))

    @classmethod
    def piecewise_linear(cls, times, values, horizon: float) -> "RateFunction":
        """Linear interpolation through ``(times, values)`` breakpoints."""
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ConfigError("piecewise-linear needs matching times/values, >= 2 points")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("piecewise-linear times must be strictly increasing")
        if v.min() < 0:
            raise ConfigError("piecewise-linear values must be nonnegative")
        return cls(
            "piecewise-linear",
            (tuple(t.tolist()), tuple(v.tolist())),
            float(horizon),
        )

    @classmethod
    def table(cls, times, values, horizon: float) -> "RateFunction":
        """Right-continuous step function: value holds from its time on."""
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 1:
            raise ConfigError("table needs matching times/values, >= 1 point")
        if t[0] != 0.0:
            raise ConfigError("table must start at time 0")
        if np.any(np.diff(t) <= 0):
            raise ConfigError("table times must be strictly increasing")
        if v.min() < 0:
            raise ConfigError("table values must be nonnegative")
        return cls("table", (tuple(t.tolist()), tuple(v.tolist())), float(horizon))

    # -- evaluation -----------------------------------------------------

    def _exact_bound(self) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "periodic-sinusoid":
            scale, offset, _ = self.params
            return scale * (offset + 1.0)
        if self.kind == "episodic-parabola":
            return self.params[0] * self.horizon**2 / 4.0
        times, values = self.params
        return max(values)

    def __call__(self, t):
        """Evaluate ``lambda(t)``; ``t`` may be a scalar or an array.

        Raises ``DomainError`` outside ``[0, horizon]``.
        """
        arr = np.asarray(t, dtype=float)
        if arr.size and (arr.min() < -1e-12 or arr.max() > self.horizon * (1 + 1e-12)):
            raise DomainError(
                f"rate evaluated outside [0, {self.horizon}]: "
                f"[{arr.min():.6g}, {arr.max():.6g}]"
            )
        if self.kind == "constant":
            out = np.full_like(arr, self.params[0])
        elif self.kind == "periodic-sinusoid":
            scale, offset, period = self.params
            out = scale * (offset + np.sin(2.0 * math.pi * arr / period))
        elif self.kind == "episodic-parabola":
            out = self.params[0] * arr * (self.horizon - arr)
        elif self.kind == "piecewise-linear":
            times, values = self.params
            out = np.interp(arr, times, values)
        else:  # table
            times, values = self.params
            idx = np.searchsorted(np.asarray(times), arr, side="right") - 1
            out = np.asarray(values, dtype=float)[np.clip(idx, 0, len(values) - 1)]
        out = np.maximum(out, 0.0)  # guard float dust at parabola endpoints
        return float(out) if np.isscalar(t) or arr.ndim == 0 else out


@dataclass(frozen=True)
class ServiceDistribution:
    """A nonnegative duration distribution with closed-form cdf/pdf.

    Supported kinds and parameters:

    * ``exponential``: ``(rate,)``
    * ``lognormal``: ``(location, scale)`` of the underlying normal
    * ``weibull``: ``(shape, scale)`` with ``shape >= 1`` so the density
      stays bounded near zero
    * ``deterministic-shifted-exponential``: ``(shift, rate)``,
      ``X = shift + Exp(rate)``; ``rate = inf`` degenerates to a point
      mass at ``shift`` (sampling works, pdf/hazard are refused)
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in SERVICE_KINDS:
            raise ConfigError(f"unknown service kind {self.kind!r}")
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "exponential":
            if len(p) != 1 or p[0] <= 0:
                raise ConfigError("exponential needs a positive rate")
        elif self.kind == "lognormal":
            if len(p) != 2 or p[1] <= 0:
                raise ConfigError("lognormal needs (location, scale>0)")
        elif self.kind == "weibull":
            if len(p) != 2 or p[0] < 1 or p[1] <= 0:
                raise ConfigError(
                    "weibull needs (shape>=1, scale>0); shape < 1 has an "
                    "unbounded density near zero and is not supported"
                )
        else:
            if len(p) != 2 or p[0] < 0 or p[1] <= 0:
                raise ConfigError(
                    "deterministic-shifted-exponential needs (shift>=0, rate>0)"
                )

    # -- constructors ---------------------------------------------------

    @classmethod
    def exponential(cls, rate: float) -> "ServiceDistribution":
        return cls("exponential", (rate,))

    @classmethod
    def lognormal(cls, location: float, scale: float) -> "ServiceDistribution":
        return cls("lognormal", (location, scale))

    @classmethod
    def weibull(cls, shape: float, scale: float) -> "ServiceDistribution":
        return cls("weibull", (shape, scale))

    @classmethod
    def shifted_exponential(cls, shift: float, rate: float) -> "ServiceDistribution":
        return cls("deterministic-shifted-exponential", (shift, rate))

    # -- evaluation -----------------------------------------------------

    def _check_nonneg(self, arr):
        if arr.size and arr.min() < -1e-12:
            raise DomainError("distribution evaluated at negative time")

    def cdf(self, t):
        arr = np.asarray(t, dtype=float)
        self._check_nonneg(arr)
        arr = np.maximum(arr, 0.0)
        if self.kind == "exponential":
            (rate,) = self.params
            out = -np.expm1(-rate * arr)
        elif self.kind == "lognormal":
            mu, sigma = self.params
            out = np.zeros_like(arr)
            pos = arr > 0
            out[pos] = _normal_cdf((np.log(arr[pos]) - mu) / sigma)
        elif self.kind == "weibull":
            shape, scale = self.params
            out = -np.expm1(-((arr / scale) ** shape))
        else:
            shift, rate = self.params
            out = np.zeros_like(arr)
            past = arr >= shift
            if math.isinf(rate):
                out[past] = 1.0
            else:
                out[past] = -np.expm1(-rate * (arr[past] - shift))
        return float(out) if np.isscalar(t) or arr.ndim == 0 else out

    def survival(self, t):
        """Exactly ``1 - cdf(t)``."""
        return 1.0 - self.cdf(t)

    def pdf(self, t):
        arr = np.asarray(t, dtype=float)
        self._check_nonneg(arr)
        arr = np.maximum(arr, 0.0)
        if self.kind == "exponential":
            (rate,) = self.params
            out = rate * np.exp(-rate * arr)
        elif self.kind == "lognormal":
            mu, sigma = self.params
            out = np.zeros_like(arr)
            pos = arr > 0
            out[pos] = _normal_pdf((np.log(arr[pos]) - mu) / sigma) / (sigma * arr[pos])
        elif self.kind == "weibull":
            shape, scale = self.params
            out = np.zeros_like(arr)
            pos = arr > 0
            z = arr[pos] / scale
            out[pos] = (shape / scale) * z ** (shape - 1.0) * np.exp(-(z**shape))
            if shape == 1.0:
                out = np.where(arr > 0, out, 1.0 / scale)
        else:
            shift, rate = self.params
            if math.isinf(rate):
                raise DomainError(
                    "degenerate point mass has no density; pdf is undefined"
                )
            out = np.zeros_like(arr)
            past = arr >= shift
            out[past] = rate * np.exp(-rate * (arr[past] - shift))
        return float(out) if np.isscalar(t) or arr.ndim == 0 else out

    def hazard(self, t):
        """``pdf(t) / survival(t)`` where the support is not exhausted."""
        arr = np.asarray(t, dtype=float)
        surv = np.asarray(self.survival(arr))
        if np.any(surv <= 0.0):
            raise DomainError(
                "hazard requested where cdf(t) = 1 (support exhausted)"
            )
        out = np.asarray(self.pdf(arr)) / surv
        return float(out) if np.isscalar(t) or arr.ndim == 0 else out

    def evaluate(self, t):
        """All four curves at once: ``(cdf, pdf, survival, hazard)``.

        Raises ``DomainError`` if any point has exhausted support
        (``cdf = 1``), where the hazard is undefined.
        """
        return (self.cdf(t), self.pdf(t), self.survival(t), self.hazard(t))

    def mean(self) -> float:
        if self.kind == "exponential":
            return 1.0 / self.params[0]
        if self.kind == "lognormal":
            mu, sigma = self.params
            return math.exp(mu + sigma**2 / 2.0)
        if self.kind == "weibull":
            shape, scale = self.params
            return scale * math.gamma(1.0 + 1.0 / shape)
        shift, rate = self.params
        return shift if math.isinf(rate) else shift + 1.0 / rate

    def density_bound(self, horizon: float) -> float:
        """Numerical upper bound of the density on ``[0, horizon]``."""
        t = np.linspace(0.0, horizon, _SCAN_POINTS + 1)
        return float(np.max(self.pdf(t)))

    def sample(self, rng: np.random.Generator, size=None):
        """Draw durations; the empirical law converges to ``cdf``."""
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.params[0], size)
        if self.kind == "lognormal":
            mu, sigma = self.params
            return rng.lognormal(mu, sigma, size)
        if self.kind == "weibull":
            shape, scale = self.params
            return scale * rng.weibull(shape, size)
        shift, rate = self.params
        if math.isinf(rate):
            return shift if size is None else np.full(size, shift)
        return shift + rng.exponential(1.0 / rate, size)


@dataclass(frozen=True)
class SystemConfig:
    """Complete description of one loss system in fluid scale.

    ``capacity`` is the fluid server level ``c`` (the n-th stochastic
    system has ``floor(n*c)`` servers); ``buffer_ratio`` is ``beta``
    (zero-buffer systems use ``beta = 0``).  ``initial_fraction`` is the
    fluid amount of initial work, whose residual durations follow
    ``initial_dist`` (defaulting to the service distribution).
    """

    rate: RateFunction
    service: ServiceDistribution
    initial_fraction: float = 0.0
    initial_dist: ServiceDistribution | None = None
    capacity: float = 1.0
    buffer_ratio: float = 0.0
    horizon: float | None = None

    def __post_init__(self):
        if self.horizon is None:
            object.__setattr__(self, "horizon", self.rate.horizon)
        if not (0 < self.horizon <= self.rate.horizon * (1 + 1e-12)):
            raise ConfigError(
                "system horizon must be positive and within the rate's horizon"
            )
        if self.capacity <= 0:
            raise ConfigError("capacity must be positive")
        if self.buffer_ratio < 0:
            raise ConfigError("buffer_ratio must be nonnegative")
        hi = self.capacity + self.buffer_ratio
        if not (0 <= self.initial_fraction <= hi + 1e-12):
            raise ConfigError(
                f"initial_fraction must lie in [0, {hi}] "
                f"(capacity + buffer_ratio), got {self.initial_fraction}"
            )
        if self.initial_fraction > 0 and self.initial_dist is None:
            object.__setattr__(self, "initial_dist", self.service)

    def with_thresholds(
        self, capacity: float | None = None, buffer_ratio: float | None = None
    ) -> "SystemConfig":
        """Copy with modified capacity/buffer thresholds (for optimizers)."""
        return replace(
            self,
            capacity=self.capacity if capacity is None else capacity,
            buffer_ratio=self.buffer_ratio if buffer_ratio is None else buffer_ratio,
        )

    def summary(self) -> dict:
        """JSON-serializable echo of the configuration."""
        out = {
            "rate": {
                "kind": self.rate.kind,
                "params": self.rate.params,
                "rate_bound": self.rate.rate_bound,
            },
            "service": {"kind": self.service.kind, "params": self.service.params},
            "initial_fraction": self.initial_fraction,
            "capacity": self.capacity,
            "buffer_ratio": self.buffer_ratio,
            "horizon": self.horizon,
        }
        if self.initial_dist is not None:
            out["initial"] = {
                "kind": self.initial_dist.kind,
                "params": self.initial_dist.params,
            }
        return out


@dataclass(frozen=True)
class Grid:
    """Uniform time grid ``t_0 = 0, ..., t_count = count * step``."""

    step: float
    count: int

    def __post_init__(self):
        if self.step <= 0 or self.count < 1:
            raise ConfigError("grid needs step > 0 and count >= 1")

    @classmethod
    def from_step(cls, horizon: float, step: float) -> "Grid":
        """Grid covering ``[0, horizon]``; the step is snapped so that
        ``count * step == horizon`` exactly."""
        count = max(1, round(horizon / step))
        return cls(horizon / count, count)

    @classmethod
    def from_count(cls, horizon: float, count: int) -> "Grid":
        return cls(horizon / count, count)

    @property
    def horizon(self) -> float:
        return self.step * self.count

    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.count + 1)

    def index_at_or_before(self, t: float) -> int:
        """Index of the last grid point ``<= t`` (left-step lookup)."""
        if t < -1e-12 or t > self.horizon * (1 + 1e-12):
            raise DomainError(f"time {t} outside grid [0, {self.horizon}]")
        idx = int(math.floor(min(max(t, 0.0), self.horizon) / self.step + 1e-9))
        return min(idx, self.count)


# -- TOML configuration -------------------------------------------------


def _build_rate(section: dict, horizon: float) -> RateFunction:
    kind = section.get("kind")
    bound = section.get("rate_bound", 0.0)
    try:
        if kind == "constant":
            rf = RateFunction.constant(section["value"], horizon)
        elif kind == "periodic-sinusoid":
            rf = RateFunction.periodic_sinusoid(
                section["scale"], section["offset"], section["period"], horizon
            )
        elif kind == "episodic-parabola":
            rf = RateFunction.episodic_parabola(section["coefficient"], horizon)
        elif kind == "piecewise-linear":
            rf = RateFunction.piecewise_linear(
                section["times"], section["values"], horizon
            )
        elif kind == "table":
            rf = RateFunction.table(section["times"], section["values"], horizon)
        else:
            raise ConfigError(f"[rate] kind must be one of {RATE_KINDS}, got {kind!r}")
    except KeyError as exc:
        raise ConfigError(f"[rate] missing key {exc.args[0]!r} for kind {kind!r}")
    if bound:
        rf = replace(rf, rate_bound=float(bound))
    return rf


def _build_distribution(section: dict, label: str) -> ServiceDistribution:
    kind = section.get("kind")
    try:
        if kind == "exponential":
            return ServiceDistribution.exponential(section["rate"])
        if kind == "lognormal":
            return ServiceDistribution.lognormal(section["location"], section["scale"])
        if kind == "weibull":
            return ServiceDistribution.weibull(section["shape"], section["scale"])
        if kind == "deterministic-shifted-exponential":
            return ServiceDistribution.shifted_exponential(
                section["shift"], section["rate"]
            )
    except KeyError as exc:
        raise ConfigError(f"[{label}] missing key {exc.args[0]!r} for kind {kind!r}")
    raise ConfigError(f"[{label}] kind must be one of {SERVICE_KINDS}, got {kind!r}")


def config_from_dict(data: dict) -> SystemConfig:
    """Build a ``SystemConfig`` from a parsed TOML mapping.

    Expected sections: ``[rate]``, ``[service]``, optional ``[initial]``,
    and ``[system]`` with ``horizon`` plus optional ``capacity`` and
    ``buffer_ratio``.  Units are abstract time units throughout.
    """
    for name in ("rate", "service", "system"):
        if name not in data:
            raise ConfigError(f"config is missing the [{name}] section")
    system = data["system"]
    if "horizon" not in system:
        raise ConfigError("[system] must define horizon")
    horizon = float(system["horizon"])
    rate = _build_rate(data["rate"], horizon)
    service = _build_distribution(data["service"], "service")
    initial = data.get("initial", {})
    fraction = float(initial.get("fraction", 0.0))
    initial_dist = None
    if "kind" in initial:
        initial_dist = _build_distribution(initial, "initial")
    return SystemConfig(
        rate=rate,
        service=service,
        initial_fraction=fraction,
        initial_dist=initial_dist,
        capacity=float(system.get("capacity", 1.0)),
        buffer_ratio=float(system.get("buffer_ratio", 0.0)),
        horizon=horizon,
    )


def load_config(path: str | Path) -> SystemConfig:
    """Load a system configuration from a TOML file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    return config_from_dict(data)
