"""Poisson arrival processes for vehicle data extraction.

Extraction events form a point process on the half-line: homogeneous with a
constant rate, or non-homogeneous with a bounded instantaneous-rate function.
Inter-arrival gaps of the homogeneous process are exponential; the cumulative
rate (expected event count up to ``t``) is exact for constant rates and
integrated by adaptive quadrature otherwise. Time-varying processes are
sampled by Lewis-Shedler thinning against the declared rate ceiling.

All samplers draw from a caller-supplied :class:`numpy.random.Generator`;
seeding and stream splitting are the caller's job (see :mod:`bvib.rng`).
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "QUADRATURE_RELTOL",
    "Intensity",
    "ArrivalSequence",
    "interarrival_from_uniform",
    "sample_interarrival",
    "interarrival_cdf",
    "cumulative_rate",
    "conditional_point_cdf",
    "sample_process",
]

QUADRATURE_RELTOL = 1e-8


@dataclass(frozen=True)
class Intensity:
    """Arrival-rate description: a constant rate or a bounded rate function.

    Exactly one form is populated. Time-varying intensities must declare a
    finite ceiling ``rate_max`` with ``rate_fn(t) in [0, rate_max]`` for every
    queried ``t``; the ceiling is the thinning envelope, and rejection
    sampling without one is unbounded.
    """

    constant_rate: float | None = None
    rate_fn: Callable[[float], float] | None = None
    rate_max: float | None = None

    def __post_init__(self):
        if (self.constant_rate is None) == (self.rate_fn is None):
            raise ValueError("specify exactly one of constant_rate and rate_fn")
        if self.constant_rate is not None:
            if not (self.constant_rate > 0):
                raise ValueError(f"constant rate must be positive, got {self.constant_rate}")
        else:
            if self.rate_max is None or not (self.rate_max > 0) or not math.isfinite(self.rate_max):
                raise ValueError("time-varying intensity needs a finite positive rate_max")

    @classmethod
    def constant(cls, rate: float) -> "Intensity":
        return cls(constant_rate=float(rate))

    @classmethod
    def time_varying(cls, rate_fn: Callable[[float], float], rate_max: float) -> "Intensity":
        return cls(rate_fn=rate_fn, rate_max=float(rate_max))

    @property
    def is_constant(self) -> bool:
        return self.constant_rate is not None

    def rate_at(self, t: float) -> float:
        """Instantaneous rate at time ``t``, validated against the declared bounds."""
        if self.is_constant:
            return self.constant_rate
        r = float(self.rate_fn(t))
        if r < 0.0:
            raise ValueError(f"rate function returned negative value {r} at t={t}")
        if r > self.rate_max:
            raise ValueError(
                f"rate function exceeded its declared ceiling at t={t}: {r} > {self.rate_max}"
            )
        return r


@dataclass(frozen=True)
class ArrivalSequence:
    """Ordered event times within ``[0, horizon)``."""

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1:
            raise ValueError("event times must be one-dimensional")
        if times.size and (np.any(np.diff(times) < 0.0)):
            raise ValueError("event times must be non-decreasing")
        if times.size and (times[0] < 0.0 or times[-1] >= self.horizon):
            raise ValueError("event times must lie within [0, horizon)")

    def __len__(self) -> int:
        return self.times.size

    def gaps(self) -> np.ndarray:
        """Inter-arrival gaps; the first gap is measured from time zero."""
        if self.times.size == 0:
            return np.empty(0)
        return np.diff(self.times, prepend=0.0)


def interarrival_from_uniform(rate: float, u: float) -> float:
    """Inverse-CDF transform of one uniform draw ``u`` in [0, 1).

    Convention: returns ``-log(1 - u) / rate``, the exact inverse of
    :func:`interarrival_cdf`.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if not (0.0 <= u < 1.0):
        raise ValueError(f"uniform draw must lie in [0, 1), got {u}")
    return -math.log1p(-u) / rate


def sample_interarrival(rate: float, rng: np.random.Generator) -> float:
    """One exponential inter-arrival gap with mean ``1/rate``.

    Consumes exactly one uniform draw from ``rng`` (inverse-CDF transform),
    so stream positions are predictable for replay.
    """
    return interarrival_from_uniform(rate, rng.random())


def interarrival_cdf(rate: float, t: float) -> float:
    """P(gap <= t) = 1 - exp(-rate * t) for the homogeneous process."""
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return -math.expm1(-rate * t)


def cumulative_rate(intensity: Intensity, t: float) -> float:
    """Expected event count on [0, t): exact for constant rates, quadrature otherwise.

    Quadrature targets relative error ``QUADRATURE_RELTOL``.
    """
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    if t == 0.0:
        return 0.0
    if intensity.is_constant:
        return intensity.constant_rate * t
    value, _ = integrate.quad(
        intensity.rate_at, 0.0, t, epsabs=0.0, epsrel=QUADRATURE_RELTOL, limit=200
    )
    return value


def conditional_point_cdf(intensity: Intensity, a: float, t: float) -> float:
    """P(A_i <= a) for a point conditioned to fall in [0, t): cumulative-rate ratio."""
    if not (0.0 <= a <= t):
        raise ValueError(f"need 0 <= a <= t, got a={a}, t={t}")
    total = cumulative_rate(intensity, t)
    if total <= 0.0:
        raise ValueError(f"degenerate process: cumulative rate is zero at t={t}")
    return cumulative_rate(intensity, a) / total


def sample_process(
    intensity: Intensity, horizon: float, rng: np.random.Generator
) -> ArrivalSequence:
    """Sample one realization of the process on ``[0, horizon)``.

    Constant intensity: cumulative sums of exponential gaps. Time-varying:
    Lewis-Shedler thinning — candidate events at the ceiling rate, each kept
    with probability ``rate_fn(t) / rate_max`` (one extra uniform per
    candidate).
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    times = []
    if intensity.is_constant:
        t = sample_interarrival(intensity.constant_rate, rng)
        while t < horizon:
            times.append(t)
            t += sample_interarrival(intensity.constant_rate, rng)
    else:
        ceiling = intensity.rate_max
        t = sample_interarrival(ceiling, rng)
        while t < horizon:
            if rng.random() * ceiling <= intensity.rate_at(t):
                times.append(t)
            t += sample_interarrival(ceiling, rng)
    return ArrivalSequence(times=np.asarray(times, dtype=float), horizon=float(horizon))
