"""Delay-minimizing extraction rate: closed form, derivative, online loop.

The expected batch delay is convex in the extraction rate (slow extraction
dominates on the left, collision retries on the right), so the optimum is
the unique positive root of ``B t_enc r^2 + B r - 1 = 0`` with
``B = m(m-1) tau_c / 2``. The online controller re-solves whenever the
observed rate drifts off the optimum or the fleet shape changes.
"""

import math
from dataclasses import dataclass

import numpy as np

from .latency import DelayParams, DivergentDelayError, election_time

__all__ = [
    "NoInteriorOptimumError",
    "OptimizerCoefficients",
    "coefficients",
    "delay_derivative",
    "optimal_rate",
    "RateController",
]

RATE_MATCH_RELTOL = 1e-9


class NoInteriorOptimumError(ValueError):
    """With a single vehicle there is no collision term and no interior optimum."""


@dataclass(frozen=True)
class OptimizerCoefficients:
    """Substitution constants of the delay formula.

    inflation is the dimensionless election-overhead factor (>= 1 whenever
    the term survives its election overhead); collision_coeff is
    m(m-1) tau_c / 2 in seconds, zero exactly for a single vehicle.
    """

    inflation: float
    collision_coeff: float


def coefficients(params: DelayParams) -> OptimizerCoefficients:
    """Extract (inflation, collision_coeff) from full delay parameters."""
    n = params.server_count
    tau_ele = election_time(n, params.election_base)
    denom = n * params.term_length - (n + params.attack_strength) * tau_ele
    if denom <= 0:
        raise DivergentDelayError(
            "election overhead consumes the whole term; no finite delay to optimize"
        )
    m = params.vehicles_per_server
    return OptimizerCoefficients(
        inflation=n * params.term_length / denom,
        collision_coeff=m * (m - 1) * params.collision_spacing / 2.0,
    )


def delay_derivative(rate, coeffs: OptimizerCoefficients, encode_delay: float, drop_prob: float):
    """d(expected delay)/d(rate).

    ``A e^{Br} / ((1-p) r^2) * (B t_enc r^2 + B r - 1)``: negative below the
    optimum, positive above it. Accepts scalar or array rates.
    """
    rate_arr = np.asarray(rate, dtype=float)
    if np.any(rate_arr <= 0):
        raise ValueError("rate must be positive")
    if not (0.0 <= drop_prob < 1.0):
        raise DivergentDelayError(f"drop probability {drop_prob} leaves no delivery")
    b = coeffs.collision_coeff
    with np.errstate(over="ignore"):  # extreme rates legitimately overflow to inf
        out = (
            coeffs.inflation
            * np.exp(b * rate_arr)
            / ((1.0 - drop_prob) * rate_arr**2)
            * (b * encode_delay * rate_arr**2 + b * rate_arr - 1.0)
        )
    return float(out) if np.isscalar(rate) else out


def optimal_rate(vehicles_per_server: int, spacing: float, encode_delay: float) -> float:
    """Closed-form delay-minimizing extraction rate.

    Positive root of ``B t_enc r^2 + B r - 1`` with B = m(m-1) tau_c / 2,
    evaluated as ``2 / (B + sqrt(B^2 + 4 B t_enc))`` (rationalized form,
    immune to the subtractive cancellation of the textbook quadratic root).
    """
    if vehicles_per_server < 2:
        raise NoInteriorOptimumError(
            f"with m={vehicles_per_server} there is no collision term; the delay "
            "is monotone decreasing in the rate and has no interior optimum"
        )
    if spacing <= 0:
        raise ValueError(f"collision spacing must be positive, got {spacing}")
    if encode_delay <= 0:
        raise ValueError(f"encode delay must be positive, got {encode_delay}")
    b = vehicles_per_server * (vehicles_per_server - 1) * spacing / 2.0
    return 2.0 / (b + math.sqrt(b * b + 4.0 * b * encode_delay))


class RateController:
    """Online rate adaptation: re-solve on drift or fleet change.

    Holds only the last-seen fleet shape. Server count is watched for
    protocol fidelity even though the optimum depends only on the collision
    coefficient and the encode delay, so a pure server-count change never
    moves the target rate (asserted by test).
    """

    def __init__(self, spacing: float, encode_delay: float):
        self.spacing = spacing
        self.encode_delay = encode_delay
        self._last_m: int | None = None
        self._last_n: int | None = None

    def observe(
        self, current_rate: float, vehicles_per_server: int, server_count: int
    ) -> tuple[float, bool]:
        """Return (target rate, changed flag) for the observed state."""
        target = optimal_rate(vehicles_per_server, self.spacing, self.encode_delay)
        fleet_changed = (
            self._last_m is not None
            and (vehicles_per_server != self._last_m or server_count != self._last_n)
        )
        drifted = abs(current_rate - target) > RATE_MATCH_RELTOL * target
        self._last_m = vehicles_per_server
        self._last_n = server_count
        return target, bool(drifted or fleet_changed)
