"""Closed-form end-to-end delay of the upload/consensus pipeline.

The chain: exponential data extraction, constant encoding, geometric retries
for send collisions and channel drops, then constant server-side service
(decode, follower upload, block broadcast), inflated by the amortized
leader-election overhead. Everything here is a deterministic pure function;
divergent configurations (collision or drop probability at 1, election
overhead consuming the whole term) raise instead of saturating, since a
silently clamped analytic model would hide misconfiguration.

Rate arguments accept numpy arrays wherever a sweep makes sense; scalar in,
scalar out.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DivergentDelayError",
    "DelayParams",
    "collision_spacing_from_slot",
    "expected_extraction_delay",
    "collision_probability",
    "send_delay",
    "arrival_delay",
    "election_time",
    "election_overhead",
    "expected_total_delay",
]

SLOTS_PER_COLLISION_GUARD = 3  # transmissions are spaced three slots apart


class DivergentDelayError(ValueError):
    """The analytic delay does not exist for these parameters."""


def collision_spacing_from_slot(slot_interval: float) -> float:
    """Collision-avoidance spacing: three slot intervals."""
    if slot_interval < 0:
        raise ValueError(f"slot interval must be non-negative, got {slot_interval}")
    return SLOTS_PER_COLLISION_GUARD * slot_interval


@dataclass(frozen=True)
class DelayParams:
    """Every constant of the delay model.

    ``collision_spacing`` defaults to three slot intervals when omitted
    (the construction helper for the tau_c = 3 tau_t rule); passing it
    explicitly decouples the two for sweeps.
    """

    extraction_rate: float  # events/s
    encode_delay: float  # s, vehicle-side encoding
    decode_delay: float  # s, server-side decoding
    follower_delay: float  # s, follower-to-leader ledger upload
    broadcast_delay: float  # s, leader block broadcast
    term_length: float  # s, leadership term
    election_base: float  # s, election time constant (tau_ele = base * ln N)
    vehicles_per_server: int
    server_count: int
    attack_strength: int
    drop_prob: float
    slot_interval: float = 0.001
    collision_spacing: float | None = None

    def __post_init__(self):
        if self.collision_spacing is None:
            object.__setattr__(
                self, "collision_spacing", collision_spacing_from_slot(self.slot_interval)
            )
        if not (self.extraction_rate > 0):
            raise ValueError(f"extraction rate must be positive, got {self.extraction_rate}")
        for name in (
            "encode_delay",
            "decode_delay",
            "follower_delay",
            "broadcast_delay",
            "term_length",
            "election_base",
            "slot_interval",
            "collision_spacing",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.vehicles_per_server < 1:
            raise ValueError(f"need at least one vehicle per server, got {self.vehicles_per_server}")
        if self.server_count < 1:
            raise ValueError(f"need at least one server, got {self.server_count}")
        if not (0 <= self.attack_strength < self.server_count / 2):
            raise ValueError(
                f"attack strength must satisfy 0 <= a < N/2, got a={self.attack_strength} "
                f"with N={self.server_count}"
            )
        if not (0.0 <= self.drop_prob < 1.0):
            raise ValueError(f"drop probability must lie in [0, 1), got {self.drop_prob}")

    @property
    def service_time(self) -> float:
        """Constant server-side service: decode + follower upload + broadcast."""
        return self.decode_delay + self.follower_delay + self.broadcast_delay

    @property
    def election_duration(self) -> float:
        """Time one election takes: election_base * ln(server_count)."""
        return election_time(self.server_count, self.election_base)


def expected_extraction_delay(extraction_rate: float) -> float:
    """Mean extraction delay of a Poisson extractor: 1 / rate."""
    if extraction_rate <= 0:
        raise ValueError(f"extraction rate must be positive, got {extraction_rate}")
    return 1.0 / extraction_rate


def collision_probability(extraction_rate, vehicles_per_server: int, spacing: float):
    """Probability any two of the server's vehicles send within ``spacing``.

    ``1 - exp(-rate * m (m-1) spacing / 2)``: each of the m(m-1)/2 vehicle
    pairs violates the spacing independently with exponential send-time gaps.
    """
    rate = np.asarray(extraction_rate, dtype=float)
    if np.any(rate <= 0):
        raise ValueError("extraction rate must be positive")
    if vehicles_per_server < 1:
        raise ValueError(f"need at least one vehicle, got {vehicles_per_server}")
    if spacing < 0:
        raise ValueError(f"spacing must be non-negative, got {spacing}")
    exponent = rate * vehicles_per_server * (vehicles_per_server - 1) * spacing / 2.0
    out = -np.expm1(-exponent)
    return float(out) if np.isscalar(extraction_rate) else out


def send_delay(extraction_delay: float, encode_delay: float, collision_prob: float) -> float:
    """Expected send delay with geometric re-extraction on collision."""
    if not (0.0 <= collision_prob < 1.0):
        raise DivergentDelayError(
            f"collision probability {collision_prob} leaves no successful send"
        )
    return (extraction_delay + encode_delay) / (1.0 - collision_prob)


def arrival_delay(send: float, drop_prob: float) -> float:
    """Expected server-arrival delay with geometric resend on channel drop."""
    if not (0.0 <= drop_prob < 1.0):
        raise DivergentDelayError(f"drop probability {drop_prob} leaves no delivery")
    return send / (1.0 - drop_prob)


def election_time(server_count: int, election_base: float) -> float:
    """Duration of one leader election: base * ln(server count).

    Natural log; any other base is absorbable into ``election_base``.
    """
    if server_count < 1:
        raise ValueError(f"need at least one server, got {server_count}")
    if election_base < 0:
        raise ValueError(f"election base must be non-negative, got {election_base}")
    return election_base * math.log(server_count)


def election_overhead(
    expected_delay: float,
    term_length: float,
    election_duration: float,
    attack_strength: int,
    server_count: int,
) -> float:
    """Amortized election time per batch.

    ``(E / T_term) * tau_ele * (1 + a/N)``: one scheduled election per term
    plus the a/N chance per term that the leader itself is paralyzed.
    """
    if term_length <= 0:
        raise ValueError(f"term length must be positive, got {term_length}")
    if not (0 <= attack_strength < server_count / 2):
        raise ValueError(
            f"attack strength must satisfy 0 <= a < N/2, got a={attack_strength}, N={server_count}"
        )
    return (expected_delay / term_length) * election_duration * (
        1.0 + attack_strength / server_count
    )


def expected_total_delay(params: DelayParams, extraction_rate=None):
    """Expected end-to-end batch delay.

    Solves the amortization fixed point in closed form:

        E = A * [ (1/rate + t_encode) / (1 - p_drop) * exp(B * rate) + t_service ]

    with A = N T_term / (N T_term - (N + a) tau_ele) the election inflation
    and B = m(m-1) tau_c / 2 the collision exponent. ``extraction_rate``
    (scalar or array) overrides the one in ``params`` for sweeps.
    """
    rate = params.extraction_rate if extraction_rate is None else extraction_rate
    rate_arr = np.asarray(rate, dtype=float)
    if np.any(rate_arr <= 0):
        raise ValueError("extraction rate must be positive")
    n = params.server_count
    tau_ele = params.election_duration
    denom = n * params.term_length - (n + params.attack_strength) * tau_ele
    if denom <= 0:
        raise DivergentDelayError(
            "election overhead consumes the whole term: "
            f"N*T_term = {n * params.term_length} <= (N+a)*tau_ele = "
            f"{(n + params.attack_strength) * tau_ele}"
        )
    inflation = n * params.term_length / denom
    m = params.vehicles_per_server
    exponent = rate_arr * m * (m - 1) * params.collision_spacing / 2.0
    upload = (1.0 / rate_arr + params.encode_delay) / (1.0 - params.drop_prob)
    with np.errstate(over="ignore"):  # extreme rates legitimately overflow to inf
        total = inflation * (upload * np.exp(exponent) + params.service_time)
    return float(total) if np.isscalar(rate) else total
