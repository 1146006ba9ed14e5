"""Two-state Markov (Gilbert-Elliott) cellular channel model.

Physics inputs (fade margin, carrier frequency, vehicle speed, frame
capacity) determine a Doppler shift, a fading correlation coefficient, and
from those the persistence probabilities of the Poor and Ideal states plus
the single-update discard probability. The same derived chain is also
steppable slot by slot for Monte-Carlo validation: one frame per slot, frame
loss drawn at the state-specific failure probability, then a state
transition.

Special functions are computed locally: J0 by ascending series / Hankel
asymptotic expansion, first-order Marcum Q by its canonical series of
modified-Bessel terms.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "SPEED_OF_LIGHT",
    "SingularChannelError",
    "InconsistentChannelError",
    "DegenerateChainError",
    "ChannelParams",
    "ChannelDerived",
    "ChannelState",
    "bessel_j0",
    "marcum_q1",
    "doppler_shift",
    "fading_correlation",
    "persistence",
    "derive",
    "drop_probability",
    "steady_state_poor",
    "step",
    "update_discard_monte_carlo",
]

SPEED_OF_LIGHT = 3.0e8  # m/s

# Ascending series below, Hankel asymptotic above. At 12 both branches are
# accurate to ~1e-12; at smaller split points the asymptotic truncation
# floor would exceed the 1e-10 contract.
_J0_SERIES_LIMIT = 12.0

_PROB_SLACK = 1e-9  # tolerated float overshoot before [0,1] is considered violated


class SingularChannelError(ValueError):
    """Fading correlation at +-1 leaves the persistence formulas undefined."""


class InconsistentChannelError(ValueError):
    """Derived transition probabilities fell outside [0, 1]."""


class DegenerateChainError(ValueError):
    """Both chain states are absorbing, or a denominator vanished."""


class ChannelState(enum.Enum):
    IDEAL = "ideal"
    POOR = "poor"


@dataclass(frozen=True)
class ChannelParams:
    """Physical-layer inputs of the channel model.

    capacity is the peak link-layer frame rate (frames/s); its inverse is the
    frame transmission time. frame_fail_poor / frame_fail_ideal are the
    per-frame loss probabilities conditioned on the channel state.
    """

    fade_margin: float
    carrier_freq: float
    velocity: float
    capacity: float
    frame_fail_poor: float
    frame_fail_ideal: float

    def __post_init__(self):
        if not (self.fade_margin > 0):
            raise ValueError(f"fade margin must be positive, got {self.fade_margin}")
        if not (self.capacity > 0):
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if self.velocity < 0:
            raise ValueError(f"velocity must be non-negative, got {self.velocity}")
        if self.carrier_freq <= 0:
            raise ValueError(f"carrier frequency must be positive, got {self.carrier_freq}")
        for name in ("frame_fail_poor", "frame_fail_ideal"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {p}")


@dataclass(frozen=True)
class ChannelDerived:
    """Chain parameters induced by :class:`ChannelParams`.

    The state-conditional frame-failure probabilities are carried along so a
    derived channel is self-contained for slot stepping.
    """

    doppler: float
    correlation: float
    eta: float
    mean_fail: float
    persist_poor: float
    persist_ideal: float
    drop_prob: float
    frame_fail_poor: float
    frame_fail_ideal: float


def bessel_j0(x: float) -> float:
    """Zeroth-order Bessel function of the first kind, |error| <= 1e-10.

    Ascending power series for |x| <= 12, Hankel asymptotic expansion
    (truncated at its smallest term) beyond.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"argument must be finite, got {x}")
    ax = abs(x)
    if ax <= _J0_SERIES_LIMIT:
        q = 0.25 * ax * ax
        term = 1.0
        total = 1.0
        k = 0
        while True:
            k += 1
            term *= -q / (k * k)
            total += term
            if abs(term) < 1e-17 * max(1.0, abs(total)) and k > ax:
                return total
    # J0(x) ~ sqrt(2/(pi x)) [P cos(chi) + Q sin(chi)], chi = x - pi/4, with
    # P = t0 - t2 + t4 - ..., Q = t1 - t3 + ... and
    # t_m = t_{m-1} (2m-1)^2 / (8 x m); truncation at the smallest term.
    p_sum = 0.0
    q_sum = 0.0
    t = 1.0
    m = 0
    while True:
        if m % 2 == 0:
            p_sum += (-1.0) ** (m // 2) * t
        else:
            q_sum += (-1.0) ** ((m - 1) // 2) * t
        nxt = t * (2 * m + 1) ** 2 / (8.0 * ax * (m + 1))
        if nxt >= t or nxt < 1e-17:
            break
        t = nxt
        m += 1
    chi = ax - 0.25 * math.pi
    return math.sqrt(2.0 / (math.pi * ax)) * (p_sum * math.cos(chi) + q_sum * math.sin(chi))


def marcum_q1(a: float, b: float) -> float:
    """First-order Marcum Q function Q1(a, b).

    Canonical series of modified-Bessel terms,
    ``Q1(a,b) = exp(-(a^2+b^2)/2) * sum_k (a/b)^k I_k(ab)``, summed in the
    exponentially scaled form for stability and truncated when the relative
    tail drops below 1e-12. For a > b the complementary series
    ``1 - exp(...) * sum_{k>=1} (b/a)^k I_k(ab)`` converges instead.
    """
    if a < 0 or b < 0:
        raise ValueError(f"arguments must be non-negative, got a={a}, b={b}")
    if b == 0.0:
        return 1.0
    if a == 0.0:
        return math.exp(-0.5 * b * b)
    x = a * b
    scale = math.exp(-0.5 * (a - b) ** 2)  # exp(-(a^2+b^2)/2 + ab), pairs with ive
    complementary = a > b
    ratio = (b / a) if complementary else (a / b)
    k = 1 if complementary else 0
    total = 0.0
    power = ratio if complementary else 1.0
    while True:
        term = power * special.ive(k, x)
        total += term
        if k > x and term <= 1e-12 * max(total, 1e-300):
            break
        k += 1
        power *= ratio
    return 1.0 - scale * total if complementary else scale * total


def doppler_shift(carrier_freq: float, velocity: float) -> float:
    """Doppler shift carrier_freq * velocity / c."""
    return carrier_freq * velocity / SPEED_OF_LIGHT


def fading_correlation(doppler: float, capacity: float) -> float:
    """Fading-amplitude correlation between consecutive frames: J0(2 pi f_d / theta)."""
    return bessel_j0(2.0 * math.pi * doppler / capacity)


def _checked_probability(name: str, raw: float) -> float:
    if raw < -_PROB_SLACK or raw > 1.0 + _PROB_SLACK:
        raise InconsistentChannelError(
            f"{name} = {raw!r} falls outside [0, 1]; the parameter set is inconsistent"
        )
    return min(max(raw, 0.0), 1.0)


def persistence(correlation: float, fade_margin: float) -> tuple[float, float]:
    """Persistence probabilities (persist_poor, persist_ideal) of the chain.

    persist_poor = 1 - (Q1(eta, rho*eta) - Q1(rho*eta, eta)) / (e^{1/F} - 1)
    with eta = sqrt(2 / (F (1 - rho^2))); persist_ideal follows from the mean
    failure probability 1 - e^{-1/F}. The correlation enters the Marcum
    arguments through its magnitude (the Q series is even in each argument,
    so this is the unique continuous extension to negative correlation).
    Raw values outside [0, 1] by more than 1e-9 raise instead of being
    clamped.
    """
    rho = float(correlation)
    if abs(rho) >= 1.0:
        raise SingularChannelError(
            f"fading correlation {rho} is singular; zero Doppler gives rho = 1 "
            "and the chain has no valid persistence parameters"
        )
    if not (fade_margin > 0):
        raise ValueError(f"fade margin must be positive, got {fade_margin}")
    eta = math.sqrt(2.0 / (fade_margin * (1.0 - rho * rho)))
    mean_fail = -math.expm1(-1.0 / fade_margin)
    mag = abs(rho)
    numerator = marcum_q1(eta, mag * eta) - marcum_q1(mag * eta, eta)
    persist_poor = _checked_probability(
        "persist_poor", 1.0 - numerator / math.expm1(1.0 / fade_margin)
    )
    persist_ideal = _checked_probability(
        "persist_ideal",
        1.0 - (1.0 - mean_fail * (2.0 - persist_poor)) / (1.0 - mean_fail),
    )
    return persist_poor, persist_ideal


def drop_probability(
    persist_poor: float,
    persist_ideal: float,
    frame_fail_poor: float,
    frame_fail_ideal: float,
) -> float:
    """Probability that a single update is discarded by the channel.

    State-occupancy-weighted frame loss:
    ``v_L (1 - P_i) / (2 - P_p - P_i) + l_L / (1 + (1 - P_i)/(1 - P_p))``.
    """
    for name, p in (
        ("persist_poor", persist_poor),
        ("persist_ideal", persist_ideal),
        ("frame_fail_poor", frame_fail_poor),
        ("frame_fail_ideal", frame_fail_ideal),
    ):
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {p}")
    if persist_poor == 1.0:
        raise DegenerateChainError(
            "persist_poor = 1 makes the Poor state absorbing and the "
            "occupancy ratio undefined"
        )
    return frame_fail_poor * (1.0 - persist_ideal) / (2.0 - persist_poor - persist_ideal) + (
        frame_fail_ideal / (1.0 + (1.0 - persist_ideal) / (1.0 - persist_poor))
    )


def steady_state_poor(persist_poor: float, persist_ideal: float) -> float:
    """Stationary Poor-state occupancy (1 - P_i) / ((1 - P_i) + (1 - P_p))."""
    denom = (1.0 - persist_ideal) + (1.0 - persist_poor)
    if denom == 0.0:
        raise DegenerateChainError("both states are absorbing; no unique stationary law")
    return (1.0 - persist_ideal) / denom


def derive(params: ChannelParams) -> ChannelDerived:
    """Full chain derivation from physics inputs.

    Computes Doppler shift, fading correlation, eta, and mean frame failure,
    then the persistence probabilities and the single-update drop
    probability. Raises :class:`SingularChannelError` for |rho| = 1 (e.g.
    a parked vehicle) and :class:`InconsistentChannelError` when a derived
    probability leaves [0, 1].
    """
    doppler = doppler_shift(params.carrier_freq, params.velocity)
    rho = fading_correlation(doppler, params.capacity)
    persist_poor, persist_ideal = persistence(rho, params.fade_margin)
    eta = math.sqrt(2.0 / (params.fade_margin * (1.0 - rho * rho)))
    mean_fail = -math.expm1(-1.0 / params.fade_margin)
    drop = drop_probability(
        persist_poor, persist_ideal, params.frame_fail_poor, params.frame_fail_ideal
    )
    return ChannelDerived(
        doppler=doppler,
        correlation=rho,
        eta=eta,
        mean_fail=mean_fail,
        persist_poor=persist_poor,
        persist_ideal=persist_ideal,
        drop_prob=drop,
        frame_fail_poor=params.frame_fail_poor,
        frame_fail_ideal=params.frame_fail_ideal,
    )


def step(
    state: ChannelState, derived: ChannelDerived, rng: np.random.Generator
) -> tuple[ChannelState, bool]:
    """Advance one slot: returns (next_state, delivered).

    The frame is transmitted in ``state`` and lost with that state's failure
    probability; the chain then transitions. Draw order is fixed (loss
    uniform first, transition uniform second) so streams replay exactly.
    """
    if state is ChannelState.POOR:
        lost = rng.random() < derived.frame_fail_poor
        stay = rng.random() < derived.persist_poor
        nxt = ChannelState.POOR if stay else ChannelState.IDEAL
    else:
        lost = rng.random() < derived.frame_fail_ideal
        stay = rng.random() < derived.persist_ideal
        nxt = ChannelState.IDEAL if stay else ChannelState.POOR
    return nxt, not lost


def update_discard_monte_carlo(
    derived: ChannelDerived,
    n_updates: int,
    rng: np.random.Generator,
    burn_in: int = 1000,
    start: ChannelState = ChannelState.IDEAL,
) -> float:
    """Empirical single-update discard rate over ``n_updates`` slot steps.

    One update per slot, stepped through :func:`step` after a burn-in that
    lets the chain forget ``start``.
    """
    if n_updates < 1:
        raise ValueError(f"need at least one update, got {n_updates}")
    state = start
    for _ in range(burn_in):
        state, _ = step(state, derived, rng)
    lost = 0
    for _ in range(n_updates):
        state, delivered = step(state, derived, rng)
        if not delivered:
            lost += 1
    return lost / n_updates
