"""Independent numerical oracles shared across test modules.

These deliberately avoid the library's own code paths: arbitrary-precision
series and quadrature via mpmath, finite differences, and brute-force
enumeration.
"""

import mpmath as mp
import numpy as np

KS_CRIT_1PCT = 1.62762  # Kolmogorov critical coefficient at alpha = 0.01


def j0_series_oracle(x: float, terms: int = 50) -> float:
    """Ascending Bessel series at 50 decimal digits."""
    with mp.workdps(50):
        xm = mp.mpf(x)
        q = xm * xm / 4
        term = mp.mpf(1)
        total = mp.mpf(1)
        for k in range(1, terms):
            term *= -q / (k * k)
            total += term
        return float(total)


def marcum_integral_oracle(a: float, b: float) -> float:
    """Adaptive quadrature of the defining noncentral integral."""
    with mp.workdps(15):
        am = mp.mpf(a)
        bm = mp.mpf(b)
        if bm == 0:
            return 1.0
        f = lambda x: x * mp.exp(-(x * x + am * am) / 2) * mp.besseli(0, am * x)
        return float(mp.quad(f, [bm, bm + 40 + 10 * am]))


def central_difference(f, x: float, h: float = 1e-6) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def bisect_root(f, lo: float, hi: float, iterations: int = 200) -> float:
    """Plain bisection on a sign change of ``f`` over [lo, hi]."""
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0) == (fhi > 0):
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def markov_poor_sigma(pi_poor: float, persist_poor: float, persist_ideal: float, n: int) -> float:
    """Markov-chain CLT standard error of the Poor-occupancy estimator."""
    lam = persist_poor + persist_ideal - 1.0
    return np.sqrt(pi_poor * (1.0 - pi_poor) * (1.0 + lam) / (1.0 - lam) / n)


def markov_loss_sigma(
    pi_poor: float,
    persist_poor: float,
    persist_ideal: float,
    fail_poor: float,
    fail_ideal: float,
    n: int,
) -> float:
    """Standard error of the per-slot loss-rate estimator.

    The loss indicator decomposes into f(state) plus a conditionally
    independent Bernoulli residual: the f-part carries the chain's geometric
    autocorrelation, the residual contributes E[f(1-f)] per slot.
    """
    lam = persist_poor + persist_ideal - 1.0
    pi_ideal = 1.0 - pi_poor
    mean_f = pi_poor * fail_poor + pi_ideal * fail_ideal
    var_f = pi_poor * fail_poor**2 + pi_ideal * fail_ideal**2 - mean_f**2
    bernoulli = pi_poor * fail_poor * (1 - fail_poor) + pi_ideal * fail_ideal * (1 - fail_ideal)
    return np.sqrt((var_f * (1.0 + lam) / (1.0 - lam) + bernoulli) / n)
