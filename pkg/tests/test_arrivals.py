"""Arrival-process tests: exponential gaps, cumulative rates, thinning."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bvib.arrivals import (
    ArrivalSequence,
    Intensity,
    conditional_point_cdf,
    cumulative_rate,
    interarrival_cdf,
    interarrival_from_uniform,
    sample_interarrival,
    sample_process,
)

KS_CRIT_1PCT = 1.62762  # Kolmogorov critical coefficient at alpha = 0.01


def test_interarrival_inverse_transform_convention():
    assert interarrival_from_uniform(1.0, 0.5) == pytest.approx(math.log(2.0), abs=1e-15)
    assert interarrival_from_uniform(2.0, 0.0) == 0.0


def test_interarrival_mean_matches_rate():
    rng = np.random.default_rng(123)
    n = 100_000
    draws = np.array([sample_interarrival(2.0, rng) for _ in range(n)])
    se = 0.5 / math.sqrt(n)
    assert abs(draws.mean() - 0.5) < 3 * se


def test_interarrival_empirical_cdf_point():
    rng = np.random.default_rng(7)
    n = 100_000
    draws = np.array([sample_interarrival(1.0, rng) for _ in range(n)])
    empirical = np.mean(draws <= 1.0)
    target = 1.0 - math.exp(-1.0)
    se = math.sqrt(target * (1 - target) / n)
    assert abs(empirical - target) < 4 * se


def test_interarrival_ks_against_cdf():
    rng = np.random.default_rng(99)
    n = 100_000
    draws = np.array([sample_interarrival(1.7, rng) for _ in range(n)])
    stat = stats.kstest(draws, lambda t: np.vectorize(interarrival_cdf)(1.7, t)).statistic
    assert stat < KS_CRIT_1PCT / math.sqrt(n)


@pytest.mark.parametrize(
    "rate,t,expected",
    [
        (1.0, 0.0, 0.0),
        (1.0, math.log(2.0), 0.5),
        (2.0, 1.0, 1.0 - math.exp(-2.0)),
    ],
)
def test_interarrival_cdf_values(rate, t, expected):
    assert interarrival_cdf(rate, t) == pytest.approx(expected, abs=1e-12)


def test_interarrival_cdf_rejects_bad_arguments():
    with pytest.raises(ValueError):
        interarrival_cdf(0.0, 1.0)
    with pytest.raises(ValueError):
        interarrival_cdf(1.0, -0.1)
    with pytest.raises(ValueError):
        sample_interarrival(-1.0, np.random.default_rng(0))


def test_cumulative_rate_constant_and_linear():
    assert cumulative_rate(Intensity.constant(3.0), 2.0) == pytest.approx(6.0, rel=1e-12)
    ramp = Intensity.time_varying(lambda t: 2.0 * t, rate_max=10.0)
    assert cumulative_rate(ramp, 1.0) == pytest.approx(1.0, rel=1e-8)
    assert cumulative_rate(ramp, 0.0) == 0.0


def test_cumulative_rate_rejects_negative_rate_fn():
    bad = Intensity.time_varying(lambda t: -1.0, rate_max=1.0)
    with pytest.raises(ValueError, match="negative"):
        cumulative_rate(bad, 1.0)


@given(st.floats(min_value=0.01, max_value=50.0), st.floats(min_value=0.0, max_value=10.0),
       st.floats(min_value=0.0, max_value=10.0))
@settings(max_examples=50, deadline=None)
def test_cumulative_rate_monotone(rate, t1, t2):
    lo, hi = sorted((t1, t2))
    intensity = Intensity.constant(rate)
    assert cumulative_rate(intensity, lo) <= cumulative_rate(intensity, hi) + 1e-12


def test_conditional_point_cdf():
    const = Intensity.constant(4.0)
    assert conditional_point_cdf(const, 1.0, 2.0) == pytest.approx(0.5, rel=1e-12)
    assert conditional_point_cdf(const, 2.0, 2.0) == pytest.approx(1.0, rel=1e-12)
    ramp = Intensity.time_varying(lambda t: 2.0 * t, rate_max=10.0)
    assert conditional_point_cdf(ramp, 1.0, 2.0) == pytest.approx(0.25, rel=1e-8)


def test_conditional_point_cdf_degenerate():
    silent = Intensity.time_varying(lambda t: 0.0, rate_max=1.0)
    with pytest.raises(ValueError, match="degenerate"):
        conditional_point_cdf(silent, 0.5, 1.0)


def test_sample_process_zero_rate_is_empty():
    silent = Intensity.time_varying(lambda t: 0.0, rate_max=1.0)
    seq = sample_process(silent, 100.0, np.random.default_rng(0))
    assert len(seq) == 0


def test_sample_process_constant_mean_count():
    rng = np.random.default_rng(5)
    counts = [len(sample_process(Intensity.constant(1.0), 1000.0, rng)) for _ in range(100)]
    assert abs(np.mean(counts) - 1000.0) < 3 * math.sqrt(1000.0)


def test_sample_process_ramp_mean_count():
    # cumulative rate of 2t over [0, 1) is 1 expected event
    rng = np.random.default_rng(11)
    ramp = Intensity.time_varying(lambda t: 2.0 * t, rate_max=2.0)
    n = 20_000
    counts = [len(sample_process(ramp, 1.0, rng)) for _ in range(n)]
    assert abs(np.mean(counts) - 1.0) < 3.0 / math.sqrt(n)


def test_thinned_constant_rate_matches_homogeneous_ks():
    rng = np.random.default_rng(21)
    flat = Intensity.time_varying(lambda t: 1.0, rate_max=1.0)
    seq = sample_process(flat, 100_000.0, rng)
    gaps = seq.gaps()
    assert gaps.size > 50_000
    stat = stats.kstest(gaps, lambda t: -np.expm1(-t)).statistic
    assert stat < KS_CRIT_1PCT / math.sqrt(gaps.size)


def test_arrival_sequence_invariants():
    seq = ArrivalSequence(times=np.array([0.5, 1.5, 1.5, 2.0]), horizon=3.0)
    assert seq.gaps() == pytest.approx([0.5, 1.0, 0.0, 0.5])
    with pytest.raises(ValueError):
        ArrivalSequence(times=np.array([2.0, 1.0]), horizon=3.0)
    with pytest.raises(ValueError):
        ArrivalSequence(times=np.array([1.0, 3.0]), horizon=3.0)


def test_intensity_validation():
    with pytest.raises(ValueError):
        Intensity.constant(0.0)
    with pytest.raises(ValueError):
        Intensity(constant_rate=1.0, rate_fn=lambda t: 1.0, rate_max=2.0)
    with pytest.raises(ValueError):
        Intensity.time_varying(lambda t: 1.0, rate_max=0.0)
    over = Intensity.time_varying(lambda t: 5.0, rate_max=1.0)
    with pytest.raises(ValueError, match="ceiling"):
        over.rate_at(0.0)
