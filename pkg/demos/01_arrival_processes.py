"""Vehicle data extraction as a Poisson process.

Walks through the arrival layer: exponential inter-arrival gaps of the
homogeneous process, the cumulative-rate integral of a time-varying
intensity, and Lewis-Shedler thinning. Saves a histogram to
demos/output/ when matplotlib is available.
"""

import math
import pathlib

import numpy as np

from bvib.arrivals import (
    Intensity,
    cumulative_rate,
    interarrival_cdf,
    sample_interarrival,
    sample_process,
)

rng = np.random.default_rng(42)

# --- homogeneous case: gaps are exponential with mean 1/rate ---------------
rate = 2.0
gaps = np.array([sample_interarrival(rate, rng) for _ in range(50_000)])
print(f"rate {rate}/s: empirical mean gap {gaps.mean():.4f} s (theory {1 / rate:.4f} s)")
print(f"P(gap <= 1) empirical {np.mean(gaps <= 1.0):.4f} vs CDF {interarrival_cdf(rate, 1.0):.4f}")

# --- a whole sample path ----------------------------------------------------
path = sample_process(Intensity.constant(rate), horizon=10.0, rng=rng)
print(f"\n10-second window realizes {len(path)} extraction events:")
print("  " + ", ".join(f"{t:.2f}" for t in path.times[:12]) + (" ..." if len(path) > 12 else ""))

# --- time-varying intensity: rush hour ramps up and back down ---------------
peak = 4.0
rush = Intensity.time_varying(lambda t: peak * math.sin(math.pi * t / 10.0) ** 2, rate_max=peak)
expected = cumulative_rate(rush, 10.0)
counts = [len(sample_process(rush, 10.0, rng)) for _ in range(2_000)]
print(f"\nrush-hour intensity: expected events over 10 s = {expected:.3f}")
print(f"thinned sampler realizes {np.mean(counts):.3f} on average over {len(counts)} runs")

# --- optional plot -----------------------------------------------------------
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not available; skipping the plot")
else:
    out = pathlib.Path(__file__).parent / "output"
    out.mkdir(exist_ok=True)
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.2))
    left.hist(gaps, bins=80, density=True, alpha=0.7, label="sampled gaps")
    xs = np.linspace(0, gaps.max(), 200)
    left.plot(xs, rate * np.exp(-rate * xs), "k--", label="exponential density")
    left.set_xlabel("gap (s)")
    left.legend()
    right.hist(counts, bins=range(0, max(counts) + 2), density=True, alpha=0.7)
    right.axvline(expected, color="k", linestyle="--", label="expected count")
    right.set_xlabel("events per 10 s window")
    right.legend()
    fig.tight_layout()
    fig.savefig(out / "arrivals.png", dpi=120)
    print(f"\nwrote {out / 'arrivals.png'}")
