"""The end-to-end delay chain and its optimal extraction rate.

Extract too slowly and the pipeline starves; extract too fast and the
vehicles of one server collide and retry. The expected delay is convex in
the rate, its minimizer has a closed form, and the online controller snaps
to it whenever the fleet changes.
"""

import pathlib

import numpy as np

from bvib.latency import DelayParams, collision_probability, expected_total_delay
from bvib.rate_optimizer import RateController, optimal_rate

params = DelayParams(
    extraction_rate=0.2,
    encode_delay=1.0,
    decode_delay=0.5,
    follower_delay=0.1,
    broadcast_delay=0.1,
    term_length=600.0,
    election_base=0.01 / np.log(10),
    vehicles_per_server=5,
    server_count=10,
    attack_strength=0,
    drop_prob=0.10,
)

print("collision probability at the default rate:",
      f"{collision_probability(0.2, 5, params.collision_spacing):.5f}")
print(f"expected batch delay at 0.2/s: {expected_total_delay(params):.3f} s")

best = optimal_rate(5, params.collision_spacing, params.encode_delay)
print(f"optimal extraction rate:       {best:.4f}/s "
      f"-> {expected_total_delay(params, extraction_rate=best):.3f} s")

# --- the U-shape, per fleet size ----------------------------------------------
print("\nfleet-size sweep (optimum falls as vehicles per server grow):")
for m in (2, 3, 4):
    rate_m = optimal_rate(m, params.collision_spacing, params.encode_delay)
    print(f"  m={m}: optimal rate {rate_m:8.4f}/s")

# --- attack strength inflates every delay ---------------------------------------
print("\nattack sweep at N=10 (delay strictly increases):")
for a in range(5):
    attacked = DelayParams(
        extraction_rate=0.2, encode_delay=1.0, decode_delay=0.5, follower_delay=0.1,
        broadcast_delay=0.1, term_length=600.0, election_base=0.01 / np.log(10),
        vehicles_per_server=5, server_count=10, attack_strength=a, drop_prob=0.10,
    )
    print(f"  a={a}: {expected_total_delay(attacked):.6f} s")

# --- the online loop -------------------------------------------------------------
controller = RateController(spacing=params.collision_spacing, encode_delay=1.0)
print("\nonline adaptation:")
rate, changed = controller.observe(0.2, 5, 10)
print(f"  observed 0.2/s with m=5  -> target {rate:.4f}, adjust: {changed}")
rate, changed = controller.observe(rate, 5, 10)
print(f"  already on target        -> target {rate:.4f}, adjust: {changed}")
rate, changed = controller.observe(rate, 6, 10)
print(f"  fleet grew to m=6        -> target {rate:.4f}, adjust: {changed}")

# --- optional plot ----------------------------------------------------------------
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not available; skipping the plot")
else:
    out = pathlib.Path(__file__).parent / "output"
    out.mkdir(exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    for m in (2, 3, 4):
        fleet = DelayParams(
            extraction_rate=0.2, encode_delay=1.0, decode_delay=0.5, follower_delay=0.1,
            broadcast_delay=0.1, term_length=600.0, election_base=0.01 / np.log(10),
            vehicles_per_server=m, server_count=10, attack_strength=0, drop_prob=0.10,
        )
        star = optimal_rate(m, fleet.collision_spacing, fleet.encode_delay)
        grid = np.linspace(0.15 * star, 3.0 * star, 200)
        ax.plot(grid, expected_total_delay(fleet, extraction_rate=grid), label=f"m={m}")
        ax.axvline(star, linestyle=":", alpha=0.4)
    ax.set_xlabel("extraction rate (events/s)")
    ax.set_ylabel("expected batch delay (s)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "delay_curves.png", dpi=120)
    print(f"\nwrote {out / 'delay_curves.png'}")
