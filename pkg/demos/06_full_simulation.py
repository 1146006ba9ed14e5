"""The whole pipeline: extraction, collisions, lossy channel, split
training, ledger blocks, and elections in one deterministic run.

A small fleet (two vehicles per server, three servers) trains for a few
epochs; the run reports the event counts, the per-epoch bounds, the
simulated clock, and the verified chain, then re-runs itself to show the
byte-identical determinism contract.
"""

import numpy as np

from bvib.channel import derive
from bvib.config import ScenarioConfig
from bvib.consensus import verify_chain
from bvib.latency import expected_total_delay
from bvib.simulator import measure_delay, run_test, run_training

config = ScenarioConfig(
    epochs=12,
    batches_per_epoch=8,
    vehicles_per_server=2,
    servers=3,
    extraction_rate=0.5,
    learning_rate=0.01,
    dim=64,
    encoder_widths=(64, 32, 16),
    decoder_widths=(8, 32, 10),
    per_class=40,
    train_size=288,
    test_size=96,
    seed=20,
)

result = run_training(config)
m = result.metrics
print(f"{config.epochs} epochs x {config.batches_per_epoch} batches over "
      f"{config.n_vehicles} vehicles / {config.servers} servers")
print(f"collisions {m.collisions}, channel drops {m.channel_drops}, "
      f"aborts {m.aborts}, elections {m.elections}")
print(f"blocks committed {m.blocks_committed}, chain verifies: "
      f"{verify_chain(result.chain) is None}")
print(f"simulated time {m.total_time:.1f} s "
      f"({np.mean(m.batch_delays):.2f} s per batch on average)\n")

print("epoch   I(Z,X) upper   I(Z,Y) lower   mean delay")
for i in range(0, config.epochs, 2):
    print(f"{i + 1:5d}   {m.epoch_izx[i]:12.3f}   {m.epoch_izy[i]:12.4f}   {m.epoch_delay_mean[i]:10.2f}")

tested = run_test(config, result.models, epochs=2)
print(f"\ntest accuracy: {tested.mean_accuracy:.2f}%")

# --- how close is the simulated delay to the closed form? -----------------------
derived = derive(config.channel_params())
analytic = expected_total_delay(config.delay_params(derived.drop_prob))
simulated = measure_delay(config, 2_000)
print(f"\nmean batch delay: simulated {simulated:.3f} s vs analytic {analytic:.3f} s "
      f"({100 * abs(simulated - analytic) / analytic:.1f}% apart)")

# --- determinism -----------------------------------------------------------------
again = run_training(config)
print("\nsame seed, same bytes:",
      again.metrics.to_csv() == m.to_csv() and again.chain_digest() == result.chain_digest())
