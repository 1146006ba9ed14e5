"""Split variational-bottleneck training on one encoder/decoder pair.

Trains the desk-scale architecture on the seeded synthetic set and prints
the two mutual-information bounds as they move: the input-information upper
bound compresses while the label-information lower bound climbs toward
zero. Ends with test accuracy and a latent-noise sanity check.
"""

import pathlib

import numpy as np

from bvib.config import ScenarioConfig
from bvib.simulator import run_test, run_training
from bvib.vib import decode, encode, reparameterize

config = ScenarioConfig(
    epochs=20,
    batches_per_epoch=16,
    vehicles_per_server=1,
    servers=1,
    extraction_rate=0.2,
    seed=7,
)
print(f"architecture: encoder {config.encoder_widths}, decoder {config.decoder_widths}")
print(f"dataset: {config.train_size} train / {config.test_size} test synthetic samples\n")

result = run_training(config)
metrics = result.metrics
print("epoch   I(Z,X) upper   I(Z,Y) lower")
for epoch in (1, 2, 5, 10, 15, 20):
    print(f"{epoch:5d}   {metrics.epoch_izx[epoch - 1]:12.3f}   {metrics.epoch_izy[epoch - 1]:12.4f}")

tested = run_test(config, result.models, epochs=3)
print(f"\nmean test accuracy over 3 stochastic passes: {tested.mean_accuracy:.2f}%")

# --- peek at the latent space --------------------------------------------------
encoder = result.models.encoders[0]
decoder = result.models.decoders[0]
from bvib.simulator import build_datasets

_, test = build_datasets(config)
sample = test.x[:5]
posterior = encode(sample, encoder)
print("\nlatent posteriors of five test points:")
print("  mean magnitude:", np.abs(posterior.mu).mean(axis=1).round(3))
print("  variance mean :", posterior.var.mean(axis=1).round(3))
z = reparameterize(posterior, np.random.default_rng(0).standard_normal(posterior.mu.shape))
print("  decoded labels:", decode(z, decoder).argmax(axis=1), "true:", test.y[:5])

# --- optional trend plot ---------------------------------------------------------
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not available; skipping the plot")
else:
    out = pathlib.Path(__file__).parent / "output"
    out.mkdir(exist_ok=True)
    epochs = np.arange(1, config.epochs + 1)
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.2))
    left.plot(epochs, metrics.epoch_izx)
    left.set_xlabel("epoch")
    left.set_ylabel("input-information upper bound (nats)")
    right.plot(epochs, metrics.epoch_izy)
    right.set_xlabel("epoch")
    right.set_ylabel("label-information lower bound (nats)")
    fig.tight_layout()
    fig.savefig(out / "training_trends.png", dpi=120)
    print(f"\nwrote {out / 'training_trends.png'}")
