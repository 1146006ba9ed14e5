"""Deterministic event-driven orchestration of split training over the
modeled network.

One run wires every piece together: vehicles extract batches at Poisson
times, collide when their send instants fall within the guard spacing
(colliders re-extract), traverse a per-link Gilbert-Elliott channel
(drops re-extract too), and deliver posterior messages to their server.
Servers reparameterize, decode, score the two mutual-information bounds,
record ledger entries, and report to the leader, which commits a
hash-linked block per batch or aborts it; gradient updates apply only once
the batch commits. Term expiry and leader paralysis trigger re-elections.

Determinism contract: a single integer seed drives a fixed spawn layout of
child streams (dataset by config seed; then per-run: cluster, attack,
per-vehicle arrivals, channels, latent draws, and model-init streams, in
vehicle-id order), and
all simultaneous events are processed in (time, node id, sequence) order,
so two runs with one seed produce byte-identical artifacts. The simulated
clock advances only by batch delay samples and election durations, which is
asserted at the end of every run.

Per-batch delay aggregates the per-vehicle upload delays by averaging (the
per-update view the analytic chain models) and adds the constant service
time; epochs asking for more batches than a vehicle's shard holds cycle
through the shard.
"""

import dataclasses
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from . import consensus, vib
from .arrivals import sample_interarrival
from .rng import root_stream, spawn
from .config import ScenarioConfig, config_to_dict
from .datasets import Dataset, load_idx_dataset, synth_dataset, train_test_split

__all__ = [
    "build_datasets",
    "RunMetrics",
    "FleetModels",
    "RunResult",
    "TestResult",
    "run_training",
    "run_test",
    "measure_delay",
    "sweep",
    "atomic_write_text",
    "atomic_write_bytes",
    "write_metrics_csv",
    "write_summary_json",
]

# Stream-family salts: training, testing, and delay measurement draw from
# disjoint generator families of the same seed.
_TRAIN_SALT = 0
_TEST_SALT = 1
_DELAY_SALT = 2


@dataclass
class RunMetrics:
    """Everything a run measures.

    Per-epoch rows (bound means and delay means for training, accuracy for
    testing) plus event counts and the raw per-batch delay samples.
    """

    kind: str
    epoch_izx: list = field(default_factory=list)
    epoch_izy: list = field(default_factory=list)
    epoch_accuracy: list = field(default_factory=list)
    epoch_delay_mean: list = field(default_factory=list)
    batch_delays: list = field(default_factory=list)
    collisions: int = 0
    channel_drops: int = 0
    aborts: int = 0
    skipped_batches: int = 0
    elections: int = 0
    blocks_committed: int = 0
    total_time: float = 0.0

    def to_csv(self) -> str:
        """One row per epoch; columns depend on the run kind."""
        lines = []
        if self.kind == "train":
            lines.append("epoch,izx_upper,izy_lower,mean_batch_delay")
            for e, (izx, izy, delay) in enumerate(
                zip(self.epoch_izx, self.epoch_izy, self.epoch_delay_mean), start=1
            ):
                lines.append(f"{e},{izx!r},{izy!r},{delay!r}")
        else:
            lines.append("epoch,accuracy_pct")
            for e, acc in enumerate(self.epoch_accuracy, start=1):
                lines.append(f"{e},{acc!r}")
        return "\n".join(lines) + "\n"

    def counts(self) -> dict:
        return {
            "collisions": self.collisions,
            "channel_drops": self.channel_drops,
            "aborts": self.aborts,
            "skipped_batches": self.skipped_batches,
            "elections": self.elections,
            "blocks_committed": self.blocks_committed,
        }


@dataclass
class FleetModels:
    """Per-vehicle encoders and per-server decoders."""

    encoders: list
    decoders: list
    beta: float
    mode: str

    def pair(self, vehicle: int, server: int) -> vib.SplitModel:
        return vib.SplitModel(
            encoder=self.encoders[vehicle],
            decoder=self.decoders[server],
            beta=self.beta,
            mode=self.mode,
        )

    def digest(self) -> str:
        return vib.models_digest(self.encoders, self.decoders, self.beta, self.mode)


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: RunMetrics
    chain: list
    models: FleetModels
    election_log: list = field(default_factory=list)  # (term, leader id) per election
    attacked: frozenset = frozenset()

    def chain_digest(self) -> str:
        return consensus.chain_digest(self.chain)

    def summary_dict(self) -> dict:
        return {
            "kind": self.metrics.kind,
            "seed": self.config.seed,
            "config": config_to_dict(self.config),
            "counts": self.metrics.counts(),
            "total_simulated_time": self.metrics.total_time,
            "chain_digest": self.chain_digest(),
        }


@dataclass
class TestResult:
    config: ScenarioConfig
    metrics: RunMetrics
    chain: list
    mean_accuracy: float

    def chain_digest(self) -> str:
        return consensus.chain_digest(self.chain)

    def summary_dict(self) -> dict:
        return {
            "kind": "test",
            "seed": self.config.seed,
            "config": config_to_dict(self.config),
            "counts": self.metrics.counts(),
            "mean_accuracy": self.mean_accuracy,
            "total_simulated_time": self.metrics.total_time,
            "chain_digest": self.chain_digest(),
        }


# --------------------------------------------------------------------------
# dataset plumbing
# --------------------------------------------------------------------------


def build_datasets(config: ScenarioConfig) -> tuple[Dataset, Dataset]:
    """(train, test) pair from the config's dataset section."""
    if config.dataset_kind == "mnist":
        train = load_idx_dataset(config.images_path, config.labels_path)
        test = load_idx_dataset(config.test_images_path, config.test_labels_path)
        n_train = min(config.train_size, len(train))
        n_test = min(config.test_size, len(test))
        return (
            Dataset(x=train.x[:n_train], y=train.y[:n_train]),
            Dataset(x=test.x[:n_test], y=test.y[:n_test]),
        )
    pool = synth_dataset(
        classes=config.classes,
        per_class=config.per_class,
        dim=config.dim,
        spread=config.spread,
        seed=config.seed,
    )
    return train_test_split(pool, config.train_size, config.test_size)


def _shard(dataset: Dataset, vehicle: int, n_vehicles: int) -> Dataset:
    """Round-robin shard: vehicle v takes rows v, v+V, v+2V, ..."""
    return Dataset(x=dataset.x[vehicle::n_vehicles], y=dataset.y[vehicle::n_vehicles])


def _batch_of(shard: Dataset, batch_idx: int, batch_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic batch slice: wraps around when the epoch outruns the shard."""
    n = len(shard)
    start = (batch_idx * batch_size) % n
    idx = (start + np.arange(batch_size)) % n
    return shard.x[idx], shard.y[idx]


# --------------------------------------------------------------------------
# upload phase: collisions + channel retries
# --------------------------------------------------------------------------


def _simulate_server_upload(
    vehicle_ids,
    rate: float,
    encode_delay: float,
    spacing: float,
    arrival_rngs,
    derived,
    channel_states,
    channel_rngs,
    metrics: RunMetrics,
) -> dict:
    """Per-vehicle arrival delays for one server's batch upload.

    Round based: every still-pending vehicle draws a fresh extraction gap
    plus the encoding time; any pair of pending vehicles whose send instants
    fall within the guard spacing collide and re-extract, the rest face one
    channel slot each (a drop also re-extracts). Vehicles are processed in
    id order throughout.
    """
    pending = sorted(vehicle_ids)
    clock = {v: 0.0 for v in pending}
    arrival = {}
    while pending:
        for v in pending:
            clock[v] += sample_interarrival(rate, arrival_rngs[v]) + encode_delay
        collided = set()
        for i, v in enumerate(pending):
            for u in pending[i + 1 :]:
                if abs(clock[v] - clock[u]) <= spacing:
                    collided.add(v)
                    collided.add(u)
        metrics.collisions += len(collided)
        survivors = [v for v in pending if v not in collided]
        next_round = sorted(collided)
        for v in survivors:
            channel_states[v], delivered = chan.step(
                channel_states[v], derived, channel_rngs[v]
            )
            if delivered:
                arrival[v] = clock[v]
            else:
                metrics.channel_drops += 1
                next_round.append(v)
        pending = sorted(next_round)
    return arrival


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def _spawn_streams(seed: int, salt: int, n_vehicles: int, n_servers: int = 0):
    """Fixed spawn layout for one run: cluster, attack, per-vehicle arrival /
    channel / latent streams in vehicle-id order, then model-init streams
    (per-vehicle encoders followed by per-server decoders)."""
    root = root_stream(seed, salt)
    children = spawn(root, 2 + 4 * n_vehicles + n_servers)
    cluster_rng, attack_rng = children[0], children[1]
    arrivals = children[2 : 2 + n_vehicles]
    channels = children[2 + n_vehicles : 2 + 2 * n_vehicles]
    latents = children[2 + 2 * n_vehicles : 2 + 3 * n_vehicles]
    inits = children[2 + 3 * n_vehicles :]
    return cluster_rng, attack_rng, arrivals, channels, latents, inits


def run_training(config: ScenarioConfig) -> RunResult:
    """Execute the full training pipeline; see the module docstring."""
    config.validate()
    derived = chan.derive(config.channel_params())
    delay = config.delay_params(derived.drop_prob)
    rate = config.resolved_rate()
    n_vehicles = config.n_vehicles
    n_servers = config.servers

    cluster_rng, attack_rng, arrival_rngs, channel_rngs, latent_rngs, init_rngs = _spawn_streams(
        config.seed, _TRAIN_SALT, n_vehicles, n_servers
    )
    encoders = [vib.DenseNet(config.encoder_widths, rng=init_rngs[v]) for v in range(n_vehicles)]
    decoders = [
        vib.DenseNet(config.decoder_widths, rng=init_rngs[n_vehicles + s])
        for s in range(n_servers)
    ]
    models = FleetModels(encoders=encoders, decoders=decoders, beta=config.beta, mode=config.reparam_mode)
    enc_states = [
        vib.AdamState.for_params(e.parameters(), learning_rate=config.learning_rate)
        for e in encoders
    ]
    dec_states = [
        vib.AdamState.for_params(d.parameters(), learning_rate=config.learning_rate)
        for d in decoders
    ]

    train, _ = build_datasets(config)
    shards = [_shard(train, v, n_vehicles) for v in range(n_vehicles)]
    batch_sizes = [max(1, len(s) // config.batches_per_epoch) for s in shards]
    server_vehicles = [
        [v for v in range(n_vehicles) if v % n_servers == s] for s in range(n_servers)
    ]
    link_states = [chan.ChannelState.IDEAL] * n_vehicles

    cluster = consensus.Cluster(
        n_servers=n_servers,
        term_length=config.term_length,
        election_duration=delay.election_duration,
        rng=cluster_rng,
    )
    cluster.start()
    attacked = consensus.inject_attack(cluster.nodes, config.attack_strength, attack_rng)

    metrics = RunMetrics(kind="train")

    def run_batch(epoch: int, batch: int):
        """One attempt of one batch; returns (delay, committed, mean bounds)."""
        alive_servers = [s for s in range(n_servers) if cluster.nodes[s].alive]
        arrivals: dict[int, float] = {}
        for s in alive_servers:
            arrivals.update(
                _simulate_server_upload(
                    server_vehicles[s],
                    rate,
                    config.encode_delay,
                    config.collision_spacing,
                    arrival_rngs,
                    derived,
                    link_states,
                    channel_rngs,
                    metrics,
                )
            )
        batch_delay = float(np.mean(list(arrivals.values()))) + delay.service_time

        staged_enc: dict[int, list] = {}
        staged_dec: dict[int, list] = {}
        server_bounds: dict[int, tuple[float, float]] = {}
        for s in alive_servers:
            izx_list, izy_list = [], []
            dec_total = None
            for v in server_vehicles[s]:
                x, y = _batch_of(shards[v], batch, batch_sizes[v])
                pair = models.pair(v, s)
                loss, ctx = vib.vib_loss(x, y, pair, latent_rngs[v])
                grads = vib.split_backward(ctx, pair)
                staged_enc[v] = grads.encoder
                if dec_total is None:
                    dec_total = [g.copy() for g in grads.decoder]
                else:
                    for acc, g in zip(dec_total, grads.decoder):
                        acc += g
                izx_list.append(loss.izx_upper)
                izy_list.append(loss.izy_lower)
            m = len(server_vehicles[s])
            staged_dec[s] = [g / m for g in dec_total]
            server_bounds[s] = (float(np.mean(izx_list)), float(np.mean(izy_list)))
            consensus.record_entry(
                cluster.nodes[s],
                consensus.LedgerEntry.train(epoch, batch, *server_bounds[s]),
            )

        cluster.time += batch_delay
        leader = cluster.leader
        messages = [
            (s, cluster.nodes[s].ledger[-1])
            for s in alive_servers
            if s != leader.node_id
        ]
        block = consensus.collect_and_commit(
            leader, messages, cluster.chain, n_servers, cluster.time, nodes=cluster.nodes
        )
        if block is not None:
            for v, grads in staged_enc.items():
                new_params, enc_states[v] = vib.adam_step(
                    encoders[v].parameters(), grads, enc_states[v]
                )
                encoders[v].set_parameters(new_params)
            for s, grads in staged_dec.items():
                new_params, dec_states[s] = vib.adam_step(
                    decoders[s].parameters(), grads, dec_states[s]
                )
                decoders[s].set_parameters(new_params)
        bounds = (
            float(np.mean([b[0] for b in server_bounds.values()])),
            float(np.mean([b[1] for b in server_bounds.values()])),
        )
        return batch_delay, block is not None, bounds

    for epoch in range(1, config.epochs + 1):
        batch_losses = []
        epoch_delays = []
        for batch in range(config.batches_per_epoch):
            committed = False
            for _ in range(2):  # retry an aborted batch once, then skip
                consensus.tick(cluster, 0.0)
                metrics.elections = cluster.elections
                batch_delay, committed, bounds = run_batch(epoch, batch)
                metrics.batch_delays.append(batch_delay)
                epoch_delays.append(batch_delay)
                if committed:
                    metrics.blocks_committed += 1
                    break
                metrics.aborts += 1
            if not committed:
                metrics.skipped_batches += 1
            batch_losses.append(
                vib.VibLoss(
                    izy_lower=bounds[1],
                    izx_upper=bounds[0],
                    beta=config.beta,
                    objective=-bounds[1] + config.beta * bounds[0],
                )
            )
        izx, izy = vib.epoch_mutual_info(batch_losses)
        metrics.epoch_izx.append(izx)
        metrics.epoch_izy.append(izy)
        metrics.epoch_delay_mean.append(float(np.mean(epoch_delays)))

    metrics.elections = cluster.elections
    metrics.total_time = cluster.time
    _check_time_accounting(metrics, cluster)
    bad = consensus.verify_chain(cluster.chain)
    if bad is not None:
        raise RuntimeError(f"internal error: committed chain fails verification at height {bad}")
    return RunResult(
        config=config,
        metrics=metrics,
        chain=cluster.chain,
        models=models,
        election_log=list(cluster.election_log),
        attacked=frozenset(attacked),
    )


def _check_time_accounting(metrics: RunMetrics, cluster: consensus.Cluster) -> None:
    """The clock moves only through batch delays and elections."""
    expected = sum(metrics.batch_delays) + cluster.elections * cluster.election_duration
    if abs(cluster.time - expected) > 1e-9 * max(1.0, abs(cluster.time)):
        raise RuntimeError(
            f"simulated-time accounting violated: clock {cluster.time} vs "
            f"batch delays + elections {expected}"
        )


# --------------------------------------------------------------------------
# testing
# --------------------------------------------------------------------------


def run_test(config: ScenarioConfig, models: FleetModels, epochs: int | None = None) -> TestResult:
    """Forward-only evaluation of trained models.

    No parameter updates. Each epoch, every alive server decodes its
    vehicles' full test shards (one batch per epoch), records a prediction
    digest to its ledger, and the leader commits one block. Per-epoch
    accuracy is the fraction of matching labels across alive pairs; the
    headline number averages across epochs.
    """
    config.validate()
    if epochs is None:
        epochs = config.epochs
    n_vehicles = config.n_vehicles
    n_servers = config.servers
    if len(models.encoders) != n_vehicles or len(models.decoders) != n_servers:
        raise ValueError(
            f"models hold {len(models.encoders)} encoders / {len(models.decoders)} decoders "
            f"but the config asks for {n_vehicles} / {n_servers}"
        )
    if models.encoders[0].widths[0] != config.encoder_widths[0]:
        raise ValueError(
            f"model input width {models.encoders[0].widths[0]} does not match "
            f"config dataset width {config.encoder_widths[0]}"
        )
    cluster_rng, attack_rng, _, _, latent_rngs, _ = _spawn_streams(
        config.seed, _TEST_SALT, n_vehicles
    )
    _, test = build_datasets(config)
    shards = [_shard(test, v, n_vehicles) for v in range(n_vehicles)]
    server_vehicles = [
        [v for v in range(n_vehicles) if v % n_servers == s] for s in range(n_servers)
    ]
    delay = config.delay_params(0.0)
    cluster = consensus.Cluster(
        n_servers=n_servers,
        term_length=config.term_length,
        election_duration=delay.election_duration,
        rng=cluster_rng,
    )
    cluster.start()
    consensus.inject_attack(cluster.nodes, config.attack_strength, attack_rng)

    metrics = RunMetrics(kind="test")
    for epoch in range(1, epochs + 1):
        consensus.tick(cluster, 0.0)
        metrics.elections = cluster.elections
        predicted, actual = [], []
        alive_servers = [s for s in range(n_servers) if cluster.nodes[s].alive]
        for s in alive_servers:
            digest = hashlib.sha256()
            for v in server_vehicles[s]:
                shard = shards[v]
                enc_out = vib.encode(shard.x, models.encoders[v])
                eps = latent_rngs[v].standard_normal(enc_out.mu.shape)
                z = vib.reparameterize(enc_out, eps, mode=models.mode)
                log_probs = vib.decode(z, models.decoders[s])
                preds = log_probs.argmax(axis=1)
                predicted.append(preds)
                actual.append(shard.y)
                digest.update(np.ascontiguousarray(preds, dtype="<i8").tobytes())
            consensus.record_entry(
                cluster.nodes[s], consensus.LedgerEntry.test(epoch, 0, digest.digest())
            )
        leader = cluster.leader
        messages = [
            (s, cluster.nodes[s].ledger[-1]) for s in alive_servers if s != leader.node_id
        ]
        block = consensus.collect_and_commit(
            leader, messages, cluster.chain, n_servers, cluster.time, nodes=cluster.nodes
        )
        if block is None:
            metrics.aborts += 1
        else:
            metrics.blocks_committed += 1
        acc = vib.accuracy(np.concatenate(predicted), np.concatenate(actual))
        metrics.epoch_accuracy.append(acc)
    metrics.total_time = cluster.time
    mean_acc = float(np.mean(metrics.epoch_accuracy))
    return TestResult(config=config, metrics=metrics, chain=cluster.chain, mean_accuracy=mean_acc)


# --------------------------------------------------------------------------
# delay measurement and sweeps
# --------------------------------------------------------------------------


def measure_delay(config: ScenarioConfig, n_batches: int) -> float:
    """Empirical mean end-to-end batch delay over ``n_batches``.

    Runs only the delay chain (arrivals, collisions, channel retries,
    service time, elections); no neural training. The mean includes the
    amortized election time, mirroring the analytic total.
    """
    if n_batches < 1:
        raise ValueError(f"need at least one batch, got {n_batches}")
    config.validate()
    derived = chan.derive(config.channel_params())
    delay = config.delay_params(derived.drop_prob)
    rate = config.resolved_rate()
    n_vehicles = config.n_vehicles
    n_servers = config.servers
    cluster_rng, attack_rng, arrival_rngs, channel_rngs, _, _ = _spawn_streams(
        config.seed, _DELAY_SALT, n_vehicles
    )
    server_vehicles = [
        [v for v in range(n_vehicles) if v % n_servers == s] for s in range(n_servers)
    ]
    link_states = [chan.ChannelState.IDEAL] * n_vehicles
    cluster = consensus.Cluster(
        n_servers=n_servers,
        term_length=config.term_length,
        election_duration=delay.election_duration,
        rng=cluster_rng,
    )
    cluster.start()
    consensus.inject_attack(cluster.nodes, config.attack_strength, attack_rng)
    metrics = RunMetrics(kind="delay")
    for _ in range(n_batches):
        consensus.tick(cluster, 0.0)
        arrivals: dict[int, float] = {}
        for s in range(n_servers):
            if not cluster.nodes[s].alive:
                continue
            arrivals.update(
                _simulate_server_upload(
                    server_vehicles[s],
                    rate,
                    config.encode_delay,
                    config.collision_spacing,
                    arrival_rngs,
                    derived,
                    link_states,
                    channel_rngs,
                    metrics,
                )
            )
        cluster.time += float(np.mean(list(arrivals.values()))) + delay.service_time
    return cluster.time / n_batches


def sweep(config: ScenarioConfig, axis: str, grid, n_batches: int = 0) -> list[dict]:
    """Analytic (and optionally simulated) delay over a parameter grid.

    axis "extraction_rate": grid of rates. axis "attack_strength": grid of
    attack counts. axis "fleet": grid of (vehicles_per_server, servers)
    pairs. ``n_batches`` > 0 adds a simulated column via
    :func:`measure_delay`.
    """
    from .latency import expected_total_delay  # local to avoid cycle at import time

    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid must be non-empty")
    rows = []
    for value in grid:
        if axis == "extraction_rate":
            variant = dataclasses.replace(config, extraction_rate=float(value))
        elif axis == "attack_strength":
            variant = dataclasses.replace(config, attack_strength=int(value))
        elif axis == "fleet":
            m, n = value
            variant = dataclasses.replace(
                config, vehicles_per_server=int(m), servers=int(n)
            )
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        variant.validate()
        derived = chan.derive(variant.channel_params())
        expected = expected_total_delay(variant.delay_params(derived.drop_prob))
        row = {"axis": axis, "value": value, "expected_delay": expected}
        if n_batches > 0:
            row["simulated_delay"] = measure_delay(variant, n_batches)
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# artifact emission (atomic: temp file in place, then rename)
# --------------------------------------------------------------------------


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_metrics_csv(path, metrics: RunMetrics) -> None:
    atomic_write_text(path, metrics.to_csv())


def write_summary_json(path, summary: dict) -> None:
    atomic_write_text(path, json.dumps(summary, sort_keys=True, indent=2) + "\n")
