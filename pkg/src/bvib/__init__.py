"""Simulation lab for blockchain-coordinated split variational-information-
bottleneck training over lossy vehicular links.

Library layers, bottom up: :mod:`bvib.arrivals` (Poisson extraction),
:mod:`bvib.channel` (Gilbert-Elliott link model and special functions),
:mod:`bvib.latency` / :mod:`bvib.rate_optimizer` (closed-form delay and its
minimizing extraction rate), :mod:`bvib.vib` (split encoder/decoder trainer),
:mod:`bvib.consensus` (Raft-lite elections and hash-linked blocks),
:mod:`bvib.simulator` (the event loop tying everything together), and
:mod:`bvib.config` / :mod:`bvib.datasets` / :mod:`bvib.cli` for scenarios,
data, and the command line.
"""

from .arrivals import (
    ArrivalSequence,
    Intensity,
    conditional_point_cdf,
    cumulative_rate,
    interarrival_cdf,
    sample_interarrival,
    sample_process,
)
from .channel import (
    ChannelDerived,
    ChannelParams,
    ChannelState,
    bessel_j0,
    derive,
    drop_probability,
    marcum_q1,
    step,
)
from .config import ConfigError, ScenarioConfig, load_config, save_config
from .consensus import (
    Block,
    Cluster,
    LedgerEntry,
    Role,
    ServerNode,
    collect_and_commit,
    elect_leader,
    inject_attack,
    record_entry,
    tick,
    verify_chain,
)
from .datasets import Dataset, load_idx_dataset, parse_idx, synth_dataset
from .latency import (
    DelayParams,
    DivergentDelayError,
    arrival_delay,
    collision_probability,
    election_overhead,
    election_time,
    expected_extraction_delay,
    expected_total_delay,
    send_delay,
)
from .rate_optimizer import (
    OptimizerCoefficients,
    RateController,
    coefficients,
    delay_derivative,
    optimal_rate,
)
from .simulator import (
    FleetModels,
    RunMetrics,
    RunResult,
    TestResult,
    measure_delay,
    run_test,
    run_training,
    sweep,
)
from .vib import (
    AdamState,
    DenseNet,
    EncoderOutput,
    SplitModel,
    VibLoss,
    accuracy,
    adam_step,
    count_neurons,
    decode,
    encode,
    epoch_mutual_info,
    reparameterize,
    split_backward,
    vib_loss,
)

__version__ = "0.1.0"
