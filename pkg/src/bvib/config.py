"""Scenario configuration: defaults, YAML loading, validation.

Config files are YAML with nested sections (scenario / model / delay /
channel / dataset); every key is optional, an empty file means all defaults.
Parsing is strict: unknown sections or keys are errors, so a typo in one of
the many physical constants cannot silently fall back to a default. Loaded
configs are cross-checked against every module's preconditions (divergent
delay parameters, invalid channel physics, impossible shard sizes) before a
run starts.
"""

import math
from dataclasses import dataclass

import yaml

from .channel import ChannelParams, derive
from .latency import (
    DelayParams,
    DivergentDelayError,
    collision_spacing_from_slot,
    expected_total_delay,
)
from .rate_optimizer import optimal_rate

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "save_config", "dump_config"]

AUTO_RATE = "auto"

# Election base calibrated so a ten-server fleet elects in 10 ms.
DEFAULT_ELECTION_BASE = 0.01 / math.log(10)


class ConfigError(ValueError):
    """Bad configuration file or inconsistent parameter set."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one training/test run."""

    # scenario
    epochs: int = 300
    batches_per_epoch: int = 200
    vehicles_per_server: int = 5
    servers: int = 10
    extraction_rate: float | str = 0.2  # events/s, or "auto" for the optimizer
    beta: float = 1e-3
    learning_rate: float = 1e-3
    seed: int = 0
    reparam_mode: str = "stddev"
    # model (desk-scale double-head encoder: 32 means + 32 log-variances)
    encoder_widths: tuple = (784, 128, 64)
    decoder_widths: tuple = (32, 128, 10)
    # delay
    encode_delay: float = 1.0
    decode_delay: float = 0.5
    follower_delay: float = 0.1
    broadcast_delay: float = 0.1
    slot_interval: float = 0.001
    collision_spacing: float | None = None  # defaults to three slots
    term_length: float = 600.0
    election_base: float = DEFAULT_ELECTION_BASE
    attack_strength: int = 0
    # channel
    fade_margin: float = 10.0
    carrier_freq: float = 2.0e9
    velocity: float = 15.0
    capacity: float = 1000.0
    frame_fail_poor: float = 0.2
    frame_fail_ideal: float = 0.02
    # dataset
    dataset_kind: str = "synth"  # "synth" or "mnist"
    classes: int = 10
    per_class: int = 128
    dim: int = 784
    spread: float = 0.25
    train_size: int = 1024
    test_size: int = 256
    images_path: str | None = None
    labels_path: str | None = None
    test_images_path: str | None = None
    test_labels_path: str | None = None

    def __post_init__(self):
        if self.collision_spacing is None:
            object.__setattr__(
                self, "collision_spacing", collision_spacing_from_slot(self.slot_interval)
            )
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))

    # -- derived views -----------------------------------------------------

    @property
    def n_vehicles(self) -> int:
        return self.vehicles_per_server * self.servers

    @property
    def latent_width(self) -> int:
        return self.encoder_widths[-1] // 2

    def channel_params(self) -> ChannelParams:
        return ChannelParams(
            fade_margin=self.fade_margin,
            carrier_freq=self.carrier_freq,
            velocity=self.velocity,
            capacity=self.capacity,
            frame_fail_poor=self.frame_fail_poor,
            frame_fail_ideal=self.frame_fail_ideal,
        )

    def resolved_rate(self) -> float:
        """The extraction rate, solving "auto" through the rate optimizer."""
        if self.extraction_rate == AUTO_RATE:
            return optimal_rate(self.vehicles_per_server, self.collision_spacing, self.encode_delay)
        return float(self.extraction_rate)

    def delay_params(self, drop_prob: float) -> DelayParams:
        return DelayParams(
            extraction_rate=self.resolved_rate(),
            encode_delay=self.encode_delay,
            decode_delay=self.decode_delay,
            follower_delay=self.follower_delay,
            broadcast_delay=self.broadcast_delay,
            term_length=self.term_length,
            election_base=self.election_base,
            vehicles_per_server=self.vehicles_per_server,
            server_count=self.servers,
            attack_strength=self.attack_strength,
            drop_prob=drop_prob,
            slot_interval=self.slot_interval,
            collision_spacing=self.collision_spacing,
        )

    def validate(self) -> "ScenarioConfig":
        """Cross-check against every module's preconditions; returns self."""
        for name in ("epochs", "batches_per_epoch", "vehicles_per_server", "servers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not (0 <= self.attack_strength < self.servers / 2):
            raise ConfigError(
                f"attack_strength must satisfy 0 <= a < N/2, got a={self.attack_strength} "
                f"with N={self.servers}"
            )
        if self.reparam_mode not in ("stddev", "literal"):
            raise ConfigError(f"reparam_mode must be 'stddev' or 'literal', got {self.reparam_mode!r}")
        if self.beta <= 0 or self.learning_rate <= 0:
            raise ConfigError("beta and learning_rate must be positive")
        if self.extraction_rate != AUTO_RATE:
            try:
                rate = float(self.extraction_rate)
            except (TypeError, ValueError):
                raise ConfigError(
                    f"extraction_rate must be a number or 'auto', got {self.extraction_rate!r}"
                ) from None
            if rate <= 0:
                raise ConfigError(f"extraction_rate must be positive, got {rate}")
        elif self.vehicles_per_server < 2:
            raise ConfigError("extraction_rate 'auto' needs at least two vehicles per server")
        if len(self.encoder_widths) < 2 or len(self.decoder_widths) < 2:
            raise ConfigError("encoder and decoder need input and output widths")
        if self.encoder_widths[-1] % 2 != 0:
            raise ConfigError(
                f"encoder head width must be even (mean + log-variance), "
                f"got {self.encoder_widths[-1]}"
            )
        if self.decoder_widths[0] != self.latent_width:
            raise ConfigError(
                f"decoder input width {self.decoder_widths[0]} must equal the latent "
                f"width {self.latent_width} (= half the encoder head)"
            )
        if self.dataset_kind not in ("synth", "mnist"):
            raise ConfigError(f"dataset_kind must be 'synth' or 'mnist', got {self.dataset_kind!r}")
        if self.dataset_kind == "mnist":
            for name in ("images_path", "labels_path", "test_images_path", "test_labels_path"):
                if getattr(self, name) is None:
                    raise ConfigError(f"mnist dataset needs {name}")
        else:
            if self.dim != self.encoder_widths[0]:
                raise ConfigError(
                    f"dataset dim {self.dim} must match encoder input width "
                    f"{self.encoder_widths[0]}"
                )
            if self.classes * self.per_class < self.train_size + self.test_size:
                raise ConfigError(
                    f"synthetic pool {self.classes}x{self.per_class} is smaller than "
                    f"train+test = {self.train_size + self.test_size}"
                )
        if self.train_size < self.n_vehicles or self.test_size < self.n_vehicles:
            raise ConfigError(
                f"train/test sizes ({self.train_size}/{self.test_size}) must cover all "
                f"{self.n_vehicles} vehicle shards; shards are cycled when an epoch asks "
                "for more batches than a shard holds"
            )
        # channel physics must derive to valid probabilities
        try:
            derived = derive(self.channel_params())
        except ValueError as exc:
            raise ConfigError(f"channel parameters are invalid: {exc}") from exc
        # the analytic delay must exist (divergence rejected at load)
        try:
            expected_total_delay(self.delay_params(derived.drop_prob))
        except (ValueError, DivergentDelayError) as exc:
            raise ConfigError(f"delay parameters are invalid: {exc}") from exc
        return self


_SECTIONS: dict[str, tuple[str, ...]] = {
    "scenario": (
        "epochs",
        "batches_per_epoch",
        "vehicles_per_server",
        "servers",
        "extraction_rate",
        "beta",
        "learning_rate",
        "seed",
        "reparam_mode",
    ),
    "model": ("encoder_widths", "decoder_widths"),
    "delay": (
        "encode_delay",
        "decode_delay",
        "follower_delay",
        "broadcast_delay",
        "slot_interval",
        "collision_spacing",
        "term_length",
        "election_base",
        "attack_strength",
    ),
    "channel": (
        "fade_margin",
        "carrier_freq",
        "velocity",
        "capacity",
        "frame_fail_poor",
        "frame_fail_ideal",
    ),
    "dataset": (
        "dataset_kind",
        "classes",
        "per_class",
        "dim",
        "spread",
        "train_size",
        "test_size",
        "images_path",
        "labels_path",
        "test_images_path",
        "test_labels_path",
    ),
}

# keys renamed between file and dataclass (file name -> field name)
_FILE_ALIASES = {"kind": "dataset_kind"}
_FIELD_ALIASES = {v: k for k, v in _FILE_ALIASES.items()}

_INT_FIELDS = {
    "epochs", "batches_per_epoch", "vehicles_per_server", "servers", "seed",
    "attack_strength", "classes", "per_class", "dim", "train_size", "test_size",
}
_FLOAT_FIELDS = {
    "beta", "learning_rate", "encode_delay", "decode_delay", "follower_delay",
    "broadcast_delay", "slot_interval", "collision_spacing", "term_length",
    "election_base", "fade_margin", "carrier_freq", "velocity", "capacity",
    "frame_fail_poor", "frame_fail_ideal", "spread",
}


def _coerce(name: str, value):
    """Normalize YAML scalars; pyyaml reads 2.0e9 as a string, so numeric
    fields are converted here with a named error instead of failing later."""
    if value is None:
        return None
    try:
        if name in _INT_FIELDS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(value)
        if name in _FLOAT_FIELDS:
            return float(value)
        if name == "extraction_rate":
            return value if value == AUTO_RATE else float(value)
        if name in ("encoder_widths", "decoder_widths"):
            return tuple(int(w) for w in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name!r}: {value!r} ({exc})") from exc
    return value


def config_to_dict(config: ScenarioConfig) -> dict:
    """Nested plain-dict form, lists for widths (YAML-friendly)."""
    out: dict = {}
    for section, names in _SECTIONS.items():
        sec: dict = {}
        for name in names:
            value = getattr(config, name)
            if isinstance(value, tuple):
                value = list(value)
            sec[_FIELD_ALIASES.get(name, name)] = value
        out[section] = sec
    return out


def config_from_dict(raw: dict | None) -> ScenarioConfig:
    """Strict parse of the nested mapping; unknown names are errors."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    kwargs: dict = {}
    for section, content in raw.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if content is None:
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in content.items():
            name = _FILE_ALIASES.get(key, key)
            if name not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section {section!r}")
            kwargs[name] = _coerce(name, value)
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    """Load and validate a YAML config file; empty file means all defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return config_from_dict(raw).validate()


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=True)


def save_config(path, config: ScenarioConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(config))
