"""Split variational-information-bottleneck trainer.

A vehicle-side dense encoder emits a Gaussian posterior (mean head plus
log-variance head); the server side reparameterizes a latent sample, decodes
class log-probabilities, and scores the batch with two mutual-information
bounds: the mean true-label log-likelihood (lower bound on label
information, <= 0) and the mean KL divergence to a unit Gaussian (upper
bound on input information, >= 0). The minimized objective is
``-izy_lower + beta * izx_upper``.

Backpropagation is split the way the deployment is: decoder gradients stay
server-side, the gradients w.r.t. the transmitted mean/variance messages
cross the wire, and the vehicle continues through its encoder (including
the exp of the log-variance head). The concatenation equals monolithic
backpropagation of the same objective.

Everything is float64 numpy; forward passes cache activations for the
backward pass.
"""

import hashlib
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DenseNet",
    "EncoderOutput",
    "VibLoss",
    "SplitModel",
    "ForwardContext",
    "SplitGradients",
    "AdamState",
    "adam_step",
    "encode",
    "reparameterize",
    "decode",
    "vib_loss",
    "split_backward",
    "epoch_mutual_info",
    "accuracy",
    "count_neurons",
    "save_models",
    "load_models",
    "models_digest",
    "CHECKPOINT_MAGIC",
]

REPARAM_MODES = ("stddev", "literal")

CHECKPOINT_MAGIC = b"BVIBNET1"


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class DenseNet:
    """Fully connected net, ReLU hidden layers, linear output.

    ``widths`` lists the input width first. Parameters live in ``weights``
    (fan_in x fan_out matrices) and ``biases``; :meth:`parameters` flattens
    them weights-first for the optimizer. ``version`` bumps on every
    parameter write so stale forward caches are detectable.
    """

    def __init__(self, widths: Sequence[int], rng: np.random.Generator | None = None):
        widths = [int(w) for w in widths]
        if len(widths) < 2:
            raise ValueError(f"need at least input and output widths, got {widths}")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        self.widths = widths
        if rng is None:
            self.weights = [np.zeros((a, b)) for a, b in zip(widths, widths[1:])]
        else:
            self.weights = [glorot_uniform(rng, a, b) for a, b in zip(widths, widths[1:])]
        self.biases = [np.zeros(b) for b in widths[1:]]
        self.version = 0

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        n = self.n_layers
        if len(params) != 2 * n:
            raise ValueError(f"expected {2 * n} parameter arrays, got {len(params)}")
        for i in range(n):
            if params[i].shape != self.weights[i].shape or params[n + i].shape != self.biases[i].shape:
                raise ValueError("parameter shapes do not match the network")
        self.weights = [np.asarray(p, dtype=float) for p in params[:n]]
        self.biases = [np.asarray(p, dtype=float) for p in params[n:]]
        self.version += 1

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batch forward pass; returns (output, cached activations)."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ValueError(
                f"input must be (batch, {self.widths[0]}), got shape {x.shape}"
            )
        acts = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, acts

    def backward(
        self, acts: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients from cached activations; returns (param grads, input grad).

        Param grads come back in :meth:`parameters` order.
        """
        grad_w: list[np.ndarray] = []
        grad_b: list[np.ndarray] = []
        d = np.asarray(grad_out, dtype=float)
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                d = d * (acts[i + 1] > 0)
            grad_w.append(acts[i].T @ d)
            grad_b.append(d.sum(axis=0))
            d = d @ self.weights[i].T
        grad_w.reverse()
        grad_b.reverse()
        return grad_w + grad_b, d


@dataclass(frozen=True)
class EncoderOutput:
    """Gaussian posterior parameters: per-datum mean and (positive) variance."""

    mu: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.var.shape:
            raise ValueError(
                f"mean and variance shapes differ: {self.mu.shape} vs {self.var.shape}"
            )
        if np.any(self.var <= 0):
            raise ValueError("variance must be strictly positive")


@dataclass(frozen=True)
class VibLoss:
    """Per-batch mutual-information bounds and minimized objective.

    izy_lower: mean true-label log-likelihood (nats, <= 0).
    izx_upper: mean KL to the unit-Gaussian marginal (nats, >= 0).
    objective: -izy_lower + beta * izx_upper.
    """

    izy_lower: float
    izx_upper: float
    beta: float
    objective: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.izx_upper < -1e-9:
            raise ValueError(f"izx_upper is a KL mean and cannot be negative: {self.izx_upper}")
        if self.izy_lower > 1e-9:
            raise ValueError(f"izy_lower is a log-likelihood mean and cannot be positive: {self.izy_lower}")
        expect = -self.izy_lower + self.beta * self.izx_upper
        if abs(self.objective - expect) > 1e-9 * max(1.0, abs(expect)):
            raise ValueError(
                f"objective {self.objective} does not match -izy + beta*izx = {expect}"
            )


@dataclass(frozen=True)
class SplitModel:
    """Encoder/decoder pair plus objective settings.

    The encoder's final layer is a 2K-wide double head (K means, K
    log-variances); the decoder consumes K-wide latents.
    """

    encoder: DenseNet
    decoder: DenseNet
    beta: float = 1e-3
    mode: str = "stddev"

    def __post_init__(self):
        if self.encoder.widths[-1] % 2 != 0:
            raise ValueError(
                f"encoder head width must be even (mean + log-variance), "
                f"got {self.encoder.widths[-1]}"
            )
        if self.decoder.widths[0] != self.latent_width:
            raise ValueError(
                f"decoder input width {self.decoder.widths[0]} must equal the "
                f"latent width {self.latent_width}"
            )
        if self.mode not in REPARAM_MODES:
            raise ValueError(f"mode must be one of {REPARAM_MODES}, got {self.mode!r}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def latent_width(self) -> int:
        return self.encoder.widths[-1] // 2


@dataclass
class ForwardContext:
    """Recorded forward pass, consumed once by :func:`split_backward`."""

    x: np.ndarray
    labels: np.ndarray
    eps: np.ndarray
    encoder_acts: list[np.ndarray]
    decoder_acts: list[np.ndarray]
    mu: np.ndarray
    var: np.ndarray
    log_probs: np.ndarray
    loss: VibLoss
    mode: str
    encoder_version: int
    decoder_version: int


@dataclass(frozen=True)
class SplitGradients:
    """Gradients of one training step, grouped by where they live.

    ``boundary_mu`` / ``boundary_var`` are the gradients w.r.t. the
    transmitted posterior messages; they are all that crosses the wire.
    """

    decoder: list[np.ndarray]
    boundary_mu: np.ndarray
    boundary_var: np.ndarray
    encoder: list[np.ndarray]


def encode(x: np.ndarray, encoder: DenseNet) -> EncoderOutput:
    """Posterior parameters for ``x``: first-half head is the mean, the
    second half is exponentiated into a strictly positive variance."""
    squeeze = np.ndim(x) == 1
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    out, _ = encoder.forward(x2)
    k = encoder.widths[-1] // 2
    if encoder.widths[-1] % 2 != 0:
        raise ValueError(f"encoder head width must be even, got {encoder.widths[-1]}")
    mu, logvar = out[:, :k], out[:, k:]
    var = np.exp(logvar)
    if squeeze:
        return EncoderOutput(mu=mu[0], var=var[0])
    return EncoderOutput(mu=mu, var=var)


def reparameterize(out: EncoderOutput, eps: np.ndarray, mode: str = "stddev") -> np.ndarray:
    """Latent sample from posterior parameters and a standard-normal draw.

    stddev (default): mu + eps * sqrt(var), which realizes the stated
    posterior variance. literal: mu + eps * var, the variance-scaled
    variant, kept behind this switch for fidelity experiments.
    """
    if mode not in REPARAM_MODES:
        raise ValueError(f"mode must be one of {REPARAM_MODES}, got {mode!r}")
    eps = np.asarray(eps, dtype=float)
    if eps.shape != out.mu.shape:
        raise ValueError(f"eps shape {eps.shape} must match mu shape {out.mu.shape}")
    if mode == "stddev":
        return out.mu + eps * np.sqrt(out.var)
    return out.mu + eps * out.var


def decode(z: np.ndarray, decoder: DenseNet) -> np.ndarray:
    """Class log-probabilities (log-softmax of the decoder output)."""
    squeeze = np.ndim(z) == 1
    z2 = np.atleast_2d(np.asarray(z, dtype=float))
    logits, _ = decoder.forward(z2)
    log_probs = _log_softmax(logits)
    return log_probs[0] if squeeze else log_probs


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def vib_loss(
    x: np.ndarray,
    labels: np.ndarray,
    model: SplitModel,
    rng: np.random.Generator,
) -> tuple[VibLoss, ForwardContext]:
    """Forward pass and objective for one batch, with one latent sample per
    datum; the returned context feeds :func:`split_backward`."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"batch must be a non-empty (batch, features) array, got {x.shape}")
    if labels.shape != (x.shape[0],):
        raise ValueError(f"labels shape {labels.shape} must be ({x.shape[0]},)")
    enc_out, enc_acts = model.encoder.forward(x)
    k = model.latent_width
    mu, logvar = enc_out[:, :k], enc_out[:, k:]
    var = np.exp(logvar)
    eps = rng.standard_normal(mu.shape)
    z = mu + eps * (np.sqrt(var) if model.mode == "stddev" else var)
    logits, dec_acts = model.decoder.forward(z)
    log_probs = _log_softmax(logits)
    m = x.shape[0]
    izy_lower = float(log_probs[np.arange(m), labels].mean())
    kl = 0.5 * (mu**2 + var - 1.0 - logvar).sum(axis=1)
    izx_upper = float(kl.mean())
    loss = VibLoss(
        izy_lower=izy_lower,
        izx_upper=izx_upper,
        beta=model.beta,
        objective=-izy_lower + model.beta * izx_upper,
    )
    ctx = ForwardContext(
        x=x,
        labels=labels,
        eps=eps,
        encoder_acts=enc_acts,
        decoder_acts=dec_acts,
        mu=mu,
        var=var,
        log_probs=log_probs,
        loss=loss,
        mode=model.mode,
        encoder_version=model.encoder.version,
        decoder_version=model.decoder.version,
    )
    return loss, ctx


def split_backward(ctx: ForwardContext, model: SplitModel) -> SplitGradients:
    """Gradients of the recorded objective, split at the wire.

    Server side: decoder parameter gradients plus the objective's gradient
    w.r.t. the transmitted (mu, var) messages — through both the latent
    sample and the KL term. Vehicle side: those boundary gradients continue
    through the log-variance exponential and the encoder.
    """
    if (
        ctx.encoder_version != model.encoder.version
        or ctx.decoder_version != model.decoder.version
    ):
        raise ValueError(
            "forward context is stale: model parameters changed after the recorded pass"
        )
    m = ctx.x.shape[0]
    n_classes = ctx.log_probs.shape[1]
    # objective = -mean(logp[label]) + beta * mean(KL)
    d_logits = (np.exp(ctx.log_probs) - np.eye(n_classes)[ctx.labels]) / m
    dec_grads, d_z = model.decoder.backward(ctx.decoder_acts, d_logits)
    beta = model.beta
    d_mu = d_z + beta * ctx.mu / m
    if ctx.mode == "stddev":
        d_var = d_z * ctx.eps / (2.0 * np.sqrt(ctx.var)) + beta * (1.0 - 1.0 / ctx.var) / (2.0 * m)
    else:
        d_var = d_z * ctx.eps + beta * (1.0 - 1.0 / ctx.var) / (2.0 * m)
    d_logvar = d_var * ctx.var  # var = exp(logvar), owned by the vehicle
    d_head = np.concatenate([d_mu, d_logvar], axis=1)
    enc_grads, _ = model.encoder.backward(ctx.encoder_acts, d_head)
    return SplitGradients(
        decoder=dec_grads, boundary_mu=d_mu, boundary_var=d_var, encoder=enc_grads
    )


@dataclass
class AdamState:
    """Adam moment accumulators for one parameter list."""

    step: int
    learning_rate: float
    beta1: float
    beta2: float
    eps: float
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def for_params(
        cls,
        params: Sequence[np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "AdamState":
        return cls(
            step=0,
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh parameter arrays and the
    advanced state (moments updated in place)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state must have matching lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / bias1
        v_hat = state.v[i] / bias2
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps))
    return new_params, state


def epoch_mutual_info(batch_losses: Sequence[VibLoss]) -> tuple[float, float]:
    """Epoch means of the per-batch bounds: (izx_upper mean, izy_lower mean)."""
    if len(batch_losses) == 0:
        raise ValueError("need at least one batch loss")
    izx = float(np.mean([loss.izx_upper for loss in batch_losses]))
    izy = float(np.mean([loss.izy_lower for loss in batch_losses]))
    return izx, izy


def accuracy(predicted: np.ndarray, actual: np.ndarray) -> float:
    """Percentage of matching labels (the label-inequality indicator
    averaged and complemented)."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise ValueError(f"label shapes differ: {predicted.shape} vs {actual.shape}")
    if predicted.size == 0:
        raise ValueError("need at least one label")
    return float((1.0 - np.mean(predicted != actual)) * 100.0)


def count_neurons(widths: Sequence[int]) -> int:
    """Total neuron count of a layer-width list, input layer included."""
    if len(widths) == 0:
        raise ValueError("need at least one layer width")
    return int(sum(widths))


# --------------------------------------------------------------------------
# Checkpoints: flat versioned binary record.
#
#   magic   8 bytes  b"BVIBNET1"
#   mode    u8       0 = stddev, 1 = literal
#   beta    f64 LE
#   counts  u32 LE x 2   number of encoders, number of decoders
#   nets    encoders first, then decoders; each net:
#             u32 LE        number of widths
#             u32 LE x n    widths, input first
#             f64 LE        per layer: weight matrix row-major, then bias
# --------------------------------------------------------------------------


def _net_to_bytes(net: DenseNet) -> bytes:
    parts = [struct.pack("<I", len(net.widths))]
    parts.append(struct.pack(f"<{len(net.widths)}I", *net.widths))
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def _net_from_bytes(data: bytes, offset: int) -> tuple[DenseNet, int]:
    (n_widths,) = struct.unpack_from("<I", data, offset)
    offset += 4
    widths = list(struct.unpack_from(f"<{n_widths}I", data, offset))
    offset += 4 * n_widths
    net = DenseNet(widths)
    weights = []
    biases = []
    for a, b in zip(widths, widths[1:]):
        w = np.frombuffer(data, dtype="<f8", count=a * b, offset=offset).reshape(a, b)
        offset += 8 * a * b
        bias = np.frombuffer(data, dtype="<f8", count=b, offset=offset)
        offset += 8 * b
        weights.append(w.astype(float))
        biases.append(bias.astype(float))
    net.set_parameters(weights + biases)
    return net, offset


def models_to_bytes(
    encoders: Sequence[DenseNet], decoders: Sequence[DenseNet], beta: float, mode: str
) -> bytes:
    if mode not in REPARAM_MODES:
        raise ValueError(f"mode must be one of {REPARAM_MODES}, got {mode!r}")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<Bd", REPARAM_MODES.index(mode), beta),
        struct.pack("<II", len(encoders), len(decoders)),
    ]
    for net in list(encoders) + list(decoders):
        parts.append(_net_to_bytes(net))
    return b"".join(parts)


def models_from_bytes(data: bytes) -> tuple[list[DenseNet], list[DenseNet], float, str]:
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint: bad magic")
    offset = len(CHECKPOINT_MAGIC)
    mode_idx, beta = struct.unpack_from("<Bd", data, offset)
    offset += struct.calcsize("<Bd")
    if mode_idx >= len(REPARAM_MODES):
        raise ValueError(f"unknown reparameterization mode index {mode_idx}")
    n_enc, n_dec = struct.unpack_from("<II", data, offset)
    offset += 8
    nets = []
    for _ in range(n_enc + n_dec):
        net, offset = _net_from_bytes(data, offset)
        nets.append(net)
    if offset != len(data):
        raise ValueError(f"checkpoint has {len(data) - offset} trailing bytes")
    return nets[:n_enc], nets[n_enc:], beta, REPARAM_MODES[mode_idx]


def save_models(
    path, encoders: Sequence[DenseNet], decoders: Sequence[DenseNet], beta: float, mode: str
) -> None:
    with open(path, "wb") as fh:
        fh.write(models_to_bytes(encoders, decoders, beta, mode))


def load_models(path) -> tuple[list[DenseNet], list[DenseNet], float, str]:
    with open(path, "rb") as fh:
        return models_from_bytes(fh.read())


def models_digest(
    encoders: Sequence[DenseNet], decoders: Sequence[DenseNet], beta: float, mode: str
) -> str:
    """Hex digest of the canonical checkpoint bytes."""
    return hashlib.sha256(models_to_bytes(encoders, decoders, beta, mode)).hexdigest()
