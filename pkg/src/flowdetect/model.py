"""CNN-BiLSTM binary scorer: conv blocks -> dropout -> BiLSTM -> dense -> sigmoid."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .container import atomic_write_bytes, pack, read_container, unpack
from .dataflow import PreprocStats
from .errors import ConfigError, DimensionError
from .optim import Params
from .tensor import Rng, check_finite, sigmoid

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    """Architecture. Each conv block is ``(out_channels, kernel, pool_window)``
    and applies conv -> relu -> max-pool."""

    T: int = 10
    n: int = 8
    conv_blocks: list[tuple[int, int, int]] = field(default_factory=lambda: [(32, 3, 2), (64, 3, 2)])
    dropout: float = 0.3
    hidden: int = 64

    def __post_init__(self):
        self.conv_blocks = [tuple(int(v) for v in blk) for blk in self.conv_blocks]
        if self.T < 1 or self.n < 1 or self.hidden < 1:
            raise ConfigError("T, n and hidden must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        self.seq_lengths()

    def seq_lengths(self) -> list[int]:
        """Sequence length entering each block, plus the length fed to the BiLSTM."""
        lengths = [self.T]
        t = self.T
        for out_ch, k, pool in self.conv_blocks:
            if min(out_ch, k, pool) < 1:
                raise ConfigError(f"invalid conv block {(out_ch, k, pool)}")
            if t < k:
                raise ConfigError(f"sequence of length {t} is shorter than kernel {k}")
            t = (t - k + 1) // pool
            if t < 1:
                raise ConfigError(f"conv blocks {self.conv_blocks} reduce T={self.T} to nothing")
            lengths.append(t)
        return lengths

    @property
    def lstm_input(self) -> int:
        return self.conv_blocks[-1][0] if self.conv_blocks else self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_blocks"] = [list(b) for b in self.conv_blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def init_params(config: ModelConfig, rng: Rng) -> Params:
    params: Params = {}
    in_ch = config.n
    for i, (out_ch, k, _) in enumerate(config.conv_blocks):
        p = L.init_conv1d(rng, in_ch, out_ch, k)
        params[f"conv{i}.w"], params[f"conv{i}.b"] = p.w, p.b
        in_ch = out_ch
    for direction in ("fwd", "bwd"):
        p = L.init_lstm(rng, in_ch, config.hidden)
        params[f"lstm_{direction}.W"], params[f"lstm_{direction}.U"], params[f"lstm_{direction}.b"] = p
    params["dense.W"], params["dense.b"] = L.init_dense(rng, 2 * config.hidden, 1)
    return params


def zeros_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _conv(params: Params, i: int) -> L.Conv1dParams:
    return L.Conv1dParams(params[f"conv{i}.w"], params[f"conv{i}.b"])


def _lstm(params: Params, direction: str) -> L.LstmParams:
    return L.LstmParams(params[f"lstm_{direction}.W"], params[f"lstm_{direction}.U"], params[f"lstm_{direction}.b"])


def forward(batch, params: Params, config: ModelConfig, training: bool = False, rng: Rng | None = None):
    """Scores in (0, 1) for a ``(B, T, n)`` batch, plus the caches for ``backward``."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (config.T, config.n):
        raise DimensionError(f"batch shape {x.shape} does not match (B, {config.T}, {config.n})")
    if training and config.dropout > 0 and rng is None:
        raise ConfigError("training with dropout needs an rng")
    caches = []
    for i, (_, _, pool) in enumerate(config.conv_blocks):
        x, c_conv = L.conv1d_forward(x, _conv(params, i))
        x, c_relu = L.relu_forward(x)
        x, c_pool = L.maxpool1d_forward(x, pool)
        caches.append((c_conv, c_relu, c_pool))
    x, c_drop = L.dropout_forward(x, config.dropout, rng, training)
    hc, c_lstm = L.bilstm_forward(x, _lstm(params, "fwd"), _lstm(params, "bwd"))
    z, c_dense = L.dense_forward(hc, params["dense.W"], params["dense.b"])
    scores = check_finite(sigmoid(z[:, 0]), "scores")
    return scores, {"blocks": caches, "dropout": c_drop, "bilstm": c_lstm, "dense": c_dense}


def backward(grad_logit: np.ndarray, caches: dict, params: Params, config: ModelConfig) -> Params:
    """Gradients of all parameters given d(loss)/d(logit) per sample."""
    grads: Params = {}
    g, grads["dense.W"], grads["dense.b"] = L.dense_backward(grad_logit[:, None], caches["dense"], params["dense.W"])
    g, gf, gb = L.bilstm_backward(g, caches["bilstm"], _lstm(params, "fwd"), _lstm(params, "bwd"))
    for direction, gp in (("fwd", gf), ("bwd", gb)):
        grads[f"lstm_{direction}.W"], grads[f"lstm_{direction}.U"], grads[f"lstm_{direction}.b"] = gp
    g = L.dropout_backward(g, caches["dropout"])
    for i in reversed(range(len(config.conv_blocks))):
        c_conv, c_relu, c_pool = caches["blocks"][i]
        g = L.maxpool1d_backward(g, c_pool)
        g = L.relu_backward(g, c_relu)
        g, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = L.conv1d_backward(g, c_conv, _conv(params, i))
    return {k: grads[k] for k in params}


def loss_and_grads(batch, labels, params: Params, config: ModelConfig, rng: Rng | None = None, training: bool = True):
    """Mean binary cross-entropy over the batch and its exact gradient.

    The head gradient is taken with respect to the logit, ``(s - y) / B``,
    which equals the chain rule through the clamped loss wherever the clamp
    is inactive and keeps saturated mistakes from losing their gradient.
    """
    scores, caches = forward(batch, params, config, training=training, rng=rng)
    labels = np.asarray(labels)
    if labels.shape != scores.shape:
        raise DimensionError(f"{labels.shape[0] if labels.ndim else 0} labels for {scores.shape[0]} samples")
    losses, _ = L.bce_loss(scores, labels)
    B = scores.shape[0]
    grad_logit = (scores - labels) / B
    return float(np.mean(losses)), backward(grad_logit, caches, params, config)


def predict_scores(sequences, params: Params, config: ModelConfig, batch_size: int = 512) -> np.ndarray:
    out = np.empty(len(sequences))
    for lo in range(0, len(sequences), batch_size):
        out[lo:lo + batch_size], _ = forward(sequences[lo:lo + batch_size], params, config, training=False)
    return out


# --------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: ModelConfig
    params: Params
    stats: PreprocStats
    threshold: float
    metadata: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        meta = {
            "config": self.config.to_dict(),
            "stats": self.stats.to_dict(),
            "threshold": float(self.threshold),
            "metadata": self.metadata,
        }
        return pack("checkpoint", CHECKPOINT_VERSION, meta, self.params)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        meta, arrays, _ = unpack(blob, "checkpoint", (CHECKPOINT_VERSION,))
        return cls._from_parts(meta, arrays)

    @classmethod
    def _from_parts(cls, meta: dict, arrays: dict) -> "Checkpoint":
        return cls(
            config=ModelConfig.from_dict(meta["config"]),
            params=dict(arrays),
            stats=PreprocStats.from_dict(meta["stats"]),
            threshold=meta["threshold"],
            metadata=meta["metadata"],
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    atomic_write_bytes(path, ckpt.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    meta, arrays, _ = read_container(path, "checkpoint", (CHECKPOINT_VERSION,))
    return Checkpoint._from_parts(meta, arrays)
