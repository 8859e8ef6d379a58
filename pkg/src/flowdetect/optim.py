"""Adam and gradient utilities over ordered ``{name: array}`` parameter dicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError

Params = dict[str, np.ndarray]


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    config: AdamConfig = field(default_factory=AdamConfig)
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Params, config: AdamConfig | None = None) -> "AdamState":
        return cls(
            config or AdamConfig(),
            0,
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


def _congruent(params: Params, other: Params, what: str):
    if list(params) != list(other):
        raise ContractError(f"{what} keys {list(other)} do not match parameters {list(params)}")
    for k, p in params.items():
        if other[k].shape != p.shape:
            raise ContractError(f"{what}[{k!r}] has shape {other[k].shape}, parameter has {p.shape}")


def adam_step(params: Params, grads: Params, state: AdamState) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    _congruent(params, grads, "grads")
    if not state.m:
        state = AdamState.zeros_like(params, state.config)
    _congruent(params, state.m, "first moment")
    _congruent(params, state.v, "second moment")

    cfg = state.config
    t = state.t + 1
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        new_params[k] = p - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        m_new[k] = m
        v_new[k] = v
    return new_params, AdamState(cfg, t, m_new, v_new)


def global_norm(grads: Params) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_global_norm(grads: Params, max_norm: float) -> Params:
    """Rescale every gradient by ``max_norm / norm`` when the joint L2 norm exceeds ``max_norm``."""
    if not max_norm > 0:
        raise ConfigError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def flatten(params: Params) -> np.ndarray:
    if not params:
        return np.zeros(0)
    return np.concatenate([p.ravel() for p in params.values()])


def unflatten(vec: np.ndarray, like: Params) -> Params:
    out, pos = {}, 0
    for k, p in like.items():
        out[k] = np.asarray(vec[pos:pos + p.size], dtype=np.float64).reshape(p.shape)
        pos += p.size
    if pos != len(vec):
        raise ContractError(f"vector of length {len(vec)} does not fit {pos} parameters")
    return out
