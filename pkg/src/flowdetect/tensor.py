"""Dense float64 arrays, deterministic matmul, activations and a seedable RNG.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Gradients are
computed explicitly by each layer; there is no autodiff graph.

The random generator is xoshiro256** whose 256-bit state is filled by four
successive splitmix64 outputs. A float in [0, 1) is ``(u64 >> 11) * 2**-53``.
Bounded integers use rejection sampling on ``u64 % bound``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import DimensionError, NonFiniteError

__all__ = [
    "Rng",
    "as_tensor",
    "check_finite",
    "elementwise",
    "fan_in_bound",
    "init_uniform",
    "matmul",
    "sigmoid",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_MIX = 0xD1B54A32D192ED03


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.isfinite(x).all():
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


# --------------------------------------------------------------------------
# matmul


@njit(cache=True)
def _matmul_kernel(a, b, out):
    m, k = a.shape
    p = b.shape[1]
    acc = np.empty(p)
    for i in range(m):
        acc[:] = 0.0
        # i-k-j order: every out[i, j] accumulates over k left to right.
        for kk in range(k):
            aik = a[i, kk]
            bk = b[kk]
            for j in range(p):
                acc[j] += aik * bk[j]
        out[i, :] = acc


def matmul(a, b) -> np.ndarray:
    """Matrix product with a fixed accumulation order.

    Each output element is summed over the inner index in increasing order,
    so a row of the result does not depend on how many other rows are
    computed alongside it.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.float64)
    _matmul_kernel(a, b, out)
    return check_finite(out, "matmul result")


# --------------------------------------------------------------------------
# elementwise


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split on sign so exp never overflows.
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_UNARY = {
    "sigmoid": sigmoid,
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
}
_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def elementwise(op: str, a, b=None) -> np.ndarray:
    a = as_tensor(a)
    if op in _BINARY:
        if b is None:
            raise ValueError(f"{op} needs two operands")
        b = as_tensor(b)
        if a.shape != b.shape:
            raise DimensionError(f"{op} shape mismatch: {a.shape} vs {b.shape}")
        out = _BINARY[op](a, b)
    elif op in _UNARY:
        out = _UNARY[op](a)
    else:
        raise ValueError(f"unknown elementwise op {op!r}")
    return check_finite(out, f"{op} result")


# --------------------------------------------------------------------------
# RNG


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step; returns ``(new_state, output)``."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


@njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _next(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.shape[0]):
        out[i] = _next(s)


@njit(cache=True)
def _fill_double(s, out):
    for i in range(out.shape[0]):
        out[i] = np.float64(_next(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _bounded(s, bound):
    # reject the low (2**64 mod bound) values so the modulo is unbiased
    threshold = (np.uint64(0) - bound) % bound
    r = _next(s)
    while r < threshold:
        r = _next(s)
    return r % bound


@njit(cache=True)
def _shuffle_indices(s, idx):
    for i in range(idx.shape[0] - 1, 0, -1):
        j = _bounded(s, np.uint64(i + 1))
        tmp = idx[i]
        idx[i] = idx[j]
        idx[j] = tmp


class Rng:
    """xoshiro256** generator seeded through splitmix64.

    ``stream`` selects an independent sequence for the same seed; the
    splitmix64 input is ``seed ^ (stream * 0xD1B54A32D192ED03)`` mod 2**64.
    """

    def __init__(self, seed: int, stream: int = 0):
        x = (int(seed) ^ (int(stream) * _STREAM_MIX)) & _MASK64
        words = []
        for _ in range(4):
            x, z = splitmix64(x)
            words.append(z)
        self._s = np.array(words, dtype=np.uint64)

    @property
    def state(self) -> tuple[int, ...]:
        return tuple(int(w) for w in self._s)

    def next_u64(self, size: int) -> np.ndarray:
        out = np.empty(int(size), dtype=np.uint64)
        _fill_u64(self._s, out)
        return out

    def random(self, shape=()) -> np.ndarray:
        """Doubles uniform on [0, 1)."""
        shape = (int(shape),) if np.isscalar(shape) else tuple(int(d) for d in shape)
        out = np.empty(math.prod(shape), dtype=np.float64)
        _fill_double(self._s, out)
        return out.reshape(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def integers(self, bound: int) -> int:
        if bound < 1:
            raise ValueError("bound must be >= 1")
        return int(_bounded(self._s, np.uint64(bound)))

    def permutation(self, n: int) -> np.ndarray:
        idx = np.arange(n, dtype=np.int64)
        _shuffle_indices(self._s, idx)
        return idx


def fan_in_bound(fan_in: int) -> float:
    """Initialization half-width ``1/sqrt(fan_in)``; every layer uses this rule."""
    return 1.0 / math.sqrt(fan_in)


def init_uniform(rng: Rng, shape, bound: float) -> np.ndarray:
    if not bound > 0:
        raise ValueError("bound must be positive")
    return rng.uniform(-bound, bound, tuple(shape))
