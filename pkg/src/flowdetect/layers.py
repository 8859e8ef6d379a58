"""Layer primitives with explicit forward and backward passes.

Sequence inputs are ``(B, T, C)`` arrays; a 2-D ``(T, C)`` input is treated
as a single sample and the outputs drop the batch axis again. Each forward
returns ``(output, cache)`` and the matching backward consumes that cache.

Packed LSTM weights use gate order (input, forget, cell candidate, output).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, DimensionError, LabelError, SequenceTooShortError
from .tensor import Rng, fan_in_bound, init_uniform, matmul, sigmoid

BCE_EPS = 1e-7


class Conv1dParams(NamedTuple):
    w: np.ndarray  # (out_ch, in_ch, k)
    b: np.ndarray  # (out_ch,)


class LstmParams(NamedTuple):
    W: np.ndarray  # (4H, n)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


@dataclass
class Cache:
    kind: str
    data: dict = field(default_factory=dict)
    single: bool = False

    def expect(self, kind: str) -> "Cache":
        if self.kind != kind:
            raise ContractError(f"{kind} backward received a {self.kind} cache")
        return self


def _batched(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise DimensionError(f"expected a {ndim - 1}-D or {ndim}-D array, got shape {x.shape}")
    return x, False


def _unbatch(arr: np.ndarray, single: bool) -> np.ndarray:
    return arr[0] if single else arr


def _check_grad(grad: np.ndarray, shape: tuple, kind: str) -> np.ndarray:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != shape:
        raise ContractError(f"{kind} backward: gradient shape {grad.shape} != forward output {shape}")
    return grad


# --------------------------------------------------------------------------
# initialization


def init_conv1d(rng: Rng, in_ch: int, out_ch: int, k: int) -> Conv1dParams:
    if min(in_ch, out_ch, k) < 1:
        raise ConfigError("conv1d needs in_ch, out_ch, k >= 1")
    bound = fan_in_bound(in_ch * k)
    return Conv1dParams(init_uniform(rng, (out_ch, in_ch, k), bound), init_uniform(rng, (out_ch,), bound))


def init_lstm(rng: Rng, n: int, hidden: int) -> LstmParams:
    W = init_uniform(rng, (4 * hidden, n), fan_in_bound(n))
    U = init_uniform(rng, (4 * hidden, hidden), fan_in_bound(hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return LstmParams(W, U, b)


def init_dense(rng: Rng, d: int, out: int) -> tuple[np.ndarray, np.ndarray]:
    bound = fan_in_bound(d)
    return init_uniform(rng, (out, d), bound), init_uniform(rng, (out,), bound)


# --------------------------------------------------------------------------
# conv1d (valid padding, stride 1)


def conv1d_forward(x, p: Conv1dParams):
    x, single = _batched(x, 3)
    B, T, cin = x.shape
    cout, cin_w, k = p.w.shape
    if cin != cin_w:
        raise DimensionError(f"conv1d: input has {cin} channels, kernel expects {cin_w}")
    if T < k:
        raise SequenceTooShortError(f"conv1d: sequence length {T} < kernel size {k}")
    tout = T - k + 1
    cols = sliding_window_view(x, k, axis=1).reshape(B * tout, cin * k)
    wmat = p.w.reshape(cout, cin * k).T
    y = (matmul(cols, wmat) + p.b).reshape(B, tout, cout)
    cache = Cache("conv1d", {"cols": cols, "x_shape": x.shape, "y_shape": y.shape}, single)
    return _unbatch(y, single), cache


def conv1d_backward(grad_y, cache: Cache, p: Conv1dParams):
    cache.expect("conv1d")
    B, tout, cout = cache.data["y_shape"]
    _, T, cin = cache.data["x_shape"]
    gy, _ = _batched(grad_y, 3)
    gy = _check_grad(gy, (B, tout, cout), "conv1d").reshape(B * tout, cout)
    k = p.w.shape[2]
    if p.w.shape != (cout, cin, k) or T - k + 1 != tout:
        raise ContractError("conv1d backward: parameters do not match the cached forward")

    grad_b = gy.sum(axis=0)
    grad_w = matmul(cache.data["cols"].T, gy).T.reshape(cout, cin, k)
    gcols = matmul(gy, p.w.reshape(cout, cin * k)).reshape(B, tout, cin, k)
    grad_x = np.zeros((B, T, cin))
    for j in range(k):
        grad_x[:, j:j + tout, :] += gcols[:, :, :, j]
    return _unbatch(grad_x, cache.single), grad_w, grad_b


# --------------------------------------------------------------------------
# max pooling (non-overlapping, remainder dropped, ties -> lowest index)


def maxpool1d_forward(x, window: int):
    if window < 1:
        raise ConfigError("pool window must be >= 1")
    x, single = _batched(x, 3)
    B, T, C = x.shape
    if T < window:
        raise SequenceTooShortError(f"maxpool: sequence length {T} < window {window}")
    tout = T // window
    xr = x[:, :tout * window].reshape(B, tout, window, C)
    arg = xr.argmax(axis=2)
    y = np.take_along_axis(xr, arg[:, :, None, :], axis=2)[:, :, 0, :]
    cache = Cache("maxpool1d", {"arg": arg, "x_shape": x.shape, "window": window}, single)
    return _unbatch(y, single), cache


def maxpool1d_backward(grad_y, cache: Cache):
    cache.expect("maxpool1d")
    arg = cache.data["arg"]
    B, T, C = cache.data["x_shape"]
    window = cache.data["window"]
    gy, _ = _batched(grad_y, 3)
    gy = _check_grad(gy, arg.shape, "maxpool1d")
    tout = arg.shape[1]
    grad_x = np.zeros((B, T, C))
    view = grad_x[:, :tout * window].reshape(B, tout, window, C)
    np.put_along_axis(view, arg[:, :, None, :], gy[:, :, None, :], axis=2)
    return _unbatch(grad_x, cache.single)


# --------------------------------------------------------------------------
# dropout and relu


def dropout_forward(x, rate: float, rng: Rng | None, training: bool):
    """Inverted dropout. At inference, or with rate 0, returns ``x`` itself."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x, Cache("dropout", {"mask": None, "shape": x.shape})
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, Cache("dropout", {"mask": mask, "shape": x.shape})


def dropout_backward(grad_y, cache: Cache):
    cache.expect("dropout")
    gy = _check_grad(grad_y, cache.data["shape"], "dropout")
    mask = cache.data["mask"]
    return gy if mask is None else gy * mask


def relu_forward(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0), Cache("relu", {"pos": x > 0})


def relu_backward(grad_y, cache: Cache):
    pos = cache.expect("relu").data["pos"]
    return _check_grad(grad_y, pos.shape, "relu") * pos


# --------------------------------------------------------------------------
# dense


def dense_forward(x, W, b):
    x, single = _batched(x, 2)
    if W.ndim != 2 or x.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise DimensionError(f"dense: x {x.shape}, W {W.shape}, b {b.shape}")
    y = matmul(x, W.T) + b
    return _unbatch(y, single), Cache("dense", {"x": x}, single)


def dense_backward(grad_y, cache: Cache, W):
    cache.expect("dense")
    x = cache.data["x"]
    gy, _ = _batched(grad_y, 2)
    gy = _check_grad(gy, (x.shape[0], W.shape[0]), "dense")
    grad_W = matmul(gy.T, x)
    grad_b = gy.sum(axis=0)
    grad_x = matmul(gy, W)
    return _unbatch(grad_x, cache.single), grad_W, grad_b


# --------------------------------------------------------------------------
# LSTM


def _check_lstm(p: LstmParams, n: int):
    H = p.U.shape[1]
    if p.W.shape != (4 * H, n) or p.U.shape != (4 * H, H) or p.b.shape != (4 * H,):
        raise DimensionError(f"LSTM params W {p.W.shape}, U {p.U.shape}, b {p.b.shape} do not fit input size {n}")
    return H


def lstm_cell_forward(x_t, h_prev, c_prev, p: LstmParams):
    x, single = _batched(x_t, 2)
    h_prev, _ = _batched(h_prev, 2)
    c_prev, _ = _batched(c_prev, 2)
    H = _check_lstm(p, x.shape[1])
    if h_prev.shape != (x.shape[0], H) or c_prev.shape != h_prev.shape:
        raise DimensionError(f"LSTM state shapes {h_prev.shape}, {c_prev.shape} do not match H={H}")

    z = matmul(x, p.W.T) + matmul(h_prev, p.U.T) + p.b
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H:2 * H])
    g = np.tanh(z[:, 2 * H:3 * H])
    o = sigmoid(z[:, 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = Cache("lstm_cell", dict(x=x, h_prev=h_prev, c_prev=c_prev, i=i, f=f, g=g, o=o, tc=tc), single)
    return _unbatch(h, single), _unbatch(c, single), cache


def lstm_cell_backward(dh, dc, cache: Cache, p: LstmParams):
    """Returns ``(dx, dh_prev, dc_prev, LstmParams of gradients)``."""
    d = cache.expect("lstm_cell").data
    dh, _ = _batched(dh, 2)
    dc, _ = _batched(dc, 2)
    i, f, g, o, tc = d["i"], d["f"], d["g"], d["o"], d["tc"]
    dh = _check_grad(dh, i.shape, "lstm_cell")
    dc = _check_grad(dc, i.shape, "lstm_cell")

    dc_total = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate(
        [
            dc_total * g * i * (1.0 - i),
            dc_total * d["c_prev"] * f * (1.0 - f),
            dc_total * i * (1.0 - g * g),
            dh * tc * o * (1.0 - o),
        ],
        axis=1,
    )
    grads = LstmParams(matmul(dz.T, d["x"]), matmul(dz.T, d["h_prev"]), dz.sum(axis=0))
    dx = matmul(dz, p.W)
    dh_prev = matmul(dz, p.U)
    dc_prev = dc_total * f
    s = cache.single
    return _unbatch(dx, s), _unbatch(dh_prev, s), _unbatch(dc_prev, s), grads


def lstm_forward(X, p: LstmParams, reverse: bool = False):
    """Run one direction over ``(B, T, n)`` from zero state; returns the terminal ``h``."""
    X, single = _batched(X, 3)
    B, T, n = X.shape
    if T < 1:
        raise SequenceTooShortError("LSTM needs at least one time step")
    H = _check_lstm(p, n)
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    order = range(T - 1, -1, -1) if reverse else range(T)
    caches = []
    for t in order:
        h, c, cache = lstm_cell_forward(X[:, t], h, c, p)
        caches.append((t, cache))
    return _unbatch(h, single), Cache("lstm", {"steps": caches, "x_shape": X.shape}, single)


def lstm_backward(dh_final, cache: Cache, p: LstmParams):
    """Backpropagation through time from a gradient on the terminal hidden state."""
    d = cache.expect("lstm").data
    B, T, n = d["x_shape"]
    H = p.hidden
    dh, _ = _batched(dh_final, 2)
    dh = _check_grad(dh, (B, H), "lstm")
    dc = np.zeros((B, H))
    dX = np.zeros((B, T, n))
    gW = np.zeros_like(p.W)
    gU = np.zeros_like(p.U)
    gb = np.zeros_like(p.b)
    for t, step in reversed(d["steps"]):
        dx, dh, dc, g = lstm_cell_backward(dh, dc, step, p)
        dX[:, t] = dx
        gW += g.W
        gU += g.U
        gb += g.b
    return _unbatch(dX, cache.single), LstmParams(gW, gU, gb)


def bilstm_forward(X, p_fwd: LstmParams, p_bwd: LstmParams):
    """Concatenate the terminal hidden states of a forward and a reversed pass.

    The forward half comes first; the backward half is the state reached
    after the reversed pass has consumed ``X[0]``.
    """
    X, single = _batched(X, 3)
    if X.shape[1] < 1:
        raise SequenceTooShortError("BiLSTM needs at least one time step")
    h_f, cache_f = lstm_forward(X, p_fwd)
    h_b, cache_b = lstm_forward(X, p_bwd, reverse=True)
    hc = np.concatenate([h_f, h_b], axis=1)
    return _unbatch(hc, single), Cache("bilstm", {"fwd": cache_f, "bwd": cache_b, "x_shape": X.shape}, single)


def bilstm_backward(grad_hc, cache: Cache, p_fwd: LstmParams, p_bwd: LstmParams):
    d = cache.expect("bilstm").data
    B = d["x_shape"][0]
    Hf, Hb = p_fwd.hidden, p_bwd.hidden
    g, _ = _batched(grad_hc, 2)
    g = _check_grad(g, (B, Hf + Hb), "bilstm")
    dX_f, grads_f = lstm_backward(g[:, :Hf], d["fwd"], p_fwd)
    dX_b, grads_b = lstm_backward(g[:, Hf:], d["bwd"], p_bwd)
    return _unbatch(dX_f + dX_b, cache.single), grads_f, grads_b


# --------------------------------------------------------------------------
# loss


def bce_loss(score, label):
    """Binary cross-entropy on a probability score.

    The score is clamped to ``[1e-7, 1 - 1e-7]`` in both the loss and its
    derivative. Works elementwise on arrays.
    """
    label = np.asarray(label)
    if not np.isin(label, (0, 1)).all():
        raise LabelError("labels must be 0 or 1")
    s = np.clip(np.asarray(score, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = label.astype(np.float64)
    loss = -(y * np.log(s) + (1.0 - y) * np.log(1.0 - s))
    grad = (s - y) / (s * (1.0 - s))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad
