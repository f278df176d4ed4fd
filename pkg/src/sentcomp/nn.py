"""Minimal differentiable kernel: LSTM/BiLSTM forward and backward passes,
Adam, global-norm gradient clipping, and Glorot initialization.

Tensors are row-major numpy float64 arrays. Gate blocks in the stacked LSTM
weights are ordered input, forget, cell, output (i, f, g, o). Everything here
is pure except where documented as in-place (adam_step, clip_gradients);
forward/backward over frozen parameters is safe to run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SentcompError


class GradientError(SentcompError):
    """A gradient tensor contains non-finite components."""

    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in tensor {name!r}")
        self.name = name


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so neither branch exponentiates a large positive value.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmParams:
    """Stacked-gate LSTM weights: w_ih (4H, E), w_hh (4H, H), b (4H,)."""

    w_ih: np.ndarray
    w_hh: np.ndarray
    b: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[1]

    def __post_init__(self):
        h = self.w_hh.shape[1]
        if self.w_ih.shape[0] != 4 * h or self.w_hh.shape[0] != 4 * h or self.b.shape != (4 * h,):
            raise ValueError(
                f"inconsistent LSTM shapes: w_ih {self.w_ih.shape}, "
                f"w_hh {self.w_hh.shape}, b {self.b.shape}"
            )

    def copy(self) -> "LstmParams":
        return LstmParams(self.w_ih.copy(), self.w_hh.copy(), self.b.copy())


@dataclass
class LstmCache:
    """Forward intermediates retained for the backward pass."""

    inputs: np.ndarray      # (T, E)
    gates_i: np.ndarray     # (T, H)
    gates_f: np.ndarray
    gates_g: np.ndarray
    gates_o: np.ndarray
    cells: np.ndarray       # (T, H)
    tanh_cells: np.ndarray  # (T, H)
    states: np.ndarray      # (T, H)


def lstm_forward(params: LstmParams, inputs: np.ndarray) -> tuple[np.ndarray, LstmCache]:
    """Run the gate recurrence over (T, E) inputs with h_0 = c_0 = 0.

    Returns the (T, H) hidden states and the cache for lstm_backward.
    """
    T, E = inputs.shape
    if E != params.input_size:
        raise ValueError(f"input width {E} != expected {params.input_size}")
    H = params.hidden_size
    i_all = np.empty((T, H)); f_all = np.empty((T, H))
    g_all = np.empty((T, H)); o_all = np.empty((T, H))
    c_all = np.empty((T, H)); tc_all = np.empty((T, H))
    h_all = np.empty((T, H))

    xw = inputs @ params.w_ih.T  # (T, 4H), shared across steps
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    for t in range(T):
        z = xw[t] + params.w_hh @ h_prev + params.b
        i = sigmoid(z[:H])
        f = sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = sigmoid(z[3 * H:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        i_all[t], f_all[t], g_all[t], o_all[t] = i, f, g, o
        c_all[t], tc_all[t], h_all[t] = c, tc, h
        h_prev, c_prev = h, c
    cache = LstmCache(inputs, i_all, f_all, g_all, o_all, c_all, tc_all, h_all)
    return h_all, cache


def lstm_backward(
    params: LstmParams, cache: LstmCache, grad_states: np.ndarray
) -> tuple[LstmParams, np.ndarray]:
    """Backpropagate (T, H) upstream gradients through the recurrence.

    Returns exact analytic gradients for the parameters (as an LstmParams
    container) and for the inputs.
    """
    T, H = grad_states.shape
    if cache.states.shape != (T, H):
        raise ValueError(
            f"gradient shape {grad_states.shape} does not match cached states "
            f"{cache.states.shape}"
        )
    dw_ih = np.zeros_like(params.w_ih)
    dw_hh = np.zeros_like(params.w_hh)
    db = np.zeros_like(params.b)
    dx = np.empty_like(cache.inputs)

    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i, f = cache.gates_i[t], cache.gates_f[t]
        g, o = cache.gates_g[t], cache.gates_o[t]
        tc = cache.tanh_cells[t]
        c_prev = cache.cells[t - 1] if t > 0 else np.zeros(H)
        h_prev = cache.states[t - 1] if t > 0 else np.zeros(H)

        dh = grad_states[t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f

        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ])
        dw_ih += np.outer(dz, cache.inputs[t])
        dw_hh += np.outer(dz, h_prev)
        db += dz
        dx[t] = params.w_ih.T @ dz
        dh_next = params.w_hh.T @ dz
    return LstmParams(dw_ih, dw_hh, db), dx


@dataclass
class BilstmCache:
    forward: LstmCache
    backward: LstmCache


def bilstm_forward(
    fwd: LstmParams, bwd: LstmParams, inputs: np.ndarray
) -> tuple[np.ndarray, BilstmCache]:
    """Row t of the (T, 2H) output is the forward state at t concatenated
    with the backward state (the backward pass runs over reversed input)."""
    h_fwd, cache_fwd = lstm_forward(fwd, inputs)
    h_bwd, cache_rev = lstm_forward(bwd, inputs[::-1])
    out = np.concatenate([h_fwd, h_bwd[::-1]], axis=1)
    return out, BilstmCache(cache_fwd, cache_rev)


def bilstm_backward(
    fwd: LstmParams, bwd: LstmParams, cache: BilstmCache, grad_out: np.ndarray
) -> tuple[LstmParams, LstmParams, np.ndarray]:
    """Split (T, 2H) upstream gradients into the two directions and
    backpropagate each; returns (fwd grads, bwd grads, input grads)."""
    H = fwd.hidden_size
    grads_f, dx_f = lstm_backward(fwd, cache.forward, grad_out[:, :H])
    grads_b, dx_b = lstm_backward(bwd, cache.backward, grad_out[::-1, H:])
    return grads_f, grads_b, dx_f + dx_b[::-1]


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniform(-sqrt(6/(fan_in+fan_out)), +...) weights; values are rounded
    to float32 so fresh parameters survive a float32 checkpoint bitwise."""
    limit = np.sqrt(6.0 / (rows + cols))
    w = rng.uniform(-limit, limit, size=(rows, cols))
    return w.astype(np.float32).astype(np.float64)


def init_lstm(rng: np.random.Generator, input_dim: int, hidden: int) -> LstmParams:
    """Glorot weights, zero biases except the forget-gate block at 1.0."""
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return LstmParams(
        w_ih=glorot_uniform(rng, 4 * hidden, input_dim),
        w_hh=glorot_uniform(rng, 4 * hidden, hidden),
        b=b,
    )


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all gradients by max_norm/||g|| when the global L2 norm exceeds
    max_norm; otherwise leave them untouched. In place."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], lr: float = 1e-3, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        state.m = {name: np.zeros_like(p) for name, p in params.items()}
        state.v = {name: np.zeros_like(p) for name, p in params.items()}
        return state


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Mutates params and state in place and
    returns them. Raises GradientError naming the first non-finite tensor."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise GradientError(name)
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
