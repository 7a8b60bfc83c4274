"""Recurrent actor/critic networks with exact gradients.

The policy and value networks are two stacked LSTM layers followed by a
ReLU on the second layer's output and a linear head (softmax for actors,
scalar for the critic). Everything runs in float64 numpy; gradients are
computed by hand with full backpropagation through the episode, which keeps
the whole stack deterministic and finite-difference checkable.

Parameters live in a flat ``dict[str, np.ndarray]``:

    l1.Wx (4H, in)   l1.Wh (4H, H)   l1.b (4H,)
    l2.Wx (4H, H)    l2.Wh (4H, H)   l2.b (4H,)
    head.W (out, H)  head.b (out,)

Gate blocks are ordered input, forget, output, cell candidate, so the three
sigmoid gates form one contiguous slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import ContractError, NumericsError

Weights = dict[str, np.ndarray]

INPUT_DIM = 2  # previous action, previous observation
WEIGHT_KEYS = ("l1.Wx", "l1.Wh", "l1.b", "l2.Wx", "l2.Wh", "l2.b", "head.W", "head.b")
PRUNABLE_KEYS = ("l1.Wx", "l1.Wh", "l2.Wx", "l2.Wh", "head.W")


class LstmHidden(NamedTuple):
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray


def zero_hidden(hidden_size: int) -> LstmHidden:
    return LstmHidden(*(np.zeros(hidden_size) for _ in range(4)))


@dataclass
class ActorParams:
    """Per-agent policy network plus the prune mask over its weight matrices."""

    num_actions: int  # K + 1 (channels plus "stay inactive")
    hidden_size: int
    weights: Weights
    mask: Weights  # 1 = active, over PRUNABLE_KEYS only


@dataclass
class CriticParams:
    hidden_size: int
    weights: Weights


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _init_lstm_layer(rng: np.random.Generator, in_dim: int, hidden: int) -> tuple[np.ndarray, ...]:
    scale = 1.0 / np.sqrt(in_dim)
    wx = rng.uniform(-scale, scale, size=(4 * hidden, in_dim))
    wh = np.concatenate([_orthogonal(rng, hidden) for _ in range(4)], axis=0)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget gate starts open
    return wx, wh, b


def init_network(rng: np.random.Generator, out_dim: int, hidden_size: int,
                 in_dim: int = INPUT_DIM) -> Weights:
    """Fresh weights: fan-in scaled uniform inputs, orthogonal recurrences."""
    w: Weights = {}
    w["l1.Wx"], w["l1.Wh"], w["l1.b"] = _init_lstm_layer(rng, in_dim, hidden_size)
    w["l2.Wx"], w["l2.Wh"], w["l2.b"] = _init_lstm_layer(rng, hidden_size, hidden_size)
    scale = 1.0 / np.sqrt(hidden_size)
    w["head.W"] = rng.uniform(-scale, scale, size=(out_dim, hidden_size))
    w["head.b"] = np.zeros(out_dim)
    return w


def init_actor(rng: np.random.Generator, num_channels: int, hidden_size: int = 128) -> ActorParams:
    if num_channels < 1:
        raise ContractError(f"num_channels must be >= 1, got {num_channels}")
    weights = init_network(rng, num_channels + 1, hidden_size)
    mask = {k: np.ones_like(weights[k]) for k in PRUNABLE_KEYS}
    return ActorParams(num_actions=num_channels + 1, hidden_size=hidden_size,
                       weights=weights, mask=mask)


def init_critic(rng: np.random.Generator, hidden_size: int = 128) -> CriticParams:
    return CriticParams(hidden_size=hidden_size, weights=init_network(rng, 1, hidden_size))


def clone_weights(weights: Weights) -> Weights:
    return {k: v.copy() for k, v in weights.items()}


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

def _cell_step(wx, wh, b, x, h_prev, c_prev, hidden):
    gates = wh @ h_prev
    gates += wx @ x
    gates += b
    _sigmoid(gates[:3 * hidden], out=gates[:3 * hidden])  # input, forget, output
    np.tanh(gates[3 * hidden:], out=gates[3 * hidden:])   # cell candidate
    c = gates[hidden:2 * hidden] * c_prev
    c += gates[:hidden] * gates[3 * hidden:]
    tc = np.tanh(c)
    h = gates[2 * hidden:3 * hidden] * tc
    return h, c, gates, tc


def network_forward(weights: Weights, y, hidden: LstmHidden) -> tuple[np.ndarray, LstmHidden]:
    """One recurrent step: raw head output and the new hidden state.

    The input hidden state is read-only; a fresh one is returned.
    """
    hs = hidden.h1.shape[0]
    x = np.asarray(y, dtype=float)
    h1, c1, _, _ = _cell_step(weights["l1.Wx"], weights["l1.Wh"], weights["l1.b"],
                              x, hidden.h1, hidden.c1, hs)
    h2, c2, _, _ = _cell_step(weights["l2.Wx"], weights["l2.Wh"], weights["l2.b"],
                              h1, hidden.h2, hidden.c2, hs)
    z = np.maximum(h2, 0.0)
    out = weights["head.W"] @ z + weights["head.b"]
    return out, LstmHidden(h1, c1, h2, c2)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def actor_forward(params: ActorParams, y, hidden: LstmHidden) -> tuple[np.ndarray, LstmHidden]:
    """Action distribution over the K+1 actions for one step."""
    logits, new_hidden = network_forward(params.weights, y, hidden)
    probs = softmax(logits)
    if not np.all(np.isfinite(probs)):
        raise NumericsError(f"actor produced non-finite probabilities: {logits}")
    return probs, new_hidden


def critic_forward(params: CriticParams, y, hidden: LstmHidden) -> tuple[float, LstmHidden]:
    """Scalar value estimate for one step."""
    out, new_hidden = network_forward(params.weights, y, hidden)
    value = float(out[0])
    if not np.isfinite(value):
        raise NumericsError(f"critic produced non-finite value: {value}")
    return value, new_hidden


@dataclass
class SequenceCache:
    """Per-step activations recorded by forward_sequence for the backward pass."""

    weights: Weights
    inputs: np.ndarray              # (T, in)
    hidden0: LstmHidden
    gates: list[np.ndarray] = field(default_factory=list)   # per layer: (T, 4H)
    cells: list[np.ndarray] = field(default_factory=list)   # per layer: (T, H)
    tanh_cells: list[np.ndarray] = field(default_factory=list)
    hs: list[np.ndarray] = field(default_factory=list)      # per layer: (T, H)
    relu_out: np.ndarray | None = None                      # (T, H)


def forward_sequence(weights: Weights, inputs: np.ndarray,
                     hidden0: LstmHidden | None = None) -> tuple[np.ndarray, SequenceCache]:
    """Run a whole episode, caching activations.

    Steps through the exact same per-step computation as network_forward, so
    replayed outputs are bit-identical to an interactive rollout.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2:
        raise ContractError(f"inputs must be (T, in_dim), got shape {inputs.shape}")
    steps = inputs.shape[0]
    hs = weights["l1.Wh"].shape[1]
    hidden = hidden0 if hidden0 is not None else zero_hidden(hs)

    out_dim = weights["head.W"].shape[0]
    cache = SequenceCache(weights=weights, inputs=inputs, hidden0=hidden)
    cache.gates = [np.empty((steps, 4 * hs)), np.empty((steps, 4 * hs))]
    cache.cells = [np.empty((steps, hs)), np.empty((steps, hs))]
    cache.tanh_cells = [np.empty((steps, hs)), np.empty((steps, hs))]
    cache.hs = [np.empty((steps, hs)), np.empty((steps, hs))]
    cache.relu_out = np.empty((steps, hs))
    outs = np.empty((steps, out_dim))

    h1, c1, h2, c2 = hidden
    for t in range(steps):
        h1, c1, g1, tc1 = _cell_step(weights["l1.Wx"], weights["l1.Wh"], weights["l1.b"],
                                     inputs[t], h1, c1, hs)
        h2, c2, g2, tc2 = _cell_step(weights["l2.Wx"], weights["l2.Wh"], weights["l2.b"],
                                     h1, h2, c2, hs)
        z = np.maximum(h2, 0.0)
        outs[t] = weights["head.W"] @ z + weights["head.b"]
        cache.gates[0][t], cache.gates[1][t] = g1, g2
        cache.cells[0][t], cache.cells[1][t] = c1, c2
        cache.tanh_cells[0][t], cache.tanh_cells[1][t] = tc1, tc2
        cache.hs[0][t], cache.hs[1][t] = h1, h2
        cache.relu_out[t] = z
    if not np.all(np.isfinite(outs)):
        raise NumericsError("non-finite network outputs in sequence forward")
    return outs, cache


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

def _cell_backward(gates, tc, c_prev, dh, dc_in, hidden):
    """Gradients through one LSTM cell step; returns dpre and carries."""
    i = gates[:hidden]
    f = gates[hidden:2 * hidden]
    o = gates[2 * hidden:3 * hidden]
    g = gates[3 * hidden:]
    do = dh * tc
    dc = dh * o * (1.0 - tc * tc) + dc_in
    dpre = np.empty_like(gates)
    dpre[:hidden] = dc * g * i * (1.0 - i)
    dpre[hidden:2 * hidden] = dc * c_prev * f * (1.0 - f)
    dpre[2 * hidden:3 * hidden] = do * o * (1.0 - o)
    dpre[3 * hidden:] = dc * i * (1.0 - g * g)
    dc_prev = dc * f
    return dpre, dc_prev


def backward_sequence(cache: SequenceCache, dout: np.ndarray) -> Weights:
    """Gradients of sum_t <dout_t, out_t> w.r.t. every parameter.

    Full backpropagation through time over the cached episode; gradients at
    masked positions are reported as computed (masking is the pruning
    module's concern).
    """
    weights = cache.weights
    steps = cache.inputs.shape[0]
    dout = np.asarray(dout, dtype=float)
    if dout.shape != (steps, weights["head.W"].shape[0]):
        raise ContractError(
            f"dout shape {dout.shape} does not match {steps} steps of "
            f"{weights['head.W'].shape[0]} outputs"
        )
    hs = weights["l1.Wh"].shape[1]
    g1s, g2s = cache.gates
    c1s, c2s = cache.cells
    tc1s, tc2s = cache.tanh_cells
    h1s, h2s = cache.hs

    dpre1 = np.empty((steps, 4 * hs))
    dpre2 = np.empty((steps, 4 * hs))
    dz_all = dout @ weights["head.W"]  # (T, H)

    wh1_t = weights["l1.Wh"].T
    wh2_t = weights["l2.Wh"].T
    wx2_t = weights["l2.Wx"].T

    dh1_carry = np.zeros(hs)
    dc1_carry = np.zeros(hs)
    dh2_carry = np.zeros(hs)
    dc2_carry = np.zeros(hs)
    for t in range(steps - 1, -1, -1):
        c1_prev = c1s[t - 1] if t > 0 else cache.hidden0.c1
        c2_prev = c2s[t - 1] if t > 0 else cache.hidden0.c2
        dh2 = dz_all[t] * (h2s[t] > 0.0) + dh2_carry
        dpre2[t], dc2_carry = _cell_backward(g2s[t], tc2s[t], c2_prev, dh2, dc2_carry, hs)
        dh2_carry = wh2_t @ dpre2[t]
        dh1 = wx2_t @ dpre2[t] + dh1_carry
        dpre1[t], dc1_carry = _cell_backward(g1s[t], tc1s[t], c1_prev, dh1, dc1_carry, hs)
        dh1_carry = wh1_t @ dpre1[t]

    h1_prev = np.vstack([cache.hidden0.h1, h1s[:-1]])
    h2_prev = np.vstack([cache.hidden0.h2, h2s[:-1]])
    grads: Weights = {
        "l1.Wx": dpre1.T @ cache.inputs,
        "l1.Wh": dpre1.T @ h1_prev,
        "l1.b": dpre1.sum(axis=0),
        "l2.Wx": dpre2.T @ h1s,
        "l2.Wh": dpre2.T @ h2_prev,
        "l2.b": dpre2.sum(axis=0),
        "head.W": dout.T @ cache.relu_out,
        "head.b": dout.sum(axis=0),
    }
    return grads


def backward_through_time(weights: Weights, inputs: np.ndarray, dout: np.ndarray,
                          hidden0: LstmHidden | None = None) -> Weights:
    """Forward + backward in one call for episode inputs and per-step output grads."""
    inputs = np.asarray(inputs, dtype=float)
    dout = np.asarray(dout, dtype=float)
    if inputs.shape[0] != dout.shape[0]:
        raise ContractError(
            f"inputs have {inputs.shape[0]} steps but loss gradients have {dout.shape[0]}"
        )
    _, cache = forward_sequence(weights, inputs, hidden0)
    return backward_sequence(cache, dout)
