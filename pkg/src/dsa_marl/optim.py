"""Adam optimizer and global-norm gradient clipping over weight dicts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .nets import Weights


@dataclass
class AdamState:
    """First/second moment accumulators congruent to one weight dict."""

    m: Weights
    v: Weights
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam_state(weights: Weights, beta1: float = 0.9, beta2: float = 0.999,
                    eps: float = 1e-8) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(v) for k, v in weights.items()},
        v={k: np.zeros_like(v) for k, v in weights.items()},
        beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(weights: Weights, grads: Weights, state: AdamState, lr: float) -> None:
    """Standard bias-corrected Adam update, applied in place."""
    if set(grads) != set(weights):
        raise ContractError(f"gradient keys {sorted(grads)} != weight keys {sorted(weights)}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for k, w in weights.items():
        g = grads[k]
        if g.shape != w.shape:
            raise ContractError(f"gradient shape {g.shape} != weight shape {w.shape} for {k}")
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        denom = np.sqrt(v / bc2)
        denom += state.eps
        update = np.divide(m, denom, out=denom)
        update *= lr / bc1
        w -= update


def adam_state_to_dict(state: AdamState) -> dict:
    return {"m": dict(state.m), "v": dict(state.v), "step": state.step,
            "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps}


def adam_state_from_dict(data: dict) -> AdamState:
    return AdamState(m=dict(data["m"]), v=dict(data["v"]), step=int(data["step"]),
                     beta1=float(data["beta1"]), beta2=float(data["beta2"]),
                     eps=float(data["eps"]))


def global_grad_norm(grads: Weights) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grads(grads: Weights, max_norm: float | None) -> float:
    """Scale all gradients in place so the global norm is at most max_norm.

    Returns the pre-clip norm. max_norm=None disables clipping.
    """
    norm = global_grad_norm(grads)
    if max_norm is not None and norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
