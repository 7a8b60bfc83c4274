"""Shared test oracles: finite differences and gradient comparison."""

import numpy as np


def finite_difference_grads(weights, loss_fn, h=1e-5, keys=None):
    """Central-difference gradient of loss_fn(weights) per coordinate.

    Perturbs in place and restores, so loss_fn must read weights afresh on
    every call.
    """
    grads = {}
    for key in (keys or weights):
        w = weights[key]
        g = np.zeros_like(w)
        flat = w.ravel()
        gflat = g.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = loss_fn(weights)
            flat[idx] = orig - h
            down = loss_fn(weights)
            flat[idx] = orig
            gflat[idx] = (up - down) / (2.0 * h)
        grads[key] = g
    return grads


def max_rel_error(ga, gb, floor=1e-8):
    """Worst per-coordinate relative error between two gradient dicts."""
    worst = 0.0
    for k in ga:
        denom = np.maximum(np.maximum(np.abs(ga[k]), np.abs(gb[k])), floor)
        worst = max(worst, float(np.max(np.abs(ga[k] - gb[k]) / denom)))
    return worst


def relu_inputs_screened(cache, margin=1e-3):
    """True when no second-layer output sits near the ReLU kink."""
    return float(np.min(np.abs(cache.hs[1]))) > margin
