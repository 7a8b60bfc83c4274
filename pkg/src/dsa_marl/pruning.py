"""Gradual magnitude pruning of actor networks.

Sparsity targets come from one of three schedules: linear ramp, cubic
polynomial, or harmonic annealing (a cosine ramp plus a sinusoidal
oscillation that periodically lowers the target so pruned weights can
regrow). Weights are zeroed only at prune events; in between, every weight
receives full gradient updates, so previously pruned coordinates can come
back. The critic is never pruned, and neither are biases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .nets import PRUNABLE_KEYS, ActorParams, clone_weights

SCHEDULE_KINDS = ("linear", "polynomial", "harmonic")


@dataclass(frozen=True)
class SparsitySchedule:
    """Target sparsity as a function of the training iteration."""

    kind: str
    p_final: float
    i_total: int                 # iteration where the target reaches p_final
    p_start: float = 0.0
    i_start: int = 0
    amplitude: float = 0.1       # harmonic oscillation size
    period: int = 200            # harmonic oscillation period, in iterations

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}, expected {SCHEDULE_KINDS}")
        if not (0.0 <= self.p_start <= self.p_final <= 1.0):
            raise ConfigError(
                f"need 0 <= p_start <= p_final <= 1, got {self.p_start}, {self.p_final}")
        if self.i_start >= self.i_total:
            raise ConfigError(f"i_start={self.i_start} must be < i_total={self.i_total}")
        if self.period < 1:
            raise ConfigError(f"period must be >= 1, got {self.period}")


def sparsity_at(schedule: SparsitySchedule, i: int) -> float:
    """Target sparsity at iteration i.

    Linear/polynomial ramps are 0 before i_start and pinned at p_final from
    i_total on. The harmonic schedule is the clamped sum of a cosine
    annealing envelope and a sinusoidal oscillation; its sine argument is
    reduced modulo the period so period boundaries land exactly on zero.
    """
    if i < 0:
        raise ContractError(f"iteration must be >= 0, got {i}")
    span = schedule.i_total - schedule.i_start
    if schedule.kind == "harmonic":
        osc = schedule.amplitude * math.sin(2.0 * math.pi * (i % schedule.period)
                                            / schedule.period)
        envelope = schedule.p_final + 0.5 * (schedule.p_start - schedule.p_final) * (
            1.0 + math.cos(math.pi * (i - schedule.i_start) / span))
        return min(max(envelope + osc, schedule.p_start), schedule.p_final)
    if i < schedule.i_start:
        return 0.0
    if i >= schedule.i_total:
        return schedule.p_final
    frac = (i - schedule.i_start) / span
    if schedule.kind == "linear":
        sigma = frac
    else:
        sigma = 1.0 - (1.0 - frac) ** 3
    return schedule.p_final * sigma


def prune_actor(params: ActorParams, p: float) -> ActorParams:
    """Zero the floor(p * size) smallest-magnitude weights of each weight matrix.

    Pure: returns a fresh ActorParams with a mask recomputed from scratch,
    so weights that regrew since the last event keep their values. Ties in
    magnitude break in ascending index order. Biases are left alone.
    """
    if not (0.0 <= p <= 1.0):
        raise ContractError(f"sparsity must be in [0, 1], got {p}")
    weights = clone_weights(params.weights)
    mask = {}
    for key in PRUNABLE_KEYS:
        flat = weights[key].ravel()
        m = np.ones(flat.size)
        count = int(math.floor(p * flat.size + 1e-9))
        if count > 0:
            order = np.argsort(np.abs(flat), kind="stable")
            cut = order[:count]
            flat[cut] = 0.0
            m[cut] = 0.0
        mask[key] = m.reshape(weights[key].shape)
    return ActorParams(num_actions=params.num_actions, hidden_size=params.hidden_size,
                       weights=weights, mask=mask)


def actual_sparsity(params: ActorParams) -> float:
    """Fraction of exactly-zero entries across the prunable weight matrices."""
    zeros = 0
    total = 0
    for key in PRUNABLE_KEYS:
        w = params.weights[key]
        zeros += int(np.count_nonzero(w == 0.0))
        total += w.size
    return zeros / total


@dataclass
class PruneConfig:
    """Per-agent schedules (targets may differ by agent) plus the event interval."""

    schedules: list[SparsitySchedule]
    prune_every: int = 5

    def __post_init__(self):
        if self.prune_every < 1:
            raise ConfigError(f"prune_every must be >= 1, got {self.prune_every}")


def maybe_prune(iteration: int, cfg: PruneConfig, actors: list[ActorParams]) -> list[ActorParams]:
    """Prune every actor to its scheduled target when iteration hits an event.

    Events fire when iteration is a multiple of prune_every and pruning has
    begun for that agent's schedule. Non-event iterations return the actors
    untouched. Only actors are ever pruned.
    """
    if len(cfg.schedules) != len(actors):
        raise ContractError(
            f"{len(cfg.schedules)} schedules for {len(actors)} actors")
    out = []
    for actor, schedule in zip(actors, cfg.schedules):
        if iteration % cfg.prune_every == 0 and iteration >= schedule.i_start:
            out.append(prune_actor(actor, sparsity_at(schedule, iteration)))
        else:
            out.append(actor)
    return out


def schedule_series(schedule: SparsitySchedule, i_max: int) -> np.ndarray:
    """Dense sampling p_i for i = 0..i_max (inclusive), for plots and CSV export."""
    return np.array([sparsity_at(schedule, i) for i in range(i_max + 1)])
