"""Slotted multi-channel spectrum-access simulator.

N agents share K orthogonal channels in discrete time slots. Each slot every
agent either stays inactive (action 0) or transmits on one channel (1..K).
A lone transmitter on a free channel succeeds (ACK, obs 1) and achieves its
per-episode SNR for that channel; two or more transmitters collide (NACK,
obs -1); a channel held by a primary user blocks every attempt on it
(obs -2). The per-slot reward, delivered identically to all agents, is the
system throughput sum(log2(1 + achieved SNR)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, StateError

OBS_ACK = 1
OBS_NACK = -1
OBS_PU = -2
OBS_DUMMY = 0


@dataclass(frozen=True)
class EnvConfig:
    """Static description of one spectrum-access system.

    SNR bounds are linear power ratios, not dB. ``pu_probs`` gives the
    per-channel probability that a primary user holds the channel for a
    whole episode; ``None`` means no primary users.
    """

    num_agents: int
    num_channels: int
    horizon: int
    snr_low: float = 30.0
    snr_high: float = 40.0
    pu_probs: tuple[float, ...] | None = None
    rng_seed: int = 0

    def effective_pu_probs(self) -> np.ndarray:
        if self.pu_probs is None:
            return np.zeros(self.num_channels)
        return np.asarray(self.pu_probs, dtype=float)

    def validate(self) -> None:
        if self.num_agents < 1:
            raise ConfigError(f"num_agents must be >= 1, got {self.num_agents}")
        if self.num_channels < 1:
            raise ConfigError(f"num_channels must be >= 1, got {self.num_channels}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not (0.0 < self.snr_low <= self.snr_high):
            raise ConfigError(
                f"need 0 < snr_low <= snr_high, got [{self.snr_low}, {self.snr_high}]"
            )
        if self.pu_probs is not None:
            if len(self.pu_probs) != self.num_channels:
                raise ConfigError(
                    f"pu_probs has length {len(self.pu_probs)}, expected {self.num_channels}"
                )
            for k, p in enumerate(self.pu_probs):
                if not (0.0 <= p <= 1.0):
                    raise ConfigError(f"pu_probs[{k}]={p} outside [0, 1]")


def make_rng(config: EnvConfig) -> np.random.Generator:
    """Random stream derived from the config's own seed."""
    return np.random.default_rng(config.rng_seed)


@dataclass
class EnvState:
    """World state between slots: per-episode SNR table, PU occupancy, clock."""

    config: EnvConfig
    snr: np.ndarray          # (N, K) linear SNR values, constant within an episode
    pu_occupied: np.ndarray  # (K,) bool, constant within an episode
    t: int
    last_obs: np.ndarray     # (N,) int
    last_actions: np.ndarray  # (N,) int

    @property
    def done(self) -> bool:
        return self.t >= self.config.horizon


@dataclass(frozen=True)
class StepResult:
    obs: np.ndarray           # (N,) int in {-2,-1,0,1}
    achieved_snr: np.ndarray  # (N,) float, nonzero only on ACK
    reward: float
    done: bool


@dataclass
class EpisodeTrace:
    """Per-slot record of one full episode (slots 1..T)."""

    actions: np.ndarray       # (T, N) int
    obs: np.ndarray           # (T, N) int
    achieved_snr: np.ndarray  # (T, N) float
    rewards: np.ndarray       # (T,) float

    def __len__(self) -> int:
        return self.actions.shape[0]


def reset(config: EnvConfig, rng: np.random.Generator) -> EnvState:
    """Start a fresh episode: draw the SNR table and PU occupancy, zero the clock.

    SNR entries are i.i.d. uniform on [snr_low, snr_high]; channel k is
    PU-occupied with probability pu_probs[k], independently. PU draws are
    consumed even when all probabilities are zero so that setups with and
    without primary users stay stream-aligned at matched seeds.
    """
    config.validate()
    n, k = config.num_agents, config.num_channels
    snr = rng.uniform(config.snr_low, config.snr_high, size=(n, k))
    pu_occupied = rng.random(k) < config.effective_pu_probs()
    return EnvState(
        config=config,
        snr=snr,
        pu_occupied=pu_occupied,
        t=0,
        last_obs=np.zeros(n, dtype=np.int64),
        last_actions=np.zeros(n, dtype=np.int64),
    )


def step(state: EnvState, actions: np.ndarray) -> tuple[EnvState, StepResult]:
    """Advance one slot. Pure: returns a new state, the input is untouched.

    Outcome per transmitting agent: PU-occupied channel -> obs -2; contended
    channel -> obs -1; sole transmitter -> obs 1 and its SNR for that channel.
    Inactive agents observe the dummy value 0. The PU observation takes
    precedence over collision.
    """
    cfg = state.config
    if state.t >= cfg.horizon:
        raise StateError(f"episode already finished (t={state.t}, horizon={cfg.horizon})")
    actions = np.asarray(actions, dtype=np.int64)
    if actions.shape != (cfg.num_agents,):
        raise ContractError(f"expected {cfg.num_agents} actions, got shape {actions.shape}")
    if actions.min() < 0 or actions.max() > cfg.num_channels:
        raise ContractError(f"actions outside [0, {cfg.num_channels}]: {actions}")

    counts = np.bincount(actions, minlength=cfg.num_channels + 1)
    obs = np.zeros(cfg.num_agents, dtype=np.int64)
    achieved = np.zeros(cfg.num_agents)
    for n, a in enumerate(actions):
        if a == 0:
            continue
        if state.pu_occupied[a - 1]:
            obs[n] = OBS_PU
        elif counts[a] > 1:
            obs[n] = OBS_NACK
        else:
            obs[n] = OBS_ACK
            achieved[n] = state.snr[n, a - 1]
    reward = float(np.sum(np.log2(1.0 + achieved)))

    new_state = EnvState(
        config=cfg,
        snr=state.snr,
        pu_occupied=state.pu_occupied,
        t=state.t + 1,
        last_obs=obs,
        last_actions=actions.copy(),
    )
    result = StepResult(obs=obs, achieved_snr=achieved, reward=reward, done=new_state.done)
    return new_state, result


def cumulative_snr(trace: EpisodeTrace, n: int) -> float:
    """Sum of agent n's achieved SNR over the episode (counts ACK slots only)."""
    if not (0 <= n < trace.actions.shape[1]):
        raise ContractError(f"agent index {n} out of range for {trace.actions.shape[1]} agents")
    return float(trace.achieved_snr[:, n].sum())


def episode_throughput(trace: EpisodeTrace) -> float:
    """Total throughput sum_t sum_n log2(1 + achieved SNR); equals sum_t reward_t."""
    return float(np.sum(np.log2(1.0 + trace.achieved_snr)))


def trace_rows(trace: EpisodeTrace) -> list[str]:
    """Line-oriented export: t, a^1..a^N, o^1..o^N, snr^1..snr^N, r_t per slot."""
    rows = []
    for t in range(len(trace)):
        cells = [str(t + 1)]
        cells += [str(a) for a in trace.actions[t]]
        cells += [str(o) for o in trace.obs[t]]
        cells += [f"{s:.6g}" for s in trace.achieved_snr[t]]
        cells.append(f"{trace.rewards[t]:.6g}")
        rows.append(",".join(cells))
    return rows


def write_trace(trace: EpisodeTrace, path) -> None:
    n = trace.actions.shape[1]
    header = ["t"]
    header += [f"a{i + 1}" for i in range(n)]
    header += [f"o{i + 1}" for i in range(n)]
    header += [f"snr{i + 1}" for i in range(n)]
    header.append("r")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in trace_rows(trace):
            fh.write(row + "\n")


class TraceRecorder:
    """Accumulates per-slot step results into an EpisodeTrace."""

    def __init__(self) -> None:
        self._actions: list[np.ndarray] = []
        self._obs: list[np.ndarray] = []
        self._snr: list[np.ndarray] = []
        self._rewards: list[float] = []

    def add(self, actions: np.ndarray, result: StepResult) -> None:
        self._actions.append(np.asarray(actions, dtype=np.int64).copy())
        self._obs.append(result.obs.copy())
        self._snr.append(result.achieved_snr.copy())
        self._rewards.append(result.reward)

    def build(self) -> EpisodeTrace:
        return EpisodeTrace(
            actions=np.stack(self._actions),
            obs=np.stack(self._obs),
            achieved_snr=np.stack(self._snr),
            rewards=np.asarray(self._rewards),
        )
