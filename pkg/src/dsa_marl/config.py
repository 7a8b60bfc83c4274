"""Experiment configuration: defaults, flat key=value files, CLI overrides.

A config file is plain text, one ``key = value`` per line, ``#`` comments.
Every field of ExperimentConfig can appear; later sources (CLI flags) win.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .baselines import DqnConfig
from .env import EnvConfig
from .errors import ConfigError
from .ppo import GaeConfig, PpoConfig
from .pruning import PruneConfig, SparsitySchedule

ALGORITHMS = ("iagc_ppo_pruned", "iagc_ppo_dense", "dqn_shared", "pai", "aloha")
SETUPS = ("A", "B")


@dataclass
class ExperimentConfig:
    """One experiment: a method, a system setup, and every training knob."""

    algorithm: str = "iagc_ppo_pruned"
    setup: str = "A"                  # A: no primary users; B: per-channel PU probability
    num_agents: int = 10
    num_channels: int = 5
    horizon: int = 100
    iterations: int = 1000
    snr_low: float = 30.0
    snr_high: float = 40.0
    pu_prob: float = 0.2
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    eval_every: int = 10
    eval_episodes: int = 100
    eval_at_start: bool = False
    checkpoint_every: int = 0         # 0: only the final checkpoint
    hidden_size: int = 128
    # PPO
    clip_eps: float = 0.2
    actor_lr: float = 1e-4
    critic_lr: float = 5e-5
    episodes_per_iter: int = 1
    update_epochs: int = 1
    entropy_coef: float = 0.0
    grad_clip: float = 0.5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    # pruning schedule
    scheduler: str = "harmonic"       # linear | polynomial | harmonic
    p_start: float = 0.0
    p_final: float = 0.95
    i_start: int = 0
    i_prune_total: int = 0            # 0: use `iterations`
    prune_every: int = 5
    # aloha
    aloha_q: float = -1.0             # negative: K / N
    # DQN
    dqn_lr: float = 1e-4
    dqn_eps_start: float = 1.0
    dqn_eps_final: float = 0.05
    dqn_eps_anneal: int = 0           # 0: half of `iterations`
    dqn_target_sync: int = 100
    dqn_replay: int = 10000
    dqn_updates_per_iter: int = 1
    dqn_eval_temperature: float = 1.0
    # PaI
    pai_sparsity: float = 0.5

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}, expected one of {ALGORITHMS}")
        if self.setup not in SETUPS:
            raise ConfigError(f"setup must be A or B, got {self.setup!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigError("eval_every and eval_episodes must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be >= 1")
        self.env_config().validate()
        self.ppo_config().validate()
        self.gae_config().validate()
        if self.algorithm == "iagc_ppo_pruned":
            self.prune_config()
        if self.algorithm == "dqn_shared":
            self.dqn_config().validate()
        if self.algorithm == "aloha" and self.aloha_q > 1.0:
            raise ConfigError(f"aloha_q must be <= 1, got {self.aloha_q}")

    # -- derived module configs ------------------------------------------

    def env_config(self) -> EnvConfig:
        pu = None
        if self.setup == "B":
            pu = tuple([self.pu_prob] * self.num_channels)
        return EnvConfig(num_agents=self.num_agents, num_channels=self.num_channels,
                         horizon=self.horizon, snr_low=self.snr_low, snr_high=self.snr_high,
                         pu_probs=pu)

    def ppo_config(self) -> PpoConfig:
        return PpoConfig(clip_eps=self.clip_eps, actor_lr=self.actor_lr,
                         critic_lr=self.critic_lr, episodes_per_iter=self.episodes_per_iter,
                         update_epochs=self.update_epochs, entropy_coef=self.entropy_coef,
                         grad_clip=self.grad_clip if self.grad_clip > 0 else None)

    def gae_config(self) -> GaeConfig:
        return GaeConfig(gamma=self.gamma, gae_lambda=self.gae_lambda)

    def prune_config(self) -> PruneConfig:
        i_total = self.i_prune_total if self.i_prune_total > 0 else self.iterations
        schedule = SparsitySchedule(kind=self.scheduler, p_final=self.p_final,
                                    i_total=i_total, p_start=self.p_start,
                                    i_start=self.i_start)
        return PruneConfig(schedules=[schedule] * self.num_agents,
                           prune_every=self.prune_every)

    def dqn_config(self) -> DqnConfig:
        anneal = self.dqn_eps_anneal if self.dqn_eps_anneal > 0 else max(1, self.iterations // 2)
        return DqnConfig(lr=self.dqn_lr, gamma=self.gamma, eps_start=self.dqn_eps_start,
                         eps_final=self.dqn_eps_final, eps_anneal_iters=anneal,
                         target_sync_every=self.dqn_target_sync,
                         replay_capacity=self.dqn_replay,
                         updates_per_iter=self.dqn_updates_per_iter,
                         grad_clip=self.grad_clip if self.grad_clip > 0 else None,
                         eval_temperature=self.dqn_eval_temperature)

    def effective_aloha_q(self) -> float:
        if self.aloha_q >= 0:
            return self.aloha_q
        return min(1.0, self.num_channels / self.num_agents)

    def run_label(self) -> str:
        label = self.algorithm
        if self.algorithm == "iagc_ppo_pruned":
            label += f"_{self.scheduler}"
            if self.i_start:
                label += f"{self.i_start}"
        return f"{label}_{self.setup}"


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind is tuple or name == "seeds":
            return tuple(int(part) for part in raw.replace(" ", "").split(",") if part)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name!r}: {raw!r}") from exc
    raise ConfigError(f"cannot parse field {name!r}")


_FIELD_TYPES = {f.name: (tuple if f.name == "seeds" else f.type) for f in fields(ExperimentConfig)}
_PY_TYPES = {"str": str, "int": int, "float": float, "bool": bool}


def field_type(name: str):
    kind = _FIELD_TYPES[name]
    if isinstance(kind, str):
        return tuple if name == "seeds" else _PY_TYPES[kind]
    return kind


def parse_config_text(text: str) -> dict:
    """key = value lines into a raw-string dict; unknown keys are rejected."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file, then overrides (already-typed values)."""
    kwargs = {}
    if path is not None:
        raw = parse_config_text(Path(path).read_text())
        for key, value in raw.items():
            kwargs[key] = _coerce(key, field_type(key), value)
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = value
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config_text(text: str) -> ExperimentConfig:
    """Parse a canonical config dump (e.g. from a checkpoint) back into a config."""
    raw = parse_config_text(text)
    kwargs = {key: _coerce(key, field_type(key), value) for key, value in raw.items()}
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical dump readable back by parse_config_text."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if f.name == "seeds":
            value = ",".join(str(s) for s in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
