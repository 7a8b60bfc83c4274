"""Comparison policies: slotted Aloha, recurrent DQN with parameter sharing,
and pruning-at-initialization (PaI) with parameter sharing.

The dense actor-critic comparison point is the main training loop with
pruning disabled; see ``dense_iagc``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import env as dsa_env
from .errors import ConfigError, ContractError
from .evaluate import evaluate_agents
from .nets import (PRUNABLE_KEYS, ActorParams, Weights, backward_sequence, clone_weights,
                   forward_sequence, init_actor, init_critic, init_network,
                   network_forward, softmax, zero_hidden)
from .optim import (adam_state_from_dict, adam_state_to_dict, adam_step, clip_grads,
                    init_adam_state)
from .ppo import (GaeConfig, PpoConfig, RewardNormalizer, SampledActorAgent,
                  actor_sequence_loss_grad, collect_trajectories, compute_gae,
                  critic_sequence_loss_grad, normalize_rewards, rewards_to_go,
                  sample_from_probs)

# ---------------------------------------------------------------------------
# Slotted Aloha
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlohaPolicy:
    """Transmit with probability q on a uniformly chosen channel."""

    q: float

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0):
            raise ConfigError(f"transmit probability must be in [0, 1], got {self.q}")


def aloha_act(q: float, num_channels: int, rng: np.random.Generator) -> int:
    if num_channels < 1:
        raise ContractError(f"num_channels must be >= 1, got {num_channels}")
    if rng.random() >= q:
        return 0
    return int(rng.integers(1, num_channels + 1))


class AlohaAgent:
    def __init__(self, q: float, num_channels: int):
        self.policy = AlohaPolicy(q)
        self.num_channels = num_channels

    def reset(self) -> None:
        pass

    def act(self, prev_action: float, prev_obs: float, rng: np.random.Generator) -> int:
        return aloha_act(self.policy.q, self.num_channels, rng)


class AlohaTrainer:
    """No-op trainer wrapper so the harness drives Aloha like everything else."""

    def __init__(self, env_cfg: dsa_env.EnvConfig, q: float):
        env_cfg.validate()
        self.env_cfg = env_cfg
        self.policy = AlohaPolicy(q)

    def run_iteration(self, iteration: int) -> dict:
        return {}

    def eval_agents(self) -> list[AlohaAgent]:
        return [AlohaAgent(self.policy.q, self.env_cfg.num_channels)
                for _ in range(self.env_cfg.num_agents)]

    def mean_actor_sparsity(self) -> float:
        return 0.0

    def state_dict(self) -> dict:
        return {"q": self.policy.q}

    def load_state_dict(self, state: dict) -> None:
        self.policy = AlohaPolicy(float(state["q"]))


# ---------------------------------------------------------------------------
# Recurrent DQN with full parameter sharing
# ---------------------------------------------------------------------------


@dataclass
class DqnConfig:
    lr: float = 1e-4
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_final: float = 0.05
    eps_anneal_iters: int = 500   # exploration reaches eps_final here
    target_sync_every: int = 100  # in gradient updates
    replay_capacity: int = 10000  # episodes
    updates_per_iter: int = 1
    grad_clip: float | None = 0.5
    eval_temperature: float = 1.0

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.replay_capacity < 1 or self.updates_per_iter < 0:
            raise ConfigError("bad replay/update settings")
        if self.eps_anneal_iters < 1 or self.target_sync_every < 1:
            raise ConfigError("bad schedule settings")


@dataclass
class DqnAgentShared:
    """One Q-network evaluated by every agent, plus its target copy."""

    num_actions: int
    hidden_size: int
    weights: Weights
    target_weights: Weights


def init_dqn(rng: np.random.Generator, num_channels: int, hidden_size: int = 128) -> DqnAgentShared:
    weights = init_network(rng, num_channels + 1, hidden_size)
    return DqnAgentShared(num_actions=num_channels + 1, hidden_size=hidden_size,
                          weights=weights, target_weights=clone_weights(weights))


class BoltzmannQAgent:
    """Deployment policy: softmax over Q-values.

    Sampling (rather than a shared argmax) is what keeps identically
    initialized agents from colliding forever; temperature 0 falls back to
    greedy selection.
    """

    def __init__(self, agent: DqnAgentShared, temperature: float = 1.0):
        self.agent = agent
        self.temperature = temperature
        self.hidden = zero_hidden(agent.hidden_size)

    def reset(self) -> None:
        self.hidden = zero_hidden(self.agent.hidden_size)

    def act(self, prev_action: float, prev_obs: float, rng: np.random.Generator) -> int:
        q, self.hidden = network_forward(self.agent.weights, (prev_action, prev_obs),
                                         self.hidden)
        if self.temperature <= 0.0:
            return int(np.argmax(q))
        return sample_from_probs(softmax(q / self.temperature), rng)


@dataclass
class EpisodeData:
    inputs: np.ndarray   # (N, T, 2)
    actions: np.ndarray  # (N, T)
    rewards: np.ndarray  # (T,) raw joint rewards


class DqnTrainer:
    """Episode collection with epsilon-greedy sharing, sequential replay updates."""

    def __init__(self, env_cfg: dsa_env.EnvConfig, cfg: DqnConfig, hidden_size: int,
                 init_rng: np.random.Generator, train_rng: np.random.Generator):
        env_cfg.validate()
        cfg.validate()
        self.env_cfg = env_cfg
        self.cfg = cfg
        self.agent = init_dqn(init_rng, env_cfg.num_channels, hidden_size)
        self.opt = init_adam_state(self.agent.weights)
        self.replay: deque[EpisodeData] = deque(maxlen=cfg.replay_capacity)
        self.normalizer = RewardNormalizer()
        self.update_count = 0
        self.rng = train_rng

    def epsilon(self, iteration: int) -> float:
        frac = min(1.0, iteration / self.cfg.eps_anneal_iters)
        return self.cfg.eps_start + frac * (self.cfg.eps_final - self.cfg.eps_start)

    def collect_episode(self, eps: float) -> EpisodeData:
        n = self.env_cfg.num_agents
        horizon = self.env_cfg.horizon
        state = dsa_env.reset(self.env_cfg, self.rng)
        hidden = [zero_hidden(self.agent.hidden_size) for _ in range(n)]
        inputs = np.zeros((n, horizon, 2))
        actions = np.zeros((n, horizon), dtype=np.int64)
        rewards = np.zeros(horizon)
        for t in range(horizon):
            joint = np.zeros(n, dtype=np.int64)
            for i in range(n):
                y = (float(state.last_actions[i]), float(state.last_obs[i]))
                q, hidden[i] = network_forward(self.agent.weights, y, hidden[i])
                if self.rng.random() < eps:
                    a = int(self.rng.integers(0, self.agent.num_actions))
                else:
                    a = int(np.argmax(q))
                inputs[i, t] = y
                actions[i, t] = a
                joint[i] = a
            state, result = dsa_env.step(state, joint)
            rewards[t] = result.reward
        return EpisodeData(inputs=inputs, actions=actions, rewards=rewards)

    def _replay_update(self, episode: EpisodeData) -> float:
        """One sequential pass over a stored episode for every agent's stream."""
        scale = 1.0 / np.sqrt(self.normalizer.variance + 1e-8)
        rewards = (episode.rewards - self.normalizer.mean) * scale
        horizon = len(rewards)
        total_loss = 0.0
        for i in range(episode.inputs.shape[0]):
            q_outs, cache = forward_sequence(self.agent.weights, episode.inputs[i])
            target_outs, _ = forward_sequence(self.agent.target_weights, episode.inputs[i])
            targets = rewards.copy()
            targets[:-1] += self.cfg.gamma * target_outs[1:].max(axis=1)
            rows = np.arange(horizon)
            taken = q_outs[rows, episode.actions[i]]
            err = taken - targets
            total_loss += float(np.sum(err * err))
            dout = np.zeros_like(q_outs)
            dout[rows, episode.actions[i]] = 2.0 * err
            grads = backward_sequence(cache, dout)
            clip_grads(grads, self.cfg.grad_clip)
            adam_step(self.agent.weights, grads, self.opt, self.cfg.lr)
            self.update_count += 1
            if self.update_count % self.cfg.target_sync_every == 0:
                self.agent.target_weights = clone_weights(self.agent.weights)
        return total_loss

    def run_iteration(self, iteration: int) -> dict:
        episode = self.collect_episode(self.epsilon(iteration))
        for r in episode.rewards:
            self.normalizer.update(float(r))
        self.replay.append(episode)
        loss = 0.0
        for _ in range(self.cfg.updates_per_iter):
            idx = int(self.rng.integers(0, len(self.replay)))
            loss += self._replay_update(self.replay[idx])
        return {"epsilon": self.epsilon(iteration), "td_loss": loss,
                "mean_episode_reward": float(episode.rewards.sum())}

    def eval_agents(self) -> list[BoltzmannQAgent]:
        return [BoltzmannQAgent(self.agent, self.cfg.eval_temperature)
                for _ in range(self.env_cfg.num_agents)]

    def mean_actor_sparsity(self) -> float:
        return 0.0

    def state_dict(self) -> dict:
        return {
            "weights": dict(self.agent.weights),
            "target_weights": dict(self.agent.target_weights),
            "opt": adam_state_to_dict(self.opt),
            "normalizer": {"count": self.normalizer.count, "mean": self.normalizer.mean,
                           "m2": self.normalizer.m2},
            "update_count": self.update_count,
            "replay": [{"inputs": e.inputs, "actions": e.actions, "rewards": e.rewards}
                       for e in self.replay],
            "rng": self.rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict) -> None:
        self.agent.weights = dict(state["weights"])
        self.agent.target_weights = dict(state["target_weights"])
        self.opt = adam_state_from_dict(state["opt"])
        norm = state["normalizer"]
        self.normalizer = RewardNormalizer(count=int(norm["count"]),
                                           mean=float(norm["mean"]), m2=float(norm["m2"]))
        self.update_count = int(state["update_count"])
        self.replay = deque(
            (EpisodeData(inputs=e["inputs"], actions=e["actions"], rewards=e["rewards"])
             for e in state["replay"]),
            maxlen=self.cfg.replay_capacity)
        self.rng.bit_generator.state = state["rng"]


def train_dqn(env_cfg: dsa_env.EnvConfig, agent_or_cfg, iterations: int,
              rng: np.random.Generator, hidden_size: int = 128,
              eval_every: int = 0, eval_episodes: int = 20):
    """Standalone DQN training; returns the shared agent and an eval curve."""
    cfg = agent_or_cfg if isinstance(agent_or_cfg, DqnConfig) else DqnConfig()
    trainer = DqnTrainer(env_cfg, cfg, hidden_size, rng, rng)
    if isinstance(agent_or_cfg, DqnAgentShared):
        trainer.agent = agent_or_cfg
        trainer.opt = init_adam_state(trainer.agent.weights)
    curve = []
    for i in range(1, iterations + 1):
        trainer.run_iteration(i)
        if eval_every and i % eval_every == 0:
            eval_rng = np.random.default_rng((i, 0xD0))
            mean, _ = evaluate_agents(env_cfg, trainer.eval_agents(), eval_episodes, eval_rng)
            curve.append((i, mean))
    return trainer.agent, curve


# ---------------------------------------------------------------------------
# Pruning at initialization with parameter sharing
# ---------------------------------------------------------------------------


@dataclass
class PaiShared:
    """One shared actor plus immutable per-agent masks fixed at initialization."""

    actor: ActorParams
    masks: list[Weights]


def make_pai_masks(rng: np.random.Generator, template: Weights, num_agents: int,
                   sparsity: float = 0.5) -> list[Weights]:
    """Per-agent masks: floor(sparsity * size) uniformly chosen zeros per tensor."""
    if not (0.0 <= sparsity < 1.0):
        raise ConfigError(f"mask sparsity must be in [0, 1), got {sparsity}")
    masks = []
    for _ in range(num_agents):
        mask: Weights = {}
        for key in PRUNABLE_KEYS:
            size = template[key].size
            flat = np.ones(size)
            k = int(np.floor(sparsity * size + 1e-9))
            if k > 0:
                flat[rng.permutation(size)[:k]] = 0.0
            mask[key] = flat.reshape(template[key].shape)
        masks.append(mask)
    return masks


def masked_weights(shared: Weights, mask: Weights) -> Weights:
    """Effective per-agent weights: shared * mask on weight matrices, biases shared."""
    out = dict(shared)
    for key in PRUNABLE_KEYS:
        out[key] = shared[key] * mask[key]
    return out


class PaiTrainer:
    """PPO with a single shared actor; each agent sees the masked weights and
    contributes gradients only at its unmasked coordinates."""

    def __init__(self, env_cfg: dsa_env.EnvConfig, ppo_cfg: PpoConfig, gae_cfg: GaeConfig,
                 hidden_size: int, sparsity: float, init_rng: np.random.Generator,
                 train_rng: np.random.Generator):
        env_cfg.validate()
        ppo_cfg.validate()
        gae_cfg.validate()
        self.env_cfg = env_cfg
        self.ppo_cfg = ppo_cfg
        self.gae_cfg = gae_cfg
        shared = init_actor(init_rng, env_cfg.num_channels, hidden_size)
        masks = make_pai_masks(init_rng, shared.weights, env_cfg.num_agents, sparsity)
        self.pai = PaiShared(actor=shared, masks=masks)
        self.critic = init_critic(init_rng, hidden_size)
        self.actor_opt = init_adam_state(shared.weights)
        self.critic_opt = init_adam_state(self.critic.weights)
        self.normalizer = RewardNormalizer()
        self.rng = train_rng

    def effective_actor(self, agent_idx: int) -> ActorParams:
        shared = self.pai.actor
        return ActorParams(num_actions=shared.num_actions, hidden_size=shared.hidden_size,
                           weights=masked_weights(shared.weights, self.pai.masks[agent_idx]),
                           mask={k: m.copy() for k, m in self.pai.masks[agent_idx].items()})

    def run_iteration(self, iteration: int) -> dict:
        actors = [self.effective_actor(i) for i in range(self.env_cfg.num_agents)]
        trajectories = collect_trajectories(self.env_cfg, actors, self.critic,
                                            self.ppo_cfg.episodes_per_iter, self.rng)
        for traj in trajectories:
            normalize_rewards(traj, self.normalizer)

        n = self.env_cfg.num_agents
        actor_losses = np.zeros(n)
        critic_losses = np.zeros(n)
        passes = 0
        for _ in range(self.ppo_cfg.update_epochs):
            for traj in trajectories:
                rewards = traj.norm_rewards
                returns = rewards_to_go(rewards, self.gae_cfg.gamma)
                total = {k: np.zeros_like(v) for k, v in self.pai.actor.weights.items()}
                for i in range(n):
                    adv = compute_gae(traj.values[i], rewards,
                                      self.gae_cfg.gamma, self.gae_cfg.gae_lambda)
                    eff = masked_weights(self.pai.actor.weights, self.pai.masks[i])
                    a_loss, grads, _ = actor_sequence_loss_grad(
                        eff, traj.inputs[i], traj.actions[i], traj.log_probs[i],
                        adv, self.ppo_cfg.clip_eps, self.ppo_cfg.entropy_coef)
                    for key in PRUNABLE_KEYS:
                        grads[key] *= self.pai.masks[i][key]
                    for key in total:
                        total[key] += grads[key]
                    c_loss, c_grads, _ = critic_sequence_loss_grad(
                        self.critic.weights, traj.inputs[i], returns)
                    clip_grads(c_grads, self.ppo_cfg.grad_clip)
                    adam_step(self.critic.weights, c_grads, self.critic_opt,
                              self.ppo_cfg.critic_lr)
                    actor_losses[i] += a_loss
                    critic_losses[i] += c_loss
                clip_grads(total, self.ppo_cfg.grad_clip)
                adam_step(self.pai.actor.weights, total, self.actor_opt,
                          self.ppo_cfg.actor_lr)
                passes += 1
        mean_reward = float(np.mean([t.rewards.sum() for t in trajectories]))
        return {"actor_losses": (actor_losses / passes).tolist(),
                "critic_losses": (critic_losses / passes).tolist(),
                "mean_episode_reward": mean_reward,
                "normalizer": {"count": self.normalizer.count,
                               "mean": self.normalizer.mean,
                               "variance": self.normalizer.variance}}

    def eval_agents(self) -> list[SampledActorAgent]:
        return [SampledActorAgent(self.effective_actor(i))
                for i in range(self.env_cfg.num_agents)]

    def mean_actor_sparsity(self) -> float:
        from .pruning import actual_sparsity

        return float(np.mean([actual_sparsity(self.effective_actor(i))
                              for i in range(self.env_cfg.num_agents)]))

    def state_dict(self) -> dict:
        return {
            "shared": dict(self.pai.actor.weights),
            "masks": [dict(m) for m in self.pai.masks],
            "critic": dict(self.critic.weights),
            "actor_opt": adam_state_to_dict(self.actor_opt),
            "critic_opt": adam_state_to_dict(self.critic_opt),
            "normalizer": {"count": self.normalizer.count, "mean": self.normalizer.mean,
                           "m2": self.normalizer.m2},
            "rng": self.rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict) -> None:
        self.pai.actor.weights = dict(state["shared"])
        self.pai.masks = [dict(m) for m in state["masks"]]
        self.critic.weights = dict(state["critic"])
        self.actor_opt = adam_state_from_dict(state["actor_opt"])
        self.critic_opt = adam_state_from_dict(state["critic_opt"])
        norm = state["normalizer"]
        self.normalizer = RewardNormalizer(count=int(norm["count"]),
                                           mean=float(norm["mean"]), m2=float(norm["m2"]))
        self.rng.bit_generator.state = state["rng"]


def train_pai(env_cfg: dsa_env.EnvConfig, iterations: int, rng: np.random.Generator,
              hidden_size: int = 128, sparsity: float = 0.5,
              ppo_cfg: PpoConfig | None = None, gae_cfg: GaeConfig | None = None,
              eval_every: int = 0, eval_episodes: int = 20):
    """Standalone PaI training; returns the shared state and an eval curve."""
    trainer = PaiTrainer(env_cfg, ppo_cfg or PpoConfig(), gae_cfg or GaeConfig(),
                         hidden_size, sparsity, rng, rng)
    curve = []
    for i in range(1, iterations + 1):
        trainer.run_iteration(i)
        if eval_every and i % eval_every == 0:
            eval_rng = np.random.default_rng((i, 0xA1))
            mean, _ = evaluate_agents(env_cfg, trainer.eval_agents(), eval_episodes, eval_rng)
            curve.append((i, mean))
    return trainer.pai, curve


# ---------------------------------------------------------------------------
# Dense actor-critic reference (pruning disabled)
# ---------------------------------------------------------------------------


def dense_iagc(env_cfg: dsa_env.EnvConfig, iterations: int, rng: np.random.Generator,
               hidden_size: int = 128, ppo_cfg: PpoConfig | None = None,
               gae_cfg: GaeConfig | None = None, eval_every: int = 0,
               eval_episodes: int = 20):
    """Independent actors + global critic with no pruning; returns trainer and curve."""
    from .ppo import IagcTrainer

    trainer = IagcTrainer(env_cfg, ppo_cfg or PpoConfig(), gae_cfg or GaeConfig(),
                          hidden_size, rng, rng, prune_cfg=None)
    curve = []
    for i in range(1, iterations + 1):
        trainer.run_iteration(i)
        if eval_every and i % eval_every == 0:
            eval_rng = np.random.default_rng((i, 0xDE))
            mean, _ = evaluate_agents(env_cfg, trainer.eval_agents(), eval_episodes, eval_rng)
            curve.append((i, mean))
    return trainer, curve
