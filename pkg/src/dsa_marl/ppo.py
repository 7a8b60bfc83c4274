"""Independent-actor global-critic training with clipped PPO.

One training iteration: collect full episodes with the current actors while
the shared critic tracks each agent's input stream with its own hidden
state, normalize the joint rewards with running moments, then replay every
trajectory agent by agent from zeroed hidden states, accumulating the clip
objective (actors, gradient ascent) and squared reward-to-go error (critic,
gradient descent) through the recurrent state before applying one Adam step
per pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env as dsa_env
from .errors import ConfigError, ContractError
from .nets import (ActorParams, CriticParams, Weights, actor_forward, critic_forward,
                   backward_sequence, forward_sequence, init_actor, init_critic, zero_hidden)
from .optim import (AdamState, adam_state_from_dict, adam_state_to_dict, adam_step,
                    clip_grads, init_adam_state)


@dataclass
class PpoConfig:
    clip_eps: float = 0.2
    actor_lr: float = 1e-4
    critic_lr: float = 5e-5
    episodes_per_iter: int = 1
    update_epochs: int = 1
    entropy_coef: float = 0.0
    grad_clip: float | None = 0.5

    def validate(self) -> None:
        if self.clip_eps <= 0:
            raise ConfigError(f"clip_eps must be > 0, got {self.clip_eps}")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.episodes_per_iter < 1 or self.update_epochs < 1:
            raise ConfigError("episodes_per_iter and update_epochs must be >= 1")


@dataclass
class GaeConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95

    def validate(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")


@dataclass
class Trajectory:
    """One episode of per-agent training data.

    The joint reward is identical for every agent, so the reward sequences
    are stored once. ``norm_rewards`` is filled in by normalize_rewards.
    """

    inputs: np.ndarray        # (N, T, 2) previous action/observation pairs
    actions: np.ndarray       # (N, T) int
    log_probs: np.ndarray     # (N, T) behavior log-probabilities
    values: np.ndarray        # (N, T) critic estimates under behavior params
    rewards: np.ndarray       # (T,) raw joint rewards
    norm_rewards: np.ndarray | None = None

    @property
    def num_agents(self) -> int:
        return self.inputs.shape[0]

    @property
    def horizon(self) -> int:
        return self.inputs.shape[1]


@dataclass
class RewardNormalizer:
    """Running-moment reward normalizer (Welford accumulation)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def variance(self) -> float:
        return self.m2 / self.count if self.count else 0.0

    def update(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def normalize(self, x: float) -> float:
        return (x - self.mean) / np.sqrt(self.variance + 1e-8)


def normalize_rewards(traj: Trajectory, normalizer: RewardNormalizer) -> Trajectory:
    """Update the normalizer with the episode's rewards in order and attach
    the normalized sequence to the trajectory."""
    norm = np.empty_like(traj.rewards)
    for t, r in enumerate(traj.rewards):
        normalizer.update(float(r))
        norm[t] = normalizer.normalize(float(r))
    traj.norm_rewards = norm
    return traj


def rewards_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Discounted suffix sums within one episode."""
    out = np.empty_like(np.asarray(rewards, dtype=float))
    acc = 0.0
    for t in range(len(out) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def compute_gae(values: np.ndarray, rewards: np.ndarray, gamma: float,
                lam: float) -> np.ndarray:
    """Generalized advantage estimates with terminal bootstrap value 0."""
    values = np.asarray(values, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    if values.shape != rewards.shape:
        raise ContractError(f"values shape {values.shape} != rewards shape {rewards.shape}")
    horizon = len(values)
    adv = np.empty(horizon)
    acc = 0.0
    for t in range(horizon - 1, -1, -1):
        next_value = values[t + 1] if t + 1 < horizon else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
    return adv


def clip_fn(eps: float, advantage):
    """(1+eps)A for A >= 0, (1-eps)A for A <= 0."""
    advantage = np.asarray(advantage, dtype=float)
    return np.where(advantage >= 0.0, (1.0 + eps) * advantage, (1.0 - eps) * advantage)


def actor_loss(action: int, old_log_prob: float, new_probs: np.ndarray,
               advantage: float, eps: float) -> float:
    """Clip objective for a single step given the new action distribution."""
    old_prob = np.exp(old_log_prob)
    if old_prob <= 0.0:
        raise ContractError("behavior probability must be positive")
    ratio = new_probs[action] / old_prob
    return float(min(ratio * advantage, clip_fn(eps, advantage)))


def critic_loss(value: float, reward_to_go: float) -> float:
    return float((value - reward_to_go) ** 2)


def sample_from_probs(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; deterministic for a given stream state."""
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def collect_trajectories(env_cfg: dsa_env.EnvConfig, actors: list[ActorParams],
                         critic: CriticParams, episodes: int,
                         rng: np.random.Generator) -> list[Trajectory]:
    """Roll out full episodes with actions sampled from the current actors.

    Actor and critic hidden states start at zero each episode; the critic
    follows each agent's action-observation stream independently.
    """
    if episodes < 1:
        raise ConfigError(f"episodes must be >= 1, got {episodes}")
    n = env_cfg.num_agents
    if len(actors) != n:
        raise ContractError(f"{len(actors)} actors for {n} agents")
    horizon = env_cfg.horizon
    trajectories = []
    for _ in range(episodes):
        state = dsa_env.reset(env_cfg, rng)
        actor_hidden = [zero_hidden(a.hidden_size) for a in actors]
        critic_hidden = [zero_hidden(critic.hidden_size) for _ in range(n)]
        inputs = np.zeros((n, horizon, 2))
        actions = np.zeros((n, horizon), dtype=np.int64)
        log_probs = np.zeros((n, horizon))
        values = np.zeros((n, horizon))
        rewards = np.zeros(horizon)
        for t in range(horizon):
            joint = np.zeros(n, dtype=np.int64)
            for i in range(n):
                y = (float(state.last_actions[i]), float(state.last_obs[i]))
                probs, actor_hidden[i] = actor_forward(actors[i], y, actor_hidden[i])
                a = sample_from_probs(probs, rng)
                value, critic_hidden[i] = critic_forward(critic, y, critic_hidden[i])
                inputs[i, t] = y
                actions[i, t] = a
                log_probs[i, t] = np.log(probs[a])
                values[i, t] = value
                joint[i] = a
            state, result = dsa_env.step(state, joint)
            rewards[t] = result.reward
        trajectories.append(Trajectory(inputs=inputs, actions=actions,
                                       log_probs=log_probs, values=values,
                                       rewards=rewards))
    return trajectories


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def actor_sequence_loss_grad(weights: Weights, inputs: np.ndarray, actions: np.ndarray,
                             old_log_probs: np.ndarray, advantages: np.ndarray,
                             clip_eps: float, entropy_coef: float = 0.0):
    """Total clip objective over one trajectory, as a minimization loss.

    Returns (loss, gradient dict, new log-probabilities). The gradient flows
    only through the unclipped branch wherever it attains the min, matching
    the piecewise-constant clipped branch.
    """
    steps = inputs.shape[0]
    logits, cache = forward_sequence(weights, inputs)
    logp_all = _log_softmax_rows(logits)
    probs = np.exp(logp_all)
    rows = np.arange(steps)
    new_logp = logp_all[rows, actions]
    ratio = np.exp(new_logp - old_log_probs)
    unclipped = ratio * advantages
    clipped = clip_fn(clip_eps, advantages)
    objective = np.minimum(unclipped, clipped)
    loss = -float(objective.sum())

    coef = np.where(unclipped <= clipped, ratio * advantages, 0.0)
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    dlogits = -coef[:, None] * (onehot - probs)
    if entropy_coef:
        entropy = -(probs * logp_all).sum(axis=1)
        loss -= entropy_coef * float(entropy.sum())
        dlogits += entropy_coef * probs * (logp_all + entropy[:, None])
    grads = backward_sequence(cache, dlogits)
    return loss, grads, new_logp


def critic_sequence_loss_grad(weights: Weights, inputs: np.ndarray, targets: np.ndarray):
    """Total squared error of the value sequence against its targets."""
    outs, cache = forward_sequence(weights, inputs)
    values = outs[:, 0]
    err = values - targets
    loss = float(np.sum(err * err))
    grads = backward_sequence(cache, (2.0 * err)[:, None])
    return loss, grads, values


def update_iteration(actors: list[ActorParams], critic: CriticParams,
                     trajectories: list[Trajectory], ppo_cfg: PpoConfig,
                     gae_cfg: GaeConfig, actor_opts: list[AdamState],
                     critic_opt: AdamState) -> dict:
    """Bootstrapped sequential update pass over the collected trajectories.

    For every trajectory and agent, in order: replay the actor from zeroed
    hidden states, take one Adam ascent step on the accumulated clip
    objective, then one Adam descent step of the shared critic on that
    agent's reward-to-go targets. Stored behavior log-probs and values stay
    fixed for the whole iteration.
    """
    ppo_cfg.validate()
    gae_cfg.validate()
    n = len(actors)
    for traj in trajectories:
        if traj.num_agents != n:
            raise ContractError(f"trajectory has {traj.num_agents} agents, expected {n}")
        if traj.norm_rewards is None:
            raise ContractError("trajectory rewards must be normalized before the update")

    actor_losses = np.zeros(n)
    critic_losses = np.zeros(n)
    passes = 0
    for epoch in range(ppo_cfg.update_epochs):
        for traj in trajectories:
            rewards = traj.norm_rewards
            returns = rewards_to_go(rewards, gae_cfg.gamma)
            for i in range(n):
                adv = compute_gae(traj.values[i], rewards, gae_cfg.gamma, gae_cfg.gae_lambda)
                a_loss, a_grads, _ = actor_sequence_loss_grad(
                    actors[i].weights, traj.inputs[i], traj.actions[i],
                    traj.log_probs[i], adv, ppo_cfg.clip_eps, ppo_cfg.entropy_coef)
                clip_grads(a_grads, ppo_cfg.grad_clip)
                adam_step(actors[i].weights, a_grads, actor_opts[i], ppo_cfg.actor_lr)

                c_loss, c_grads, _ = critic_sequence_loss_grad(
                    critic.weights, traj.inputs[i], returns)
                clip_grads(c_grads, ppo_cfg.grad_clip)
                adam_step(critic.weights, c_grads, critic_opt, ppo_cfg.critic_lr)

                actor_losses[i] += a_loss
                critic_losses[i] += c_loss
        passes += len(trajectories)

    mean_reward = float(np.mean([t.rewards.sum() for t in trajectories]))
    return {
        "actor_losses": (actor_losses / passes).tolist(),
        "critic_losses": (critic_losses / passes).tolist(),
        "mean_episode_reward": mean_reward,
    }


class SampledActorAgent:
    """Evaluation-time agent: samples from the actor's action distribution."""

    def __init__(self, actor: ActorParams):
        self.actor = actor
        self.hidden = zero_hidden(actor.hidden_size)

    def reset(self) -> None:
        self.hidden = zero_hidden(self.actor.hidden_size)

    def act(self, prev_action: float, prev_obs: float, rng: np.random.Generator) -> int:
        probs, self.hidden = actor_forward(self.actor, (prev_action, prev_obs), self.hidden)
        return sample_from_probs(probs, rng)


class IagcTrainer:
    """Full training loop state: actors, shared critic, optimizers, normalizer.

    ``prune_cfg`` (from the pruning module) is optional; when present the
    actors are magnitude-pruned on schedule after each iteration's update.
    """

    def __init__(self, env_cfg: dsa_env.EnvConfig, ppo_cfg: PpoConfig, gae_cfg: GaeConfig,
                 hidden_size: int, init_rng: np.random.Generator,
                 train_rng: np.random.Generator, prune_cfg=None):
        env_cfg.validate()
        ppo_cfg.validate()
        gae_cfg.validate()
        self.env_cfg = env_cfg
        self.ppo_cfg = ppo_cfg
        self.gae_cfg = gae_cfg
        self.prune_cfg = prune_cfg
        self.actors = [init_actor(init_rng, env_cfg.num_channels, hidden_size)
                       for _ in range(env_cfg.num_agents)]
        self.critic = init_critic(init_rng, hidden_size)
        self.actor_opts = [init_adam_state(a.weights) for a in self.actors]
        self.critic_opt = init_adam_state(self.critic.weights)
        self.normalizer = RewardNormalizer()
        self.rng = train_rng

    def run_iteration(self, iteration: int) -> dict:
        from .pruning import maybe_prune  # local import to avoid a cycle

        trajectories = collect_trajectories(
            self.env_cfg, self.actors, self.critic,
            self.ppo_cfg.episodes_per_iter, self.rng)
        for traj in trajectories:
            normalize_rewards(traj, self.normalizer)
        stats = update_iteration(self.actors, self.critic, trajectories,
                                 self.ppo_cfg, self.gae_cfg,
                                 self.actor_opts, self.critic_opt)
        if self.prune_cfg is not None:
            self.actors = maybe_prune(iteration, self.prune_cfg, self.actors)
        stats["normalizer"] = {"count": self.normalizer.count,
                               "mean": self.normalizer.mean,
                               "variance": self.normalizer.variance}
        return stats

    def eval_agents(self) -> list[SampledActorAgent]:
        return [SampledActorAgent(a) for a in self.actors]

    def mean_actor_sparsity(self) -> float:
        from .pruning import actual_sparsity

        return float(np.mean([actual_sparsity(a) for a in self.actors]))

    def state_dict(self) -> dict:
        return {
            "actors": [{"weights": dict(a.weights), "mask": dict(a.mask)}
                       for a in self.actors],
            "critic": dict(self.critic.weights),
            "actor_opts": [adam_state_to_dict(s) for s in self.actor_opts],
            "critic_opt": adam_state_to_dict(self.critic_opt),
            "normalizer": {"count": self.normalizer.count, "mean": self.normalizer.mean,
                           "m2": self.normalizer.m2},
            "rng": self.rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict) -> None:
        if len(state["actors"]) != len(self.actors):
            raise ContractError(
                f"checkpoint has {len(state['actors'])} actors, trainer has {len(self.actors)}")
        for actor, stored in zip(self.actors, state["actors"]):
            actor.weights = dict(stored["weights"])
            actor.mask = dict(stored["mask"])
        self.critic.weights = dict(state["critic"])
        self.actor_opts = [adam_state_from_dict(s) for s in state["actor_opts"]]
        self.critic_opt = adam_state_from_dict(state["critic_opt"])
        norm = state["normalizer"]
        self.normalizer = RewardNormalizer(count=int(norm["count"]),
                                           mean=float(norm["mean"]), m2=float(norm["m2"]))
        self.rng.bit_generator.state = state["rng"]
