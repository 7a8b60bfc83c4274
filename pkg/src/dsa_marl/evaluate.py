"""Policy evaluation rollouts shared by all training methods.

Agents follow a small protocol: ``reset()`` at episode start and
``act(prev_action, prev_obs, rng) -> action`` once per slot. Evaluation
never touches training state; callers pass a dedicated random stream.
"""

from __future__ import annotations

import numpy as np

from . import env as dsa_env


def play_episode(env_cfg: dsa_env.EnvConfig, agents: list,
                 rng: np.random.Generator) -> dsa_env.EpisodeTrace:
    """One full episode with the given per-agent policies."""
    state = dsa_env.reset(env_cfg, rng)
    for agent in agents:
        agent.reset()
    recorder = dsa_env.TraceRecorder()
    actions = np.zeros(env_cfg.num_agents, dtype=np.int64)
    while not state.done:
        for i, agent in enumerate(agents):
            actions[i] = agent.act(float(state.last_actions[i]),
                                   float(state.last_obs[i]), rng)
        state, result = dsa_env.step(state, actions)
        recorder.add(actions, result)
    return recorder.build()


def evaluate_agents(env_cfg: dsa_env.EnvConfig, agents: list, episodes: int,
                    rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Mean episodic reward (summed joint reward per episode) over fresh episodes."""
    totals = np.empty(episodes)
    for e in range(episodes):
        trace = play_episode(env_cfg, agents, rng)
        totals[e] = trace.rewards.sum()
    return float(totals.mean()), totals
