"""Sparse multi-agent actor-critic training for distributed dynamic spectrum access.

A slotted multi-channel medium-access simulator, a from-scratch recurrent
actor-critic PPO stack (float64, exact BPTT gradients), gradual magnitude
pruning with linear/polynomial/harmonic-annealing schedules, baseline
policies, and an experiment harness with a CLI.
"""

from .env import (EnvConfig, EnvState, EpisodeTrace, StepResult, cumulative_snr,
                  episode_throughput, reset, step)
from .nets import (ActorParams, CriticParams, actor_forward, backward_through_time,
                   critic_forward, init_actor, init_critic)
from .optim import AdamState, adam_step, clip_grads, init_adam_state
from .ppo import (GaeConfig, IagcTrainer, PpoConfig, RewardNormalizer, Trajectory,
                  clip_fn, collect_trajectories, compute_gae, normalize_rewards,
                  rewards_to_go, update_iteration)
from .pruning import (PruneConfig, SparsitySchedule, actual_sparsity, maybe_prune,
                      prune_actor, sparsity_at)
from .baselines import (AlohaPolicy, AlohaTrainer, DqnConfig, DqnTrainer, PaiTrainer,
                        aloha_act, dense_iagc, train_dqn, train_pai)
from .config import ExperimentConfig, load_config
from .harness import aggregate, export_schedule_plotdata, run_experiment

__version__ = "0.1.0"
