"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 1-5 are exact/oracle checks and run in seconds. Criteria 6, 7 and 9
share two desk-scale training runs (4 agents, 2 channels, horizon 50, 300
iterations, 5 seeds; actor lr 1e-3 / critic lr 5e-4 so that 300 Adam steps
move the networks a meaningful distance). Criterion 8 trains every method
briefly on matched seeds under both setups. Criterion 10 (full scale, hours)
is excluded from the default run; set DSA_MARL_FULL_SCALE=1 to include it.
"""

import hashlib
import itertools
import os

import numpy as np
import pytest

from dsa_marl import env as dsa_env
from dsa_marl import nets, ppo, pruning
from dsa_marl.config import ExperimentConfig
from dsa_marl.evaluate import evaluate_agents
from dsa_marl.harness import (build_trainer, evaluate_trainer, read_eval_records,
                              run_experiment, stream_rng)

from helpers import finite_difference_grads, max_rel_error, relu_inputs_screened
from test_env import oracle_step
from test_ppo import gae_brute, rtg_brute, screened_ppo_batch
from test_pruning import mp_sparsity


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def silent(*args, **kwargs):
    pass


# ---------------------------------------------------------------------------
# Criterion 1: scheduler exactness (< 1 s)
# ---------------------------------------------------------------------------

def test_criterion_1_scheduler_exactness():
    grid = (0, 1, 50, 100, 200, 500, 999, 1000)
    worst = 0.0
    for kind in ("linear", "polynomial", "harmonic"):
        for i_start in (0, 200):
            sched = pruning.SparsitySchedule(kind=kind, p_final=0.95, i_total=1000,
                                             p_start=0.0, i_start=i_start)
            for i in grid:
                got = pruning.sparsity_at(sched, i)
                want = float(mp_sparsity(kind, i, i_start=i_start))
                worst = max(worst, abs(got - want))
    assert worst < 1e-12

    for kind in ("linear", "polynomial", "harmonic"):
        sched = pruning.SparsitySchedule(kind=kind, p_final=0.95, i_total=1000)
        assert pruning.sparsity_at(sched, 0) == 0.0
        assert pruning.sparsity_at(sched, 1000) == 0.95
    harmonic = pruning.SparsitySchedule(kind="harmonic", p_final=0.95, i_total=1000)
    series = pruning.schedule_series(harmonic, 1000)
    non_monotone = bool(np.any(np.diff(series) < 0.0))
    assert non_monotone
    report(1, worst < 1e-12 and non_monotone,
           f"all schedules match 50-digit evaluation (worst |err| {worst:.2e}), "
           f"endpoints exact, harmonic non-monotone")


# ---------------------------------------------------------------------------
# Criterion 2: environment oracle, exhaustive (< 10 s)
# ---------------------------------------------------------------------------

def test_criterion_2_environment_oracle():
    checked = 0
    for n, k in ((2, 1), (3, 2), (4, 3)):
        for with_pu in (False, True):
            cfg = dsa_env.EnvConfig(num_agents=n, num_channels=k, horizon=2,
                                    pu_probs=tuple([0.5] * k) if with_pu else None)
            state = dsa_env.reset(cfg, np.random.default_rng(1000 * n + k))
            if with_pu:
                state.pu_occupied[:] = False
                state.pu_occupied[0] = True
            for joint in itertools.product(range(k + 1), repeat=n):
                fresh = dsa_env.EnvState(
                    config=cfg, snr=state.snr, pu_occupied=state.pu_occupied, t=0,
                    last_obs=np.zeros(n, dtype=np.int64),
                    last_actions=np.zeros(n, dtype=np.int64))
                _, res = dsa_env.step(fresh, np.array(joint))
                obs, achieved, reward = oracle_step(state.snr, state.pu_occupied, joint)
                assert list(res.obs) == obs, (n, k, with_pu, joint)
                assert list(res.achieved_snr) == achieved, (n, k, with_pu, joint)
                assert res.reward == reward, (n, k, with_pu, joint)
                checked += 1
    report(2, True, f"{checked} joint-action outcomes bit-equal to the brute-force oracle")


# ---------------------------------------------------------------------------
# Criterion 3: gradient checks (< 30 s)
# ---------------------------------------------------------------------------

def test_criterion_3_gradient_checks():
    worst_bptt = 0.0
    for hidden, steps, out_dim, seed0 in ((4, 5, 3, 500), (8, 6, 3, 600), (4, 6, 1, 700)):
        seed = seed0
        while True:
            rng = np.random.default_rng(seed)
            weights = nets.init_network(rng, out_dim, hidden)
            inputs = np.column_stack([rng.integers(0, 4, steps),
                                      rng.integers(-2, 2, steps)]).astype(float)
            _, cache = nets.forward_sequence(weights, inputs)
            if relu_inputs_screened(cache):
                break
            seed += 1
        dout = np.random.default_rng(seed + 1).standard_normal((steps, out_dim))

        def loss(w):
            outs, _ = nets.forward_sequence(w, inputs)
            return float(np.sum(outs * dout))

        bp = nets.backward_through_time(weights, inputs, dout)
        fd = finite_difference_grads(weights, loss)
        worst_bptt = max(worst_bptt, max_rel_error(fd, bp))
    assert worst_bptt < 1e-4

    weights, inputs, actions, old_logp, adv = screened_ppo_batch(800, steps=4, hidden=4)

    def ppo_loss(w):
        value, _, _ = ppo.actor_sequence_loss_grad(w, inputs, actions, old_logp, adv, 0.2)
        return value

    _, grads, _ = ppo.actor_sequence_loss_grad(weights, inputs, actions, old_logp, adv, 0.2)
    ppo_err = max_rel_error(finite_difference_grads(weights, ppo_loss), grads)
    assert ppo_err < 1e-3
    report(3, True, f"BPTT worst rel err {worst_bptt:.2e} (< 1e-4); "
                    f"PPO batch gradient rel err {ppo_err:.2e} (< 1e-3)")


# ---------------------------------------------------------------------------
# Criterion 4: GAE / returns identities (< 1 s)
# ---------------------------------------------------------------------------

def test_criterion_4_gae_and_returns():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        length = int(rng.integers(3, 12))
        values = rng.standard_normal(length)
        rewards = rng.standard_normal(length)
        td = ppo.compute_gae(values, rewards, 0.99, 0.0)
        expect_td = rewards + 0.99 * np.append(values[1:], 0.0) - values
        worst = max(worst, float(np.max(np.abs(td - expect_td))))
        mc = ppo.compute_gae(values, rewards, 0.99, 1.0)
        expect_mc = ppo.rewards_to_go(rewards, 0.99) - values
        worst = max(worst, float(np.max(np.abs(mc - expect_mc))))
        mid = ppo.compute_gae(values, rewards, 0.99, 0.95)
        worst = max(worst, float(np.max(np.abs(mid - gae_brute(values, rewards, 0.99, 0.95)))))
        rtg = ppo.rewards_to_go(rewards, 0.99)
        worst = max(worst, float(np.max(np.abs(rtg - rtg_brute(rewards, 0.99)))))
    assert worst < 1e-12
    report(4, True, f"lambda=0/1 identities and brute-force sums within {worst:.2e} (< 1e-12)")


# ---------------------------------------------------------------------------
# Criterion 5: pruning mechanics (< 1 s)
# ---------------------------------------------------------------------------

def test_criterion_5_pruning_mechanics():
    actor = nets.init_actor(np.random.default_rng(5), num_channels=2, hidden_size=16)
    for p in (0.25, 0.5, 0.9, 0.95):
        pruned = pruning.prune_actor(actor, p)
        for key in nets.PRUNABLE_KEYS:
            size = pruned.mask[key].size
            zeros = int(np.sum(pruned.mask[key] == 0.0))
            assert zeros == int(np.floor(p * size + 1e-9)), (p, key)
            original = np.abs(actor.weights[key].ravel())
            removed = original[pruned.mask[key].ravel() == 0.0]
            kept = original[pruned.mask[key].ravel() == 1.0]
            if removed.size and kept.size:
                assert removed.max() <= kept.min(), (p, key)

    critic = nets.init_critic(np.random.default_rng(6), hidden_size=16)
    digest_before = hashlib.sha256(
        b"".join(critic.weights[k].tobytes() for k in sorted(critic.weights))).hexdigest()
    cfg = pruning.PruneConfig(
        schedules=[pruning.SparsitySchedule(kind="harmonic", p_final=0.95, i_total=1000)],
        prune_every=5)
    pruning.maybe_prune(500, cfg, [actor])
    digest_after = hashlib.sha256(
        b"".join(critic.weights[k].tobytes() for k in sorted(critic.weights))).hexdigest()
    assert digest_before == digest_after
    report(5, True, "per-tensor zero counts exact, magnitude order respected, "
                    "critic hash unchanged by maybe_prune")


# ---------------------------------------------------------------------------
# Criteria 6, 7, 9: desk-scale runs (shared fixtures)
# ---------------------------------------------------------------------------

DESK = dict(setup="A", num_agents=4, num_channels=2, horizon=50, iterations=300,
            seeds=(0, 1, 2, 3, 4), eval_every=50, eval_episodes=30,
            actor_lr=1e-3, critic_lr=5e-4)


def final_rewards(run_dir, cfg):
    finals = {}
    sparsities = {}
    for seed in cfg.seeds:
        records = read_eval_records(run_dir / f"seed_{seed}" / "evals.csv")
        last = max(records, key=lambda r: r.iteration)
        assert last.iteration == cfg.iterations
        finals[seed] = last.mean_reward
        sparsities[seed] = last.sparsity
    return finals, sparsities


@pytest.fixture(scope="module")
def dense_cfg():
    return ExperimentConfig(algorithm="iagc_ppo_dense", **DESK)


@pytest.fixture(scope="module")
def dense_run(tmp_path_factory, dense_cfg):
    out = tmp_path_factory.mktemp("accept") / "dense"
    run_experiment(dense_cfg, out, log=silent)
    return out


@pytest.fixture(scope="module")
def pruned_run(tmp_path_factory):
    cfg = ExperimentConfig(algorithm="iagc_ppo_pruned", scheduler="harmonic",
                           p_final=0.9, i_prune_total=DESK["iterations"],
                           prune_every=5, **DESK)
    out = tmp_path_factory.mktemp("accept") / "pruned"
    run_experiment(cfg, out, log=silent)
    return cfg, out


@pytest.fixture(scope="module")
def aloha_reference(dense_cfg):
    cfg = ExperimentConfig(algorithm="aloha", **DESK)  # aloha_q < 0 -> q = K/N
    trainer = build_trainer(cfg, 0)
    mean, _ = evaluate_agents(cfg.env_config(), trainer.eval_agents(), 1000,
                              stream_rng(0, 99))
    return mean


def test_criterion_6_learning_beats_aloha(dense_run, dense_cfg, aloha_reference):
    finals, _ = final_rewards(dense_run, dense_cfg)
    bar = 1.1 * aloha_reference
    wins = sum(1 for value in finals.values() if value >= bar)
    report(6, wins >= 4,
           f"dense finals {[f'{v:.0f}' for v in finals.values()]} vs 1.1x aloha "
           f"{bar:.1f}: {wins}/5 seeds above (need >= 4)")


def test_criterion_7_pruning_preserves_performance(dense_run, dense_cfg, pruned_run):
    cfg, out = pruned_run
    dense_finals, _ = final_rewards(dense_run, dense_cfg)
    pruned_finals, sparsities = final_rewards(out, cfg)
    dense_mean = float(np.mean(list(dense_finals.values())))
    pruned_mean = float(np.mean(list(pruned_finals.values())))
    ratio = pruned_mean / dense_mean
    min_sparsity = min(sparsities.values())
    report(7, ratio >= 0.8 and min_sparsity >= 0.89,
           f"pruned mean {pruned_mean:.0f} = {ratio:.3f} of dense {dense_mean:.0f} "
           f"(need >= 0.8); min final sparsity {min_sparsity:.4f} (need >= 0.89)")


# ---------------------------------------------------------------------------
# Criterion 8: setup-B rewards below setup-A (matched seeds, every method)
# ---------------------------------------------------------------------------

def test_criterion_8_setup_ordering():
    base = dict(num_agents=4, num_channels=2, horizon=40, iterations=60,
                seeds=(0, 1), eval_every=60, eval_episodes=40,
                actor_lr=1e-3, critic_lr=5e-4)
    rows = []
    ok = True
    for method in ("aloha", "iagc_ppo_dense", "iagc_ppo_pruned", "dqn_shared", "pai"):
        means = {}
        for setup in ("A", "B"):
            kw = dict(base)
            if method == "iagc_ppo_pruned":
                kw.update(scheduler="harmonic", p_final=0.9,
                          i_prune_total=base["iterations"])
            cfg = ExperimentConfig(algorithm=method, setup=setup, pu_prob=0.2, **kw)
            values = []
            for seed in cfg.seeds:
                trainer = build_trainer(cfg, seed)
                for i in range(1, cfg.iterations + 1):
                    trainer.run_iteration(i)
                mean, _ = evaluate_trainer(cfg, trainer, seed, cfg.iterations)
                values.append(mean)
            means[setup] = float(np.mean(values))
        ok = ok and means["B"] < means["A"]
        rows.append(f"{method} A={means['A']:.0f} B={means['B']:.0f}")
    report(8, ok, "every method below its setup-A counterpart under PUs: " + "; ".join(rows))


# ---------------------------------------------------------------------------
# Criterion 9: determinism / resume
# ---------------------------------------------------------------------------

def test_criterion_9_resume_determinism(tmp_path, dense_run, dense_cfg):
    cfg = ExperimentConfig(**{**DESK, "seeds": (0,)}, algorithm="iagc_ppo_dense")
    part = run_experiment(cfg, tmp_path / "part", stop_after=150, log=silent)
    resumed = run_experiment(cfg, tmp_path / "resumed", resume_from=part, log=silent)
    reference = read_eval_records(dense_run / "seed_0" / "evals.csv")
    records = read_eval_records(resumed / "seed_0" / "evals.csv")
    key = lambda rs: [(r.seed, r.iteration, r.mean_reward, r.sparsity) for r in rs]
    ok = key(reference) == key(records)
    report(9, ok, f"resumed records ({len(records)}) exactly match the "
                  f"uninterrupted run's (wall_ms excluded)")


# ---------------------------------------------------------------------------
# Criterion 10: optional full-scale trend run (hours; off by default)
# ---------------------------------------------------------------------------

@pytest.mark.skipif(not os.environ.get("DSA_MARL_FULL_SCALE"),
                    reason="full-scale trend run takes hours; set DSA_MARL_FULL_SCALE=1")
def test_criterion_10_full_scale_trend(tmp_path_factory):
    base = dict(setup="A", num_agents=10, num_channels=5, horizon=100,
                iterations=1000, seeds=(0, 1, 2), eval_every=100, eval_episodes=50,
                actor_lr=1e-3, critic_lr=5e-4)
    finals = {}
    for method in ("aloha", "dqn_shared", "iagc_ppo_dense", "iagc_ppo_pruned"):
        kw = dict(base)
        if method == "iagc_ppo_pruned":
            kw.update(scheduler="harmonic", p_final=0.95, i_prune_total=1000)
        cfg = ExperimentConfig(algorithm=method, **kw)
        out = tmp_path_factory.mktemp("full") / method
        run_experiment(cfg, out)
        values, _ = final_rewards(out, cfg)
        finals[method] = float(np.mean(list(values.values())))
    ok = (finals["iagc_ppo_dense"] > finals["aloha"]
          and finals["iagc_ppo_dense"] > finals["dqn_shared"]
          and finals["iagc_ppo_pruned"] > finals["aloha"]
          and finals["iagc_ppo_pruned"] > finals["dqn_shared"])
    report(10, ok, f"full-scale ordering {finals}")
