"""Experiment orchestration: seeded runs, periodic evaluation, checkpoints,
and CSV/figure aggregation.

Run directory layout:

    <out>/config.txt                      canonical config dump
    <out>/seed_<s>/evals.csv              seed,iteration,mean_reward,sparsity,wall_ms
    <out>/seed_<s>/checkpoints/ckpt_<i>.npz

All randomness derives from (seed, stream tag); evaluation streams also mix
in the iteration so that resumed runs reproduce the uninterrupted records.
wall_ms is measured time and is the one column excluded from determinism
guarantees.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import AlohaTrainer, DqnTrainer, PaiTrainer
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, config_to_text, load_config
from .errors import CheckpointError, ConfigError
from .evaluate import evaluate_agents
from .ppo import IagcTrainer
from .pruning import SparsitySchedule, schedule_series

_INIT_STREAM = 1
_TRAIN_STREAM = 2
_EVAL_STREAM = 3

EVAL_HEADER = "seed,iteration,mean_reward,sparsity,wall_ms"
_CKPT_RE = re.compile(r"ckpt_(\d+)\.npz$")


def _print_flush(*args) -> None:
    print(*args, flush=True)


def stream_rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


@dataclass(frozen=True)
class EvalRecord:
    seed: int
    iteration: int
    mean_reward: float
    sparsity: float
    wall_ms: float

    def to_row(self) -> str:
        return (f"{self.seed},{self.iteration},{self.mean_reward:.6g},"
                f"{self.sparsity:.6g},{self.wall_ms:.6g}")

    @classmethod
    def from_row(cls, row: str) -> "EvalRecord":
        seed, iteration, reward, sparsity, wall = row.strip().split(",")
        return cls(seed=int(seed), iteration=int(iteration), mean_reward=float(reward),
                   sparsity=float(sparsity), wall_ms=float(wall))


def read_eval_records(path: str | Path) -> list[EvalRecord]:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != EVAL_HEADER:
        raise ConfigError(f"{path} is not an evals.csv file")
    return [EvalRecord.from_row(row) for row in lines[1:]]


def build_trainer(cfg: ExperimentConfig, seed: int):
    env_cfg = cfg.env_config()
    init_rng = stream_rng(seed, _INIT_STREAM)
    train_rng = stream_rng(seed, _TRAIN_STREAM)
    if cfg.algorithm == "iagc_ppo_pruned":
        return IagcTrainer(env_cfg, cfg.ppo_config(), cfg.gae_config(), cfg.hidden_size,
                           init_rng, train_rng, prune_cfg=cfg.prune_config())
    if cfg.algorithm == "iagc_ppo_dense":
        return IagcTrainer(env_cfg, cfg.ppo_config(), cfg.gae_config(), cfg.hidden_size,
                           init_rng, train_rng, prune_cfg=None)
    if cfg.algorithm == "dqn_shared":
        return DqnTrainer(env_cfg, cfg.dqn_config(), cfg.hidden_size, init_rng, train_rng)
    if cfg.algorithm == "pai":
        return PaiTrainer(env_cfg, cfg.ppo_config(), cfg.gae_config(), cfg.hidden_size,
                          cfg.pai_sparsity, init_rng, train_rng)
    if cfg.algorithm == "aloha":
        return AlohaTrainer(env_cfg, cfg.effective_aloha_q())
    raise ConfigError(f"unknown algorithm {cfg.algorithm!r}")


def evaluate_trainer(cfg: ExperimentConfig, trainer, seed: int, iteration: int) -> tuple[float, float]:
    """Frozen-policy evaluation on fresh episodes from a dedicated stream."""
    rng = stream_rng(seed, _EVAL_STREAM, iteration)
    mean, _ = evaluate_agents(cfg.env_config(), trainer.eval_agents(),
                              cfg.eval_episodes, rng)
    return mean, trainer.mean_actor_sparsity()


def _checkpoint_meta(cfg: ExperimentConfig, seed: int, iteration: int) -> dict:
    return {
        "algorithm": cfg.algorithm,
        "seed": seed,
        "iteration": iteration,
        "setup": cfg.setup,
        "num_agents": cfg.num_agents,
        "num_channels": cfg.num_channels,
        "horizon": cfg.horizon,
        "hidden_size": cfg.hidden_size,
        "config_text": config_to_text(cfg),
    }


def _validate_meta(meta: dict, cfg: ExperimentConfig, seed: int) -> None:
    checks = {
        "algorithm": cfg.algorithm, "seed": seed, "setup": cfg.setup,
        "num_agents": cfg.num_agents, "num_channels": cfg.num_channels,
        "horizon": cfg.horizon, "hidden_size": cfg.hidden_size,
    }
    for key, expected in checks.items():
        if meta.get(key) != expected:
            raise CheckpointError(
                f"checkpoint {key}={meta.get(key)!r} does not match run config "
                f"{key}={expected!r}")


def find_latest_checkpoint(seed_dir: str | Path) -> tuple[Path, int]:
    candidates = []
    ckpt_dir = Path(seed_dir) / "checkpoints"
    if ckpt_dir.is_dir():
        for path in ckpt_dir.iterdir():
            match = _CKPT_RE.search(path.name)
            if match:
                candidates.append((int(match.group(1)), path))
    if not candidates:
        raise CheckpointError(f"no checkpoints found under {seed_dir}")
    iteration, path = max(candidates)
    return path, iteration


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path,
                   stop_after: int | None = None,
                   resume_from: str | Path | None = None, log=_print_flush) -> Path:
    """Train every seed, evaluating every eval_every iterations.

    stop_after halts (with a checkpoint) once that iteration completes;
    resume_from continues each seed from the latest checkpoint in the given
    run directory, carrying its earlier eval records over.
    """
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_to_text(cfg))
    log(f"run directory: {out.resolve()}")
    target = cfg.iterations if stop_after is None else min(stop_after, cfg.iterations)

    for seed in cfg.seeds:
        seed_dir = out / f"seed_{seed}"
        ckpt_dir = seed_dir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        log(f"seed {seed}: {seed_dir.resolve()}")

        trainer = build_trainer(cfg, seed)
        start_iter = 0
        carried: list[EvalRecord] = []
        if resume_from is not None:
            resume_seed_dir = Path(resume_from) / f"seed_{seed}"
            ckpt_path, ckpt_iter = find_latest_checkpoint(resume_seed_dir)
            meta, state = load_checkpoint(ckpt_path)
            _validate_meta(meta, cfg, seed)
            trainer.load_state_dict(state)
            start_iter = ckpt_iter
            old_evals = resume_seed_dir / "evals.csv"
            if old_evals.exists():
                carried = [r for r in read_eval_records(old_evals)
                           if r.iteration <= start_iter]
            log(f"seed {seed}: resumed from {ckpt_path} at iteration {start_iter}")

        evals_path = seed_dir / "evals.csv"
        with open(evals_path, "w") as fh:
            fh.write(EVAL_HEADER + "\n")
            for record in carried:
                fh.write(record.to_row() + "\n")

        t0 = time.perf_counter()

        def record_eval(iteration: int) -> EvalRecord:
            mean, sparsity = evaluate_trainer(cfg, trainer, seed, iteration)
            wall_ms = (time.perf_counter() - t0) * 1000.0
            record = EvalRecord(seed=seed, iteration=iteration, mean_reward=mean,
                                sparsity=sparsity, wall_ms=wall_ms)
            with open(evals_path, "a") as fh:
                fh.write(record.to_row() + "\n")
            log(f"seed {seed} iter {iteration}: reward {mean:.2f} "
                f"sparsity {sparsity:.3f}")
            return record

        if cfg.eval_at_start and start_iter == 0:
            record_eval(0)

        last_iter = start_iter
        for i in range(start_iter + 1, target + 1):
            trainer.run_iteration(i)
            last_iter = i
            if i % cfg.eval_every == 0:
                record_eval(i)
            if cfg.checkpoint_every and i % cfg.checkpoint_every == 0 and i < target:
                save_checkpoint(ckpt_dir / f"ckpt_{i:06d}.npz",
                                _checkpoint_meta(cfg, seed, i), trainer.state_dict())
        save_checkpoint(ckpt_dir / f"ckpt_{last_iter:06d}.npz",
                        _checkpoint_meta(cfg, seed, last_iter), trainer.state_dict())
    return out


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

_COMPAT_FIELDS = ("setup", "num_agents", "num_channels", "horizon", "iterations",
                  "eval_every", "eval_episodes", "snr_low", "snr_high", "pu_prob")


@dataclass
class RunData:
    label: str
    config: ExperimentConfig
    records: list[EvalRecord]


def load_run(run_dir: str | Path) -> RunData:
    run_dir = Path(run_dir)
    config_path = run_dir / "config.txt"
    if not config_path.exists():
        raise ConfigError(f"{run_dir} has no config.txt")
    cfg = load_config(config_path)
    records: list[EvalRecord] = []
    for seed in cfg.seeds:
        evals = run_dir / f"seed_{seed}" / "evals.csv"
        if not evals.exists():
            raise ConfigError(f"missing eval records for seed {seed} in {run_dir}")
        records.extend(read_eval_records(evals))
    return RunData(label=cfg.run_label(), config=cfg, records=records)


def aggregate(run_dirs: list[str | Path], out_dir: str | Path | None = None,
              log=_print_flush) -> dict:
    """Across-seed curves plus a best-seed summary table for each run.

    Runs must agree on the environment and evaluation protocol; methods may
    differ. Writes curves.csv, summary.csv and a training-curve figure when
    out_dir is given.
    """
    if not run_dirs:
        raise ConfigError("aggregate needs at least one run directory")
    runs = [load_run(d) for d in run_dirs]
    reference = runs[0].config
    for run in runs[1:]:
        for field_name in _COMPAT_FIELDS:
            if getattr(run.config, field_name) != getattr(reference, field_name):
                raise ConfigError(
                    f"run {run.label!r} has {field_name}="
                    f"{getattr(run.config, field_name)!r} but {runs[0].label!r} has "
                    f"{getattr(reference, field_name)!r}; refusing to aggregate")
    labels = [run.label for run in runs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate run labels: {labels}")

    curves: dict[str, dict] = {}
    summary: list[dict] = []
    for run in runs:
        by_iter: dict[int, list[EvalRecord]] = {}
        for record in run.records:
            by_iter.setdefault(record.iteration, []).append(record)
        iters = sorted(by_iter)
        mean = np.array([np.mean([r.mean_reward for r in by_iter[i]]) for i in iters])
        std = np.array([np.std([r.mean_reward for r in by_iter[i]]) for i in iters])
        sparsity = np.array([np.mean([r.sparsity for r in by_iter[i]]) for i in iters])
        curves[run.label] = {"iterations": np.array(iters), "mean": mean, "std": std,
                             "sparsity": sparsity}
        final = by_iter[iters[-1]]
        best = max(final, key=lambda r: r.mean_reward)
        summary.append({
            "label": run.label,
            "final_iteration": iters[-1],
            "best_seed": best.seed,
            "best_reward": best.mean_reward,
            "mean_reward": float(np.mean([r.mean_reward for r in final])),
            "std_reward": float(np.std([r.mean_reward for r in final])),
            "mean_sparsity": float(np.mean([r.sparsity for r in final])),
        })

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "curves.csv", "w") as fh:
            fh.write("label,iteration,mean_reward,std_reward,mean_sparsity\n")
            for label, data in curves.items():
                for i, m, s, sp in zip(data["iterations"], data["mean"], data["std"],
                                       data["sparsity"]):
                    fh.write(f"{label},{i},{m:.6g},{s:.6g},{sp:.6g}\n")
        with open(out / "summary.csv", "w") as fh:
            fh.write("label,final_iteration,best_seed,best_reward,mean_reward,"
                     "std_reward,mean_sparsity\n")
            for row in summary:
                fh.write(f"{row['label']},{row['final_iteration']},{row['best_seed']},"
                         f"{row['best_reward']:.6g},{row['mean_reward']:.6g},"
                         f"{row['std_reward']:.6g},{row['mean_sparsity']:.6g}\n")
        from .report import plot_training_curves

        figure = plot_training_curves(curves, out / "training_curves.png")
        log(f"wrote {out / 'curves.csv'}, {out / 'summary.csv'}, {figure}")
    return {"curves": curves, "summary": summary}


# ---------------------------------------------------------------------------
# Schedule export
# ---------------------------------------------------------------------------

def export_schedule_plotdata(schedules: dict[str, SparsitySchedule], i_max: int,
                             out_dir: str | Path, log=_print_flush) -> dict[str, np.ndarray]:
    """Dense (iteration, sparsity) table per scheduler, as CSV plus a figure."""
    if not schedules:
        raise ConfigError("no schedules given")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = {label: schedule_series(sched, i_max) for label, sched in schedules.items()}
    labels = list(table)
    with open(out / "schedule.csv", "w") as fh:
        fh.write("i," + ",".join(labels) + "\n")
        for i in range(i_max + 1):
            fh.write(f"{i}," + ",".join(f"{table[label][i]:.6g}" for label in labels) + "\n")
    from .report import plot_schedules

    figure = plot_schedules(table, out / "schedule.png")
    log(f"wrote {out / 'schedule.csv'}, {figure}")
    return table
