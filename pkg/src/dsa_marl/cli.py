"""Command-line entry point.

Subcommands:
    train      run an experiment from a config file (plus flag overrides)
    eval       evaluate a saved checkpoint on fresh episodes
    aggregate  merge finished runs into curves/summary CSVs and a figure
    schedule   export sparsity-schedule plot data

The output root comes from --out, falling back to $DSA_MARL_OUT, then ./runs.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import ExperimentConfig, field_type, load_config, load_config_text
from .errors import CheckpointError, ConfigError, ContractError, StateError
from .evaluate import evaluate_agents
from .harness import (_validate_meta, aggregate, build_trainer, export_schedule_plotdata,
                      run_experiment, stream_rng)
from .pruning import SparsitySchedule


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {raw!r}")


def _parse_seeds(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.replace(" ", "").split(",") if part)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {raw!r}") from exc


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides (beat the config file)")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = field_type(f.name)
        if f.name == "seeds":
            group.add_argument(flag, type=_parse_seeds, default=None, dest=f.name,
                               metavar="S0,S1,...")
        elif kind is bool:
            group.add_argument(flag, type=_parse_bool, default=None, dest=f.name,
                               metavar="BOOL")
        else:
            group.add_argument(flag, type=kind, default=None, dest=f.name)


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    return overrides


def _output_root() -> Path:
    return Path(os.environ.get("DSA_MARL_OUT", "runs"))


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, _collect_overrides(args))
    out = Path(args.out) if args.out else _output_root() / cfg.run_label()
    if (out / "config.txt").exists() and not (args.force or args.resume):
        raise ConfigError(f"{out} already holds a run; pass --force to overwrite")
    if args.config:
        print(f"config file: {Path(args.config).resolve()}")
    print(f"output root: {out.resolve()}")
    run_experiment(cfg, out, stop_after=args.stop_after, resume_from=args.resume)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    meta, state = load_checkpoint(args.checkpoint)
    cfg = load_config_text(meta["config_text"])
    seed = int(meta["seed"])
    trainer = build_trainer(cfg, seed)
    _validate_meta(meta, cfg, seed)
    trainer.load_state_dict(state)
    rng = stream_rng(args.eval_seed, 4)
    mean, totals = evaluate_agents(cfg.env_config(), trainer.eval_agents(),
                                   args.episodes, rng)
    print(f"checkpoint: {Path(args.checkpoint).resolve()}")
    print(f"algorithm: {cfg.algorithm}  setup: {cfg.setup}  "
          f"trained iterations: {meta['iteration']}")
    print(f"episodes: {args.episodes}  mean episodic reward: {mean:.6g}  "
          f"std: {np.std(totals):.6g}")
    print(f"actor sparsity: {trainer.mean_actor_sparsity():.6g}")
    return 0


def _cmd_aggregate(args: argparse.Namespace) -> int:
    out = Path(args.out) if args.out else None
    result = aggregate(args.runs, out)
    header = f"{'method':<38}{'best seed':>10}{'best':>12}{'mean':>12}{'std':>10}{'sparsity':>10}"
    print(header)
    print("-" * len(header))
    for row in result["summary"]:
        print(f"{row['label']:<38}{row['best_seed']:>10}{row['best_reward']:>12.2f}"
              f"{row['mean_reward']:>12.2f}{row['std_reward']:>10.2f}"
              f"{row['mean_sparsity']:>10.3f}")
    return 0


def _parse_schedule_spec(spec: str, args: argparse.Namespace) -> tuple[str, SparsitySchedule]:
    kind, _, start = spec.partition("@")
    i_start = int(start) if start else args.i_start
    label = kind if not start else f"{kind}_start{start}"
    schedule = SparsitySchedule(kind=kind, p_final=args.p_final, i_total=args.i_total,
                                p_start=args.p_start, i_start=i_start)
    return label, schedule


def _cmd_schedule(args: argparse.Namespace) -> int:
    schedules = {}
    for spec in args.kinds.split(","):
        label, schedule = _parse_schedule_spec(spec.strip(), args)
        schedules[label] = schedule
    out = Path(args.out) if args.out else _output_root() / "schedules"
    print(f"output root: {out.resolve()}")
    export_schedule_plotdata(schedules, args.i_total, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsa-marl",
        description="Sparse multi-agent actor-critic experiments for dynamic spectrum access")
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="train a method from a config file")
    train_p.add_argument("--config", type=Path, default=None, help="flat key=value file")
    train_p.add_argument("--out", default=None, help="run directory")
    train_p.add_argument("--resume", default=None, metavar="RUN_DIR",
                         help="continue from the latest checkpoints of a previous run")
    train_p.add_argument("--stop-after", type=int, default=None, metavar="ITER",
                         help="checkpoint and stop after this iteration")
    train_p.add_argument("--force", action="store_true",
                         help="overwrite an existing run directory")
    _add_config_flags(train_p)
    train_p.set_defaults(func=_cmd_train)

    eval_p = sub.add_parser("eval", help="evaluate a checkpoint")
    eval_p.add_argument("--checkpoint", required=True)
    eval_p.add_argument("--episodes", type=int, default=100)
    eval_p.add_argument("--eval-seed", type=int, default=0)
    eval_p.set_defaults(func=_cmd_eval)

    agg_p = sub.add_parser("aggregate", help="summarize finished runs")
    agg_p.add_argument("runs", nargs="+", help="run directories")
    agg_p.add_argument("--out", default=None, help="where to write CSVs and the figure")
    agg_p.set_defaults(func=_cmd_aggregate)

    sched_p = sub.add_parser("schedule", help="export sparsity schedule plot data")
    sched_p.add_argument("--kinds", default="linear,polynomial,harmonic,polynomial@200",
                         help="comma list; kind@ISTART overrides the start iteration")
    sched_p.add_argument("--p-final", type=float, default=0.95)
    sched_p.add_argument("--p-start", type=float, default=0.0)
    sched_p.add_argument("--i-total", type=int, default=1000)
    sched_p.add_argument("--i-start", type=int, default=0)
    sched_p.add_argument("--out", default=None)
    sched_p.set_defaults(func=_cmd_schedule)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, ContractError, StateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
