"""Command-line entry point.

Subcommands: pretrain, eval, baseline, f2, sweep, diagnose. Each run writes
into a run directory it owns exclusively (lock file) containing a resolved
config snapshot and the outputs: checkpoints (.bin), results (.csv), training
reports (.json). On failure the process exits nonzero after printing a single
machine-readable JSON error line to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import diagnostics, experiment
from .baselines import NnConfig, default_krr_config
from .config import (ConfigError, HarnessConfig, apply_overrides,
                     build_configs, load_config_file, snapshot_lines)
from .hermite import BasisIndex
from .model import load_params, save_params
from .streams import stream
from .tasks import sample_task
from .training import pretrain


class RunDirError(RuntimeError):
    pass


def _acquire_run_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
    lock = os.path.join(path, "lock")
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunDirError(f"run directory {path!r} is already owned "
                          "(lock file present)") from None
    with os.fdopen(fd, "w") as fh:
        fh.write(str(os.getpid()) + "\n")


def _load_values(args) -> dict:
    values = load_config_file(args.config) if args.config else {}
    return apply_overrides(values, args.set or [])


def _setup(args) -> tuple:
    values = _load_values(args)
    train, harness = build_configs(values, args.seed)
    _acquire_run_dir(args.out)
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(snapshot_lines(values, args.seed))
    return train, harness


def _grid(harness: HarnessConfig):
    return harness.n_grid or experiment.DEFAULT_N_GRID


def cmd_pretrain(args) -> int:
    train, _ = _setup(args)
    params, report = pretrain(train)
    save_params(params, os.path.join(args.out, "params.bin"))
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json_line() + "\n")
    print(os.path.join(args.out, "params.bin"))
    return 0


def cmd_eval(args) -> int:
    train, harness = _setup(args)
    params = load_params(args.checkpoint)
    curve = experiment.risk_curve(
        experiment.transformer_predictor(params), "transformer", train,
        params.m, _grid(harness), harness.n_tasks, harness.queries_per_task,
        args.seed)
    out = os.path.join(args.out, "risk.csv")
    experiment.write_csv([curve], out)
    print(out)
    return 0


def cmd_baseline(args) -> int:
    train, harness = _setup(args)
    if args.method == "krr":
        krr = harness.krr or default_krr_config(train.problem.d)
        predictor = experiment.krr_predictor(krr)
        width = 0
    else:
        nn = harness.nn or NnConfig(width=train.m, optimizer="one_step_gd")
        if args.method == "nn_adam":
            nn = replace(nn, optimizer="adam")
        elif args.method == "nn_one_step":
            nn = replace(nn, optimizer="one_step_gd")
        predictor = experiment.nn_predictor(nn, args.seed)
        width = nn.width
    curve = experiment.risk_curve(predictor, args.method, train, width,
                              _grid(harness), harness.n_tasks,
                              harness.queries_per_task, args.seed)
    out = os.path.join(args.out, "risk.csv")
    experiment.write_csv([curve], out)
    print(out)
    return 0


def cmd_f2(args) -> int:
    train, harness = _setup(args)
    curves, params, report = experiment.run_f2_comparison(
        train, N_grid=_grid(harness), n_tasks=harness.n_tasks,
        queries_per_task=harness.queries_per_task,
        krr_cfg=harness.krr, nn_cfg=harness.nn)
    save_params(params, os.path.join(args.out, "params.bin"))
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json_line() + "\n")
    out = os.path.join(args.out, "f2.csv")
    experiment.write_csv(curves, out)
    print(out)
    return 0


def cmd_sweep(args) -> int:
    train, harness = _setup(args)
    curves = experiment.run_dimension_sweep(
        train, d_list=args.d_list, r_list=args.r_list,
        N_grid=_grid(harness), n_tasks=harness.n_tasks,
        queries_per_task=harness.queries_per_task)
    out = os.path.join(args.out, "sweep.csv")
    experiment.write_csv(curves, out)
    print(out)
    return 0


def cmd_diagnose(args) -> int:
    train, _ = _setup(args)
    if args.name == "alignment":
        if not args.checkpoint:
            raise ConfigError("diagnose alignment needs --checkpoint")
        params = load_params(args.checkpoint)
        report = diagnostics.alignment_report(params, train.problem)
        out = os.path.join(args.out, "alignment.csv")
        report.to_csv(out)
    elif args.name == "concentration":
        task = sample_task(train.problem, stream(args.seed, "task", 0))
        p = BasisIndex((train.problem.Q,) + (0,) * (train.problem.r - 1))
        table = diagnostics.correlation_concentration(
            task, p, train.problem, N_grid=[2**k for k in range(6, 15)],
            reps=args.reps, seed=args.seed)
        out = os.path.join(args.out, "concentration.csv")
        table.to_csv(out)
    else:
        raise ConfigError(f"unknown diagnostic {args.name!r}")
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iclsim",
        description="Pretrain and evaluate the MLP + linear-attention "
                    "in-context learner on Hermite single-index tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_seed=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, required=needs_seed)
        p.add_argument("--out", required=True, help="run directory")

    common(sub.add_parser("pretrain", help="two-stage pretraining"))
    p = sub.add_parser("eval", help="evaluate a checkpoint's ICL risk")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p = sub.add_parser("baseline", help="evaluate a prompt-only baseline")
    common(p)
    p.add_argument("--method", required=True,
                   choices=["krr", "nn_adam", "nn_one_step"])
    common(sub.add_parser("f2", help="transformer vs baselines comparison"))
    p = sub.add_parser("sweep", help="risk curves across (d, r)")
    common(p)
    p.add_argument("--d-list", type=int, nargs="+", required=True)
    p.add_argument("--r-list", type=int, nargs="+", required=True)
    p = sub.add_parser("diagnose", help="emit a diagnostic CSV")
    common(p)
    p.add_argument("name", choices=["alignment", "concentration"])
    p.add_argument("--checkpoint")
    p.add_argument("--reps", type=int, default=200)
    return parser


_COMMANDS = {"pretrain": cmd_pretrain, "eval": cmd_eval,
             "baseline": cmd_baseline, "f2": cmd_f2, "sweep": cmd_sweep,
             "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, RunDirError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
