"""Command-line entry point.

Exit codes: 0 on success, 2 for configuration problems (bad file, bad key,
failed validation), 1 for runtime failures.  Every command takes
``--config PATH`` (flat key=value file; omitted means all defaults),
``--out DIR`` for file outputs, and ``--seed N`` to override the config's
seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .experiments import (
    BenchConfig,
    GradcheckConfig,
    RecoveryConfig,
    SequenceTaskConfig,
    SweepConfig,
    run_benchmark,
    run_gradcheck,
    run_recovery,
    run_sequence_task,
    run_sweep,
)
from .io import ConfigError, parse_config

_COMMANDS = {
    "params": SweepConfig,
    "recover": RecoveryConfig,
    "sweep": SweepConfig,
    "bench": BenchConfig,
    "train": SequenceTaskConfig,
    "gradcheck": GradcheckConfig,
}


def _load_config(args):
    cls = _COMMANDS[args.command]
    if args.config is None:
        cfg = cls()
        validate = getattr(cfg, "validate", None)
        if validate is not None:
            validate()
    else:
        cfg = parse_config(args.config, cls)
    if args.seed is not None:
        if not any(f.name == "seed" for f in dataclasses.fields(cls)):
            raise ConfigError(f"command '{args.command}' takes no seed")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _cmd_params(cfg, out_dir):
    rows, notes = run_sweep(cfg, out_dir=out_dir)
    print(f"{'kind':<11} {'d':>3} {'rank':>5} {'blocks':>6} "
          f"{'input':>12} {'output':>12} {'params':>12}")
    for kind, d, rank, n, idims, jdims, params in rows:
        print(f"{kind:<11} {d!s:>3} {rank!s:>5} {n!s:>6} "
              f"{idims:>12} {jdims:>12} {params:>12}")
    for note in notes:
        print(f"note: {note}")
    return 0


def _cmd_recover(cfg, out_dir):
    report = run_recovery(cfg, out_dir=out_dir)
    for warning in report.warnings:
        print(f"warning: {warning}")
    print(f"params={report.param_count}")
    print(f"final_mse={report.final_mse!r}")
    print(f"rel_frobenius={report.rel_frobenius!r}")
    return 0


def _cmd_sweep(cfg, out_dir):
    rows, notes = run_sweep(cfg, out_dir=out_dir)
    print(f"wrote {len(rows)} rows" + (f" to {out_dir}" if out_dir else ""))
    for note in notes:
        print(f"note: {note}")
    return 0


def _cmd_bench(cfg, out_dir):
    rows, _, notes = run_benchmark(cfg, out_dir=out_dir)
    print(f"{'d':>3} {'rank':>5} {'blocks':>6} {'flops_reordered':>16} {'flops_naive':>12}")
    for d, rank, n, _, _, reordered, naive in rows:
        print(f"{d:>3} {rank:>5} {n:>6} {reordered:>16} {naive:>12}")
    for note in notes:
        print(f"note: {note}")
    return 0


def _cmd_train(cfg, out_dir):
    report = run_sequence_task(cfg, out_dir=out_dir)
    for warning in report.warnings:
        print(f"warning: {warning}")
    ratio = report.input_map_params / report.dense_input_map_params
    print(f"test_accuracy={report.final_accuracy!r}")
    print(f"input_map_params={report.input_map_params}")
    print(f"dense_input_map_params={report.dense_input_map_params}")
    print(f"input_map_compression={ratio!r}")
    return 0


def _cmd_gradcheck(cfg, out_dir):
    error = run_gradcheck(cfg)
    passed = error < cfg.threshold
    print(f"max_rel_error={error!r}")
    print(f"threshold={cfg.threshold!r}")
    print("gradcheck PASS" if passed else "gradcheck FAIL")
    return 0 if passed else 1


_RUNNERS = {
    "params": _cmd_params,
    "recover": _cmd_recover,
    "sweep": _cmd_sweep,
    "bench": _cmd_bench,
    "train": _cmd_train,
    "gradcheck": _cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockterm",
        description="Block-term decomposed layers: parameter tables and experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "params": "print the parameter-count table for a size/rank grid",
        "recover": "train a block-term layer to recover a ground-truth matrix",
        "sweep": "write the parameter-count sweep as CSV",
        "bench": "compare reordered vs naive multiply-add counts",
        "train": "train a recurrent cell on the synthetic sequence task",
        "gradcheck": "finite-difference check of analytic gradients",
    }
    for name, desc in descriptions.items():
        cmd = sub.add_parser(name, help=desc)
        cmd.add_argument("--config", type=Path, default=None,
                         help="flat key=value config file (default: all defaults)")
        cmd.add_argument("--out", type=Path, default=None,
                         help="directory for output files (created if missing)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config's seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return _RUNNERS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary: map to exit code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
