"""Command line: ``train``, ``matrix`` and ``check``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import checks
from .harness import (
    TrainingDiverged,
    config_from_mapping,
    expand_matrix,
    parse_config_text,
    run_experiment,
    run_matrix,
    summarize,
)

# RunConfig fields exposed as --kebab-case flags; values are parsed like config-file values.
TRAIN_FLAGS = (
    "env", "seed", "epochs", "episodes_per_epoch", "episodes_per_cycle", "updates_per_cycle", "batch_size",
    "ker_n", "ker_mode", "ker_planes", "ger_k", "ger_epsilons", "ger_combine", "relabel_prob",
    "buffer_capacity", "n_eval", "out", "checkpoint_dir",
)


def _train_parser(sub) -> None:
    p = sub.add_parser("train", help="train one agent and write its learning curve")
    p.add_argument("--config", help="key = value config file; flags override its values")
    for name in TRAIN_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None)
    p.add_argument("--no-wall-time", action="store_true", help="write 0 in wall_seconds (byte-stable CSVs)")


def cmd_train(args) -> int:
    raw = parse_config_text(Path(args.config).read_text()) if args.config else {}
    for name in TRAIN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            raw[name] = value
    if args.no_wall_time:
        raw["record_wall_time"] = "false"
    try:
        cfg = config_from_mapping(raw)
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        records = run_experiment(cfg)
    except (OSError, TrainingDiverged) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    last = records[-1]
    print(f"epoch {last.epoch}: success {last.success_rate:.2f} after {last.real_steps} real steps")
    return 0


def cmd_matrix(args) -> int:
    try:
        configs = expand_matrix(Path(args.spec).read_text())
    except ValueError as exc:
        print(f"invalid matrix: {exc}", file=sys.stderr)
        return 2
    results = run_matrix(configs, args.out_dir)
    sys.stdout.write(summarize(results))
    print((Path(args.out_dir) / "report.txt").read_text(), end="")
    return 0


def cmd_check(args) -> int:
    results = checks.run_all()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kaleido", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _train_parser(sub)
    m = sub.add_parser("matrix", help="run a grid of configs x seeds and summarize")
    m.add_argument("--spec", required=True, help="matrix file: key = value, '|' separates grid values")
    m.add_argument("--out-dir", required=True)
    sub.add_parser("check", help="run the randomized invariant suites")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    handler = {"train": cmd_train, "matrix": cmd_matrix, "check": cmd_check}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
