"""Command line entry point: ``ldaucid run|ablate|check``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import backend
from .checks import run_all
from .config import parse_config
from .exceptions import LdaucidError
from .experiment import final_accuracies, run_ablation, run_experiment, task0_drop


def _load(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    records = run_experiment(cfg, resume=args.resume, plot=args.plot)
    if records:
        acc = final_accuracies(records)
        print(f"run {cfg.run_id} seed {cfg.seed}: {len(records)} records -> {cfg.output_dir}")
        print("final accuracy per domain: " + ", ".join(f"{d}={a:.3f}" for d, a in sorted(acc.items())))
        print(f"domain-0 drop: {task0_drop(records):+.3f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    rows = run_ablation(cfg)
    for r in rows:
        print(f"{r['run_id']}: final avg {r['final_avg_accuracy']:.3f}, domain-0 drop {r['task0_drop']:+.3f}")
    return 0


def cmd_check(args) -> int:
    print(f"kernel backend: {backend()}")
    return 0 if run_all() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldaucid", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (("run", cmd_run, "run one experiment"), ("ablate", cmd_ablate, "run the declared sweeps")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name == "run":
            p.add_argument("--resume", action="store_true", help="continue from the checkpoint in the output dir")
            p.add_argument("--plot", action="store_true", help="also render learning_curves.png")
        p.set_defaults(func=fn)
    p = sub.add_parser("check", help="run the oracle/property checks")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LdaucidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
