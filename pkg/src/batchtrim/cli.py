"""Command-line entry point.

Subcommands:
  train      one seeded trial, per-epoch metrics to <out>.csv
  compare    full trim-off vs trim-on experiment, two CSVs + comparison line
  gradcheck  finite-difference verification of the backward pass
  selftest   fast battery of the library's core invariants

Exit codes: 0 success, 1 config/validation error, 2 runtime error (including
a failed gradcheck or selftest).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import selftest as selftest_mod
from .autodiff import grad_check
from .errors import ConfigError, EngineError
from .harness import emit_csv, format_comparison, load_config, run_experiment, run_trial
from .model import init_params, mlp3, tinycnn
from .rng import Prng, derive_seed, randn


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; our contract says 1
    def error(self, message):
        raise _ArgumentError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="batchtrim", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training trial")
    train.add_argument("--config", required=True, help="JSON experiment config")
    train.add_argument("--seed", type=int, default=None,
                       help="override the config's first seed")
    train.add_argument("--out", default=None, help="override the config's output stem")

    compare = sub.add_parser("compare", help="run the trim-off vs trim-on experiment")
    compare.add_argument("--config", required=True, help="JSON experiment config")
    compare.add_argument("--out", default=None, help="override the config's output stem")

    gc = sub.add_parser("gradcheck", help="verify gradients against finite differences")
    gc.add_argument("--model", choices=["mlp3", "tinycnn", "both"], default="both")
    gc.add_argument("--seed", type=int, default=7)

    sub.add_parser("selftest", help="run the built-in property suites")
    return parser


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    result = run_trial(cfg, seed)
    stem = args.out if args.out is not None else cfg.out
    path = stem + ".csv"
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(emit_csv(result.rows))
    final = result.rows[-1]
    print(f"seed {seed}: final test error {100.0 * final.test_error:.2f}% "
          f"after {final.epoch} epochs -> {path}")
    return 0


def _cmd_compare(args) -> int:
    cfg = load_config(args.config)
    result = run_experiment(cfg, out=args.out)
    print(f"test error %, trimming disabled / enabled "
          f"({len(cfg.seeds)} seeds, {cfg.dataset.kind}/{cfg.model}):")
    print(format_comparison(result.cell))
    print(f"metrics: {result.csv_off}  {result.csv_on}")
    return 0


def _gradcheck_one(arch: str, seed: int) -> bool:
    prng = Prng(derive_seed(seed, 0))
    if arch == "mlp3":
        model = init_params(mlp3(20, 5), prng)
        x = randn(prng, [4, 20])
    else:
        model = init_params(tinycnn(5, in_channels=3, height=8, width=8), prng)
        x = randn(prng, [4, 3, 8, 8])
    labels = np.arange(4) % model.classes
    report = grad_check(model, x, labels, seed=derive_seed(seed, 1))
    print(f"{arch}: tolerance {report.tol:g}")
    for name, err in report.max_rel_err.items():
        print(f"  {name:<16s} max rel err {err:.3e}")
    print(f"  {'PASS' if report.passed else 'FAIL'} (worst {report.worst:.3e})")
    return report.passed


def _cmd_gradcheck(args) -> int:
    archs = ["mlp3", "tinycnn"] if args.model == "both" else [args.model]
    ok = all([_gradcheck_one(a, args.seed) for a in archs])
    return 0 if ok else 2


def _cmd_selftest(_args) -> int:
    return 0 if selftest_mod.run(print) else 2


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        return _cmd_selftest(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
