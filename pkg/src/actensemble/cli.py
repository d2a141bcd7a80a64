"""Command-line entry point: ``actensemble {train,eval,export-alpha,project-bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import config as config_mod
from .export import AlphaTrace, export_alpha
from .simplex import project, project_rows
from .train import evaluate, train, train_seeds


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def cmd_train(args) -> int:
    overrides = dict(args.set or [])
    for key in ("dataset", "spec", "mode"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.out is not None:
        overrides["out_dir"] = args.out
    seeds = args.seed or []
    if len(seeds) == 1:
        overrides["seed"] = str(seeds[0])
    cfg = config_mod.load(args.config, overrides)
    if len(seeds) > 1:
        result = train_seeds(cfg, seeds)
    else:
        result = train(cfg)
    print(json.dumps(result, indent=2))
    return 0


def cmd_eval(args) -> int:
    overrides = {}
    if args.dataset is not None:
        overrides["dataset"] = args.dataset
    if args.mnist_dir is not None:
        overrides["mnist_dir"] = args.mnist_dir
    if args.isolet_path is not None:
        overrides["isolet_path"] = args.isolet_path
    res = evaluate(args.checkpoint, split=args.split, **overrides)
    print(json.dumps({
        "split": args.split,
        "accuracy": res.accuracy,
        "loss": res.loss,
        "correct": res.correct,
        "total": int(res.confusion.sum()),
        "confusion": res.confusion.tolist(),
    }, indent=2))
    return 0


def cmd_export(args) -> int:
    if (args.trace is None) == (args.checkpoint is None):
        print("export-alpha: give exactly one of --trace or --checkpoint", file=sys.stderr)
        return 2
    try:
        trace = AlphaTrace.read(args.trace) if args.trace else AlphaTrace.from_checkpoint(args.checkpoint)
    except ValueError as exc:
        print(f"export-alpha: {exc}", file=sys.stderr)
        return 1
    units = [int(u) for u in args.units.split(",")] if args.units else None
    for path in export_alpha(trace, args.out, epoch=args.epoch, units=units, svg=args.svg):
        print(path)
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    print(f"{'m':>4} {'rows':>8} {'batched us/vec':>15} {'single us/vec':>14}")
    for m in range(args.m_min, args.m_max + 1):
        hat = rng.uniform(-2.0, 2.0, size=(args.rows, m))
        t0 = time.perf_counter()
        project_rows(hat)
        batched = (time.perf_counter() - t0) / args.rows * 1e6
        n_single = min(args.rows, 2000)
        t0 = time.perf_counter()
        for row in hat[:n_single]:
            project(row)
        single = (time.perf_counter() - t0) / n_single * 1e6
        print(f"{m:>4} {args.rows:>8} {batched:>15.3f} {single:>14.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actensemble", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, nargs="+",
                   help="one seed, or several to train once per seed and report the mean")
    p.add_argument("--dataset", choices=["mnist", "isolet"])
    p.add_argument("--spec", help='network description, e.g. "400f-400f-400f-10f"')
    p.add_argument("--mode", choices=["relu", "set1", "set2", "set3"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", type=_kv, action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", choices=["mnist", "isolet"])
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--mnist-dir")
    p.add_argument("--isolet-path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-alpha", help="export alpha traces, histograms and curves")
    p.add_argument("--trace", help="alpha_trace.csv written during training")
    p.add_argument("--checkpoint", help="ensemble checkpoint (final alphas only)")
    p.add_argument("--out", required=True)
    p.add_argument("--epoch", type=int, help="epoch for histograms/curves (default: last)")
    p.add_argument("--units", help="comma-separated unit indices for composite curves")
    p.add_argument("--svg", action="store_true", help="also render SVG figures")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("project-bench", help="time the simplex projection")
    p.add_argument("--m-min", type=int, default=2)
    p.add_argument("--m-max", type=int, default=64)
    p.add_argument("--rows", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (config_mod.ConfigError, FileNotFoundError) as exc:
        print(f"actensemble: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
