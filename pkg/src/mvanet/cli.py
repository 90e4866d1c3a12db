"""Command-line entry point: ``mvanet <command> ...``."""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .errors import MVANetError


def _gen_data(args) -> None:
    from .data import generate_synthetic, save_dataset

    manifest = save_dataset(generate_synthetic(args.seed, args.count, args.size), args.out)
    print(f"wrote {args.count} samples to {manifest.parent}")


def _train(args) -> None:
    from .config import load_config
    from .training import train

    config = load_config(args.config)
    result = train(config, echo=print if args.verbose else None)
    print(f"steps={result.checkpoint.step} final_loss={result.losses[-1]:.6f} checkpoint={result.checkpoint_path}")


def _eval(args) -> None:
    from .training import evaluate

    report = evaluate(args.checkpoint, args.data, args.out)
    for k, v in report.as_dict().items():
        print(f"{k}={v}")


def _infer(args) -> None:
    from .training import infer

    infer(args.checkpoint, args.image, args.out, echo=print)


def _bench(args) -> None:
    from .bench import run_bench
    from .config import load_config

    run_bench(load_config(args.config), repeats=args.repeats, echo=print)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvanet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic thin-structure dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_gen_data)

    p = sub.add_parser("train", help="train from a config file")
    p.add_argument("--config", default=None, help="defaults to $MVANET_CONFIG")
    p.add_argument("--verbose", action="store_true", help="print every step")
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_eval)

    p = sub.add_parser("infer", help="predict one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_infer)

    p = sub.add_parser("bench", help="pooled vs full attention cost and throughput")
    p.add_argument("--config", default=None, help="defaults to $MVANET_CONFIG")
    p.add_argument("--repeats", type=int, default=20)
    p.set_defaults(func=_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except MVANetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0
