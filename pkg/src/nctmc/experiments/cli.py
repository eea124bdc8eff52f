"""Command line entry point: ``nctmc <verb> SPEC [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import NCTMCError
from .runner import VERBS, load_spec


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nctmc", description="Neural CTMC experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)
    helps = {
        "simulate": "generate training trajectories",
        "train": "fit the N-CTMC and configured baselines",
        "mle": "fit the counting MLE",
        "evaluate": "score saved models against the truth model",
        "export-scatter": "write predicted vs true rate tables",
        "control-demo": "edit a birth-death event log, refit and resimulate",
    }
    for verb in VERBS:
        p = sub.add_parser(verb, help=helps[verb])
        p.add_argument("spec", help="experiment spec (.json or .toml)")
        p.add_argument("--seed", type=int, default=None, help="override the spec's root seed")
        p.add_argument("--out", default=None, help="output directory (default runs/<name>)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = load_spec(args.spec, args.seed)
        out = Path(args.out) if args.out else Path("runs") / spec.name
        result = VERBS[args.verb](spec, out)
    except (NCTMCError, OSError, ValueError, KeyError) as exc:
        print(f"nctmc {args.verb}: error: {exc}", file=sys.stderr)
        return 1
    if args.verb == "simulate":
        result = {size: len(m["trajectories"]) for size, m in result.items()}
    print(json.dumps(_jsonable(result), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
