"""Command-line entry point: acsim run|frontier|train|eval|curves."""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, apply_overrides, load_config
from . import harness

DEFAULT_TRACE_CONFIG = {
    "scenario_id": "trace",
    "arrivals": {"mean_interarrival": 2.0},
    "rewards": {"accept": [10.0], "block": [0.0], "drop": [-100.0]},
}


def _add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="scenario config (YAML)")
    p.add_argument("--seed", type=int, default=None, help="override the seed list")
    p.add_argument("--out", default=None, help="output directory (default ./out)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="dotted config override, repeatable")
    p.add_argument("--workers", type=int, default=1, help="parallel simulation workers")


def _out_dir(args) -> str:
    # ACSIM_OUT_DIR is the only environment override the harness honors.
    out = args.out or os.environ.get("ACSIM_OUT_DIR") or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _load(args) -> dict:
    raw = load_config(args.config)
    return apply_overrides(raw, args.overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="acsim",
                                     description="Admission-control network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured policy")
    _add_common(p_run)

    p_front = sub.add_parser("frontier", help="threshold sweep per load point")
    _add_common(p_front)

    p_train = sub.add_parser("train", help="train a QL/DQL policy")
    _add_common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_curves = sub.add_parser("curves", help="emit sampled curves as CSV")
    p_curves.add_argument("kind", choices=harness.CURVE_KINDS)
    _add_common(p_curves, config_required=False)

    args = parser.parse_args(argv)
    out = _out_dir(args)
    try:
        if args.command == "run":
            path = harness.cmd_run(_load(args), out, args.seed, args.workers)
        elif args.command == "frontier":
            path = harness.cmd_frontier(_load(args), out, args.workers)
        elif args.command == "train":
            path = harness.cmd_train(_load(args), out, args.seed)
        elif args.command == "eval":
            path = harness.cmd_eval(_load(args), args.checkpoint, out, args.seed,
                                    args.workers)
        else:
            raw = _load(args) if args.config else (
                dict(DEFAULT_TRACE_CONFIG) if args.kind == "trace" else None)
            path = harness.cmd_curves(args.kind, out, raw, args.seed or 1)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
