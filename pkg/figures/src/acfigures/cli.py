"""Command-line entry point: figures <kind> --in <csv> --out <png>."""

from __future__ import annotations

import argparse
import sys

from .plots import PLOTTERS, SchemaError, plot


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="figures",
                                     description="Render simulator CSV outputs as images")
    parser.add_argument("kind", choices=sorted(PLOTTERS))
    parser.add_argument("--in", dest="in_path", required=True, help="input CSV")
    parser.add_argument("--out", dest="out_path", required=True, help="output image (png)")
    args = parser.parse_args(argv)
    try:
        path = plot(args.kind, args.in_path, args.out_path)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
