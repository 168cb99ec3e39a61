"""Script entry point: CSV paths in, one image out.

    plot-emitter results.csv --kind risk_curve --out figure.png
    plot-emitter sweep.csv --kind dim_sweep --filter r=2 --out sweep.png

Exits nonzero with a single diagnostic line on stderr when the input violates
the CSV contract or selects nothing.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, PlotSpec, render
from .reader import EmptySelectionError, SchemaError


def _parse_filters(items: list[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise SchemaError(f"filter must look like column=value: {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = int(raw)
        except ValueError:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot-emitter",
        description="Render figures from iclsim CSV result files.")
    parser.add_argument("inputs", nargs="+", help="input CSV path(s)")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title")
    parser.add_argument("--excess", action="store_true",
                        help="plot excess risk instead of raw risk")
    parser.add_argument("--filter", action="append", default=[],
                        metavar="COLUMN=VALUE",
                        help="keep only matching rows (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = PlotSpec(inputs=tuple(args.inputs), kind=args.kind,
                        out=args.out, title=args.title, excess=args.excess,
                        filters=_parse_filters(args.filter))
        render(spec)
    except (SchemaError, EmptySelectionError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
