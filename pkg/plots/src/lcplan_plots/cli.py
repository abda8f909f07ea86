"""Command line for batch figure rendering.

Either pass one figure through flags, or a JSON spec file holding a list
of figure objects ({kind, inputs, output, log_scale, labels}). Schema
violations exit with status 2 and name the offending columns.
"""

from __future__ import annotations

import argparse
import json
import sys

from .render import FIGURE_KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcplan-plots", description="Render figures from lcplan CSV exports"
    )
    parser.add_argument("--spec", help="JSON file with a list of figure specs")
    parser.add_argument("--kind", choices=FIGURE_KINDS)
    parser.add_argument("--input", action="append", default=[], help="input CSV (repeatable)")
    parser.add_argument("--output", help="output image path (.png or .svg)")
    parser.add_argument("--label", action="append", default=[], help="series label (repeatable)")
    parser.add_argument(
        "--linear", action="store_true", help="linear instead of log value axis"
    )
    return parser


def specs_from_args(args) -> list[FigureSpec]:
    if args.spec:
        with open(args.spec) as fh:
            raw = json.load(fh)
        if not isinstance(raw, list):
            raise SchemaError("spec file must hold a list of figure objects")
        return [
            FigureSpec(
                kind=entry["kind"],
                inputs=list(entry["inputs"]),
                output=entry["output"],
                log_scale=bool(entry.get("log_scale", True)),
                labels=list(entry.get("labels", [])),
            )
            for entry in raw
        ]
    if not (args.kind and args.input and args.output):
        raise SchemaError("need --spec, or --kind with --input and --output")
    return [
        FigureSpec(
            kind=args.kind,
            inputs=args.input,
            output=args.output,
            log_scale=not args.linear,
            labels=args.label,
        )
    ]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        specs = specs_from_args(args)
        for spec in specs:
            path = render(spec)
            print(f"wrote {path}")
    except (SchemaError, KeyError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
