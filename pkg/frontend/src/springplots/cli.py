"""Command line front end for figure rendering.

Exit codes: 0 on success, 2 on bad inputs (schema mismatch, empty file,
unknown options).
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .render import COMPONENTS, FIGURE_KINDS, EmptyInputError, FigureSpec, SchemaError, render

EXIT_OK = 0
EXIT_INPUT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="springplots",
        description="Render phase-averaging CSV outputs into figures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    rp = sub.add_parser("render", help="render one figure from CSV inputs")
    rp.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    rp.add_argument("--in", dest="input", required=True, help="primary input CSV")
    rp.add_argument("--in2", dest="input2", default=None, help="overlay input CSV")
    rp.add_argument("--out", required=True, help="output image path")
    rp.add_argument("--component", choices=COMPONENTS, default="x")
    rp.add_argument(
        "--log-color",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="logarithmic color scale for heatmaps (default on)",
    )
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    inputs = [args.input] + ([args.input2] if args.input2 else [])
    spec = FigureSpec(
        kind=args.kind,
        inputs=inputs,
        output=args.out,
        component=args.component,
        log_color=args.log_color,
    )
    try:
        out = render(spec)
    except (SchemaError, EmptyInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
