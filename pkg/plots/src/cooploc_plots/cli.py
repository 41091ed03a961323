"""Command-line entry: render one figure from an artifact directory.

Exit codes: 0 on success, 2 on schema or input errors. On error no output
image is written (or left behind).
"""

from __future__ import annotations

import argparse
import os
import sys

from .figures import FIGURE_KINDS, render
from .readers import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cooploc-plots",
        description="Render cooploc CSV artifacts into figures.",
    )
    parser.add_argument("--figure", required=True, choices=FIGURE_KINDS)
    parser.add_argument(
        "--in", dest="in_dir", required=True, help="directory with CSV artifacts"
    )
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument(
        "--robot", type=int, default=0, help="robot id for the trajectory figure"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not os.path.isdir(args.in_dir):
        print(f"input directory not found: {args.in_dir}", file=sys.stderr)
        return 2
    try:
        render(args.figure, args.in_dir, args.out, robot=args.robot)
    except SchemaError as exc:
        # Never leave a partial image behind.
        if os.path.exists(args.out):
            os.remove(args.out)
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"input not found: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
