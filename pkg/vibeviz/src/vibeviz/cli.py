"""Command-line entry point.

Exit codes: 0 all figures rendered, 2 usage error (argparse), 3 unusable
input (missing directory, missing file, or a header without a required
column).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .plots import VibevizError, render_all


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibeviz",
        description="Render tuning-run CSV exports (performance, context "
                    "tokens, budget) to figures.")
    parser.add_argument("exports",
                        help="directory holding performance.csv, "
                             "tokens.csv, and budget.csv")
    parser.add_argument("--out", required=True,
                        help="directory the images are written into")
    parser.add_argument("--invalid-as-zero", action="store_true",
                        help="plot invalidated candidates at zero instead "
                             "of omitting them")
    parser.add_argument("--format", choices=("png", "svg"), default="png",
                        help="image format (default: png)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    exports = Path(args.exports)
    if not exports.is_dir():
        print(f"error: {exports} is not a directory", file=sys.stderr)
        return 3
    try:
        results = render_all(exports, Path(args.out),
                             invalid_as_zero=args.invalid_as_zero,
                             fmt=args.format)
    except VibevizError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for result in results:
        print(f"wrote {result.path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
