"""Command line: render every result figure from a run directory."""
from __future__ import annotations

import argparse
import sys

from .figures import SchemaError, render_all


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sybilplots",
        description="Render the result-figure set from a sybilsim run directory")
    parser.add_argument("run_dir", help="directory with the run CSVs")
    parser.add_argument("out_dir", help="directory to write images into")
    parser.add_argument("--noattack", help="attack-free run directory; adds "
                        "the overlay series to the movement figures and "
                        "sources the level-of-service figure")
    parser.add_argument("--baseline", help="baseline-agent run directory; adds "
                        "side-by-side panels to the episode and action figures")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        reports = render_all(args.run_dir, args.out_dir,
                             noattack_dir=args.noattack,
                             baseline_dir=args.baseline)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    for report in reports:
        print(f"{report.figure_id}: {report.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
