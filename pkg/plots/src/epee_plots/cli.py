"""Script interface: epee-plots --grid ... --curve ... --frontier ... --out dir."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .parsing import SchemaError
from .render import IMAGE_FORMATS, PlotJob, run_job


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epee-plots",
        description="Render heatmaps, per-layer curves, and frontier figures "
                    "from early-exit evaluation outputs")
    parser.add_argument("--grid", default=None, help="grid CSV path")
    parser.add_argument("--curve", default=None, help="budgeted-curve CSV path")
    parser.add_argument("--frontier", default=None,
                        help="frontier JSON path (requires --grid)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--format", default="png", choices=IMAGE_FORMATS)
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = PlotJob(
            grid_path=Path(args.grid) if args.grid else None,
            curve_path=Path(args.curve) if args.curve else None,
            frontier_path=Path(args.frontier) if args.frontier else None,
            out_dir=Path(args.out),
            image_format=args.format,
            dpi=args.dpi,
        )
        outputs = run_job(job)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
