"""Command line front end: `selective-bench-figures render ...`."""

from __future__ import annotations

import argparse
import sys

from .render import FigureError, FigureSpec, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="selective-bench-figures")
    sub = parser.add_subparsers(dest="verb", required=True)
    rend = sub.add_parser("render", help="plot one harness CSV sweep")
    rend.add_argument("--csv", required=True, help="input CSV path(s), comma separated")
    rend.add_argument("--x", required=True, help="x-axis column name")
    rend.add_argument("--group", default="", help="series-grouping column names, comma separated")
    rend.add_argument("--overlay", action="append", default=[],
                      help="fit-and-draw curve template, e.g. 'c/log2(n)'; repeatable")
    rend.add_argument("--y", default="excess_risk", help="y-axis column name")
    rend.add_argument("--logx", action="store_true", help="log-scale the x axis (base 2)")
    rend.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)

    spec = FigureSpec(
        csv_paths=tuple(p for p in args.csv.split(",") if p),
        x=args.x,
        out=args.out,
        group=tuple(g for g in args.group.split(",") if g),
        overlays=tuple(args.overlay),
        y=args.y,
        logx=args.logx,
    )
    try:
        report = render(spec)
    except FigureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fits = "".join(f"; {expr}: c={c:.6g}" for expr, c in report.overlay_fits)
    print(f"wrote {report.out_path} ({report.points} points, {len(report.series)} series{fits})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
