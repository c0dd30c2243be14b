"""Command line entry point: ``genlab run | plot | verify``.

Exit codes: 0 success, 1 a sweep cell failed or an output could not be
written, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .plots import PLOT_KINDS, PlotError, write_svg_plot


def _run(args) -> int:
    from .runner import run_sweep, write_csv, write_json, write_timings

    try:
        spec = parse_config(args.config)
    except ConfigError as exc:
        print(f"genlab: config error: {exc}", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("genlab: --workers must be >= 1", file=sys.stderr)
        return 2
    out = Path(args.out or spec.out_dir)
    try:
        outcome = run_sweep(spec, out, workers=args.workers)
        write_csv(outcome.rows, out / "results.csv")
        write_json(outcome.rows, out / "results.json")
        write_timings(outcome.wall_times, out / "timings.csv")
        for kind in PLOT_KINDS:
            write_svg_plot(outcome.rows, kind, out / f"{kind}.svg")
    except OSError as exc:
        print(f"genlab: {exc}", file=sys.stderr)
        return 1
    for (w, s), err in sorted(outcome.failures.items()):
        print(f"genlab: cell width={w} seed={s} failed: {err.splitlines()[0]}", file=sys.stderr)
    print(f"wrote {len(outcome.rows)} rows to {out / 'results.csv'}")
    return 1 if outcome.failures else 0


def _plot(args) -> int:
    from .runner import read_csv

    try:
        rows = read_csv(args.rows)
    except (OSError, ValueError) as exc:
        print(f"genlab: cannot read rows: {exc}", file=sys.stderr)
        return 2
    try:
        write_svg_plot(rows, args.kind, args.out)
    except PlotError as exc:
        print(f"genlab: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"genlab: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    return 0


def _verify(args) -> int:
    from .verify import main

    return main()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genlab", description="Desk-scale Wasserstein GAN capacity sweeps.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a capacity sweep")
    run.add_argument("--config", required=True, help="JSON sweep config")
    run.add_argument("--workers", type=int, default=1, help="parallel sweep cells (default 1)")
    run.add_argument("--out", help="output directory (overrides out_dir in the config)")
    run.set_defaults(func=_run)

    plot = sub.add_parser("plot", help="render an SVG from a results CSV")
    plot.add_argument("--rows", required=True)
    plot.add_argument("--kind", required=True, choices=PLOT_KINDS)
    plot.add_argument("--out", required=True)
    plot.set_defaults(func=_plot)

    verify = sub.add_parser("verify", help="run the built-in oracle checks")
    verify.set_defaults(func=_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
