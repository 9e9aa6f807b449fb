"""Command-line entry point: results CSV in, comparison figures out."""
import argparse

from .plots import METRICS, PlotJob, render_comparison


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-results",
        description="Render method-comparison figures from a benchmark "
                    "results CSV.")
    parser.add_argument("--csv", required=True,
                        help="results.csv written by the experiment sweep")
    parser.add_argument("--out", required=True,
                        help="output directory for the figures")
    parser.add_argument("--metric", choices=METRICS + ("both",),
                        default="both")
    parser.add_argument("--linear-y", action="store_true",
                        help="use a linear y axis (default: log)")
    parser.add_argument("--dpi", type=int, default=150)
    args = parser.parse_args(argv)
    job = PlotJob(csv_path=args.csv, out_dir=args.out, metric=args.metric,
                  log_y=not args.linear_y, dpi=args.dpi)
    for path in render_comparison(job):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
