"""Render method-comparison figures from a benchmark results CSV.

The input contract is the results.csv schema written by the hjb-ksos
experiment CLI: one row per (method, sample density, hyperparameter
combination) with exactly the columns in REQUIRED_COLUMNS. This package
only reads that file; it never imports the solver.
"""
import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

REQUIRED_COLUMNS = ("method", "n_t", "n_x", "n_u", "n", "lambda",
                    "lambda_theta", "gamma", "epsilon", "eta", "value_error",
                    "policy_cost", "newton_iters", "final_decrement",
                    "solve_seconds", "status")

METRICS = ("value_error", "policy_cost")
BASELINE_METHOD = "projection"

_STR_COLUMNS = ("method", "status")
_INT_COLUMNS = ("n_t", "n_x", "n_u", "n", "newton_iters")
_METHOD_ORDER = ("lp", "guided", "kernel")
_METRIC_LABELS = {"value_error": "value error (sum of squares)",
                  "policy_cost": "mean rollout cost"}


class SchemaError(ValueError):
    """The CSV does not carry the expected result columns."""


class SchemaWarning(UserWarning):
    """Non-fatal oddity in a results CSV (rows skipped, extras ignored)."""


@dataclass(frozen=True)
class PlotJob:
    """One rendering request: which CSV, where, which metrics, what axes."""

    csv_path: str
    out_dir: str
    metric: str = "both"
    log_y: bool = True
    dpi: int = 150

    def metrics(self) -> tuple[str, ...]:
        if self.metric == "both":
            return METRICS
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS + ('both',)}, "
                             f"got {self.metric!r}")
        return (self.metric,)


def read_results(path) -> list[dict]:
    """Typed rows from a results CSV.

    The column check runs before any value parsing; extra columns are
    ignored with a warning so newer producers stay readable.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = tuple(reader.fieldnames or ())
        missing = [col for col in REQUIRED_COLUMNS if col not in names]
        if missing:
            raise SchemaError("results CSV is missing columns: "
                              + ", ".join(missing))
        extra = [col for col in names if col not in REQUIRED_COLUMNS]
        if extra:
            warnings.warn("ignoring unexpected columns: " + ", ".join(extra),
                          SchemaWarning, stacklevel=2)
        rows = []
        for raw in reader:
            row = {}
            for col in REQUIRED_COLUMNS:
                if col in _STR_COLUMNS:
                    row[col] = raw[col]
                elif col in _INT_COLUMNS:
                    row[col] = int(float(raw[col]))
                else:
                    row[col] = float(raw[col])
            rows.append(row)
    return rows


def usable_rows(rows: list[dict]) -> list[dict]:
    """Rows that can be plotted; warns once per kind of reject."""
    out = []
    failed = 0
    nonfinite = 0
    for row in rows:
        if row["status"] != "ok":
            failed += 1
        elif not all(math.isfinite(row[m]) for m in METRICS):
            nonfinite += 1
        else:
            out.append(row)
    if failed:
        warnings.warn(f"skipping {failed} rows with status != ok",
                      SchemaWarning, stacklevel=2)
    if nonfinite:
        warnings.warn(f"skipping {nonfinite} rows with non-finite metrics",
                      SchemaWarning, stacklevel=2)
    return out


def best_rows(rows: list[dict]) -> dict:
    """Best usable row per (method, n_x): smallest value_error, ties broken
    toward smaller (lambda, lambda_theta, gamma).

    Matches the selection rule documented for the results writer, so the
    curves show each method at its best hyperparameters per density.
    """
    cells: dict = {}
    for row in usable_rows(rows):
        key = (row["method"], row["n_x"])
        rank = (row["value_error"], row["lambda"], row["lambda_theta"],
                row["gamma"])
        if key not in cells or rank < cells[key][0]:
            cells[key] = (rank, row)
    return {key: row for key, (rank, row) in cells.items()}


def _curve_order(methods) -> list[str]:
    known = [m for m in _METHOD_ORDER if m in methods]
    rest = sorted(m for m in methods
                  if m not in _METHOD_ORDER and m != BASELINE_METHOD)
    return known + rest


def build_figure(best: dict, metric: str, log_y: bool = True):
    """Comparison figure for one metric from a best-row selection.

    One line per method over its sample counts; the projection rows become
    a dashed horizontal reference. The caller owns (and saves) the figure.
    """
    methods = {method for method, _ in best}
    curves = _curve_order(methods)
    if not curves and BASELINE_METHOD not in methods:
        raise SchemaError("no usable rows to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in curves:
        pts = sorted((p, best[(method, p)][metric])
                     for m, p in best if m == method)
        ax.plot([p for p, _ in pts], [v for _, v in pts], marker="o",
                label=method)
    if BASELINE_METHOD in methods:
        vals = [best[key][metric] for key in best
                if key[0] == BASELINE_METHOD]
        ax.axhline(sum(vals) / len(vals), linestyle="--", color="0.4",
                   label=BASELINE_METHOD)
    else:
        warnings.warn("no projection rows; baseline reference omitted",
                      SchemaWarning, stacklevel=2)
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("samples per axis (n_x = n_u)")
    ax.set_ylabel(_METRIC_LABELS[metric])
    ax.set_title(f"method comparison: {metric}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def render_comparison(job: PlotJob) -> list[Path]:
    """Write one comparison figure per requested metric; returns the paths.

    Output is a PNG per metric under job.out_dir. Rendering is
    deterministic: same CSV and job settings give byte-identical files.
    """
    rows = read_results(job.csv_path)
    best = best_rows(rows)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in job.metrics():
        fig = build_figure(best, metric, log_y=job.log_y)
        path = out_dir / f"comparison_{metric}.png"
        # the default Software tag is the only varying PNG metadata; pin it
        fig.savefig(path, dpi=job.dpi, metadata={"Software": None})
        plt.close(fig)
        written.append(path)
    return written
