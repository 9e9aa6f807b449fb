"""Comparison figures from benchmark sweep results.csv files."""

from .plots import (BASELINE_METHOD, METRICS, REQUIRED_COLUMNS, PlotJob,
                    SchemaError, SchemaWarning, best_rows, build_figure,
                    read_results, render_comparison, usable_rows)

__version__ = "0.1.0"
