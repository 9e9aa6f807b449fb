"""Acceptance gate: a real sweep CSV renders cleanly and deterministically.

The fixture under data/ is an unedited results.csv from the default
benchmark sweep of the solver package (the external contract this package
consumes).
"""
import warnings
from pathlib import Path

import matplotlib.pyplot as plt

from hjb_plots import PlotJob, best_rows, build_figure, read_results, \
    render_comparison

SWEEP_CSV = Path(__file__).parent / "data" / "results_sweep.csv"


def test_sweep_csv_renders_both_figures_cleanly_and_deterministically(
        tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("error")

        job = PlotJob(csv_path=str(SWEEP_CSV), out_dir=str(tmp_path / "a"))
        written = render_comparison(job)
        assert [p.name for p in written] == ["comparison_value_error.png",
                                             "comparison_policy_cost.png"]

        best = best_rows(read_results(SWEEP_CSV))
        for metric in ("value_error", "policy_cost"):
            fig = build_figure(best, metric)
            labels = [line.get_label() for line in fig.axes[0].lines]
            assert labels == ["lp", "guided", "kernel", "projection"]
            assert fig.axes[0].lines[-1].get_linestyle() == "--"
            plt.close(fig)

        again = render_comparison(
            PlotJob(csv_path=str(SWEEP_CSV), out_dir=str(tmp_path / "b")))
    for first, second in zip(written, again):
        assert first.read_bytes() == second.read_bytes()
