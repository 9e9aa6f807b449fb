"""Deterministic sample generation over the time/state/control domain."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ParameterError
from .ocp import Box, ControlProblem


def sobol_points(count: int, box: Box, skip: int = 1) -> np.ndarray:
    """First ``count`` unscrambled Sobol points in ``box``, after ``skip``.

    skip=1 drops the all-zeros first point of the sequence, which would sit
    on the box corner.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    if skip < 0:
        raise ParameterError("skip must be >= 0")
    sampler = qmc.Sobol(d=box.dim, scramble=False)
    if skip:
        sampler.fast_forward(skip)
    with warnings.catch_warnings():
        # non power-of-two counts trip scipy's balance warning; fine here
        warnings.simplefilter("ignore", UserWarning)
        unit = sampler.random(count)
    return qmc.scale(unit, box.lo, box.hi)


def uniform_grid(count: int, lo: float, hi: float) -> np.ndarray:
    """Endpoint-inclusive uniform grid."""
    if count < 1:
        raise ParameterError("count must be >= 1")
    return np.linspace(lo, hi, count)


@dataclass(frozen=True)
class SampleSet:
    """Cartesian product of time, state, and control factor points.

    Flattened t-major, then state, then control:
    index = (i_t * n_x + i_x) * n_u + i_u.
    """

    ts: np.ndarray       # (n,)
    xs: np.ndarray       # (n, d)
    us: np.ndarray       # (n, p)
    t_grid: np.ndarray   # (n_t,)
    x_points: np.ndarray  # (n_x, d)
    u_points: np.ndarray  # (n_u, p)

    @property
    def n(self) -> int:
        return self.ts.shape[0]

    @property
    def n_t(self) -> int:
        return self.t_grid.shape[0]

    @property
    def n_x(self) -> int:
        return self.x_points.shape[0]

    @property
    def n_u(self) -> int:
        return self.u_points.shape[0]


def build_sample_set(problem: ControlProblem, n_t: int, n_x: int, n_u: int,
                     skip: int = 1) -> SampleSet:
    """Time grid x Sobol states x control grid, flattened t-major.

    Times are an endpoint-inclusive grid on [0, T]; states are Sobol points
    in the state box; scalar controls use an endpoint-inclusive grid on the
    control box, higher-dimensional controls fall back to Sobol points.
    """
    if min(n_t, n_x, n_u) < 1:
        raise ParameterError("n_t, n_x, n_u must all be >= 1")
    t_grid = uniform_grid(n_t, 0.0, problem.T)
    x_points = sobol_points(n_x, problem.state_box, skip=skip)
    if problem.p == 1:
        u_points = uniform_grid(n_u, problem.control_box.lo[0],
                                problem.control_box.hi[0])[:, None]
    else:
        u_points = sobol_points(n_u, problem.control_box, skip=skip)
    ts = np.repeat(t_grid, n_x * n_u)
    xs = np.tile(np.repeat(x_points, n_u, axis=0), (n_t, 1))
    us = np.tile(u_points, (n_t * n_x, 1))
    return SampleSet(ts=ts, xs=xs, us=us, t_grid=t_grid,
                     x_points=x_points, u_points=u_points)
