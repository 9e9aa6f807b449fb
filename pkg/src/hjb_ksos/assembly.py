"""Assembly of the linear constraint data from a problem, basis, and samples.

Each sample (t, x, u) yields one inequality

    b_i + a_i . theta >= 0,

where b_i collects the terms independent of theta (running cost, terminal
part of the drift coupling, optional diffusion term) and a_i the feature
derivatives.  The objective direction c integrates the features against a
discrete initial measure, with constant offset C from the terminal cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, ParameterError
from .features import FeatureBasis
from .ocp import ControlProblem
from .sampling import SampleSet

OBJECTIVE_MODES = ("all_samples", "initial_points")


@dataclass(frozen=True)
class ConstraintSystem:
    """Constraint rows b + A theta >= 0 and objective data (c, C)."""

    A: np.ndarray  # (n, m)
    b: np.ndarray  # (n,)
    c: np.ndarray  # (m,)
    C: float
    eta: float
    objective_mode: str

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]


def _drift_rows(problem: ControlProblem, samples: SampleSet) -> np.ndarray:
    if problem.vectorized:
        return np.asarray(problem.dynamics(samples.ts, samples.xs,
                                           samples.us), dtype=float)
    return np.stack([
        np.asarray(problem.dynamics(t, x, u), dtype=float)
        for t, x, u in zip(samples.ts, samples.xs, samples.us)])


def _running_cost_rows(problem: ControlProblem,
                       samples: SampleSet) -> np.ndarray:
    if problem.vectorized:
        return np.asarray(problem.running_cost(samples.ts, samples.xs,
                                               samples.us), dtype=float)
    return np.array([
        problem.running_cost(t, x, u)
        for t, x, u in zip(samples.ts, samples.xs, samples.us)])


def _terminal_rows(problem: ControlProblem, xs: np.ndarray):
    if problem.vectorized:
        grad = np.asarray(problem.terminal_cost_grad(xs), dtype=float)
        lap = np.asarray(problem.terminal_cost_laplacian(xs), dtype=float)
        val = np.asarray(problem.terminal_cost(xs), dtype=float)
    else:
        grad = np.stack([np.asarray(problem.terminal_cost_grad(x), dtype=float)
                         for x in xs])
        lap = np.array([problem.terminal_cost_laplacian(x) for x in xs])
        val = np.array([problem.terminal_cost(x) for x in xs])
    return grad, lap, val


def assemble(problem: ControlProblem, basis: FeatureBasis,
             samples: SampleSet, eta: float = 0.0,
             objective_mode: str = "all_samples") -> ConstraintSystem:
    """Build the constraint matrix, offsets, and objective direction.

    ``eta`` adds the Laplacian terms that appear when the dynamics carry
    isotropic diffusion with intensity eta; eta = 0 is the deterministic
    case.  ``objective_mode`` selects the initial measure behind c and C:
    the empirical measure of all samples, or the state factor points at
    t = 0.
    """
    if samples.n < 1:
        raise ParameterError("cannot assemble with an empty sample set")
    if objective_mode not in OBJECTIVE_MODES:
        raise ParameterError(
            f"objective_mode must be one of {OBJECTIVE_MODES}")
    if eta < 0:
        raise ParameterError("eta must be >= 0")
    if basis.d != problem.d:
        raise AssemblyError("basis and problem disagree on state dimension")

    drift = _drift_rows(problem, samples)
    if drift.shape != (samples.n, problem.d):
        raise AssemblyError(
            f"dynamics rows have shape {drift.shape}, "
            f"expected {(samples.n, problem.d)}")
    run_cost = _running_cost_rows(problem, samples)
    m_grad, m_lap, m_val = _terminal_rows(problem, samples.xs)

    b = run_cost + np.einsum("nd,nd->n", m_grad, drift) + eta * m_lap

    kap = basis.kappa_rows(samples.ts)
    phi = basis.phi_rows(samples.xs)
    phi_jac = basis.phi_jac_rows(samples.xs)
    jac_f = np.einsum("nkd,nd->nk", phi_jac, drift)
    if eta:
        jac_f = jac_f + eta * basis.phi_lap_rows(samples.xs)
    kdt = basis.psi_dt_rows(samples.ts, samples.xs)
    A = (kap[:, :, None] * jac_f[:, None, :]).reshape(samples.n, basis.dim)
    A += kdt

    if objective_mode == "all_samples":
        c = basis.psi_rows(samples.ts, samples.xs).mean(axis=0)
        C = float(m_val.mean())
    else:
        x0 = samples.x_points
        zeros = np.zeros(x0.shape[0])
        c = basis.psi_rows(zeros, x0).mean(axis=0)
        _, _, val0 = _terminal_rows(problem, x0)
        C = float(val0.mean())

    for name, arr in (("A", A), ("b", b), ("c", c)):
        bad = ~np.isfinite(arr)
        if bad.any():
            idx = int(np.argwhere(bad)[0][0])
            raise AssemblyError(
                f"non-finite entries in {name} starting at row {idx}")
    return ConstraintSystem(A=A, b=b, c=c, C=C, eta=eta,
                            objective_mode=objective_mode)
