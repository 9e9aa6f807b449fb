"""Accuracy metrics against the LQR ground truth.

Value handles are compared on a fixed time/state grid; policies by the mean
cost of closed-loop rollouts from a grid of initial states.  All handles
follow the batch convention handle(t, X) -> (B,) with X of shape (B, d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .errors import ParameterError
from .features import FeatureBasis
from .ocp import (ControlProblem, RiccatiSolution, _rollout_batch_costs,
                  rollout)
from .sampling import uniform_grid


def time_state_grid(problem: ControlProblem, n_t: int = 10,
                    n_side: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint-inclusive time grid and per-axis product grid of states."""
    ts = uniform_grid(n_t, 0.0, problem.T)
    return ts, state_grid(problem, n_side)


def state_grid(problem: ControlProblem, n_side: int = 10) -> np.ndarray:
    axes = [uniform_grid(n_side, problem.state_box.lo[k],
                         problem.state_box.hi[k])
            for k in range(problem.d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


def value_error(model, truth, ts: np.ndarray, X: np.ndarray) -> float:
    """Sum of squared value differences over the grid (not averaged)."""
    total = 0.0
    for t in ts:
        diff = np.asarray(model(t, X), dtype=float) \
            - np.asarray(truth(t, X), dtype=float)
        total += float(diff @ diff)
    return total


class _QuadraticCostGreedyPolicy:
    """u = clip(-1/2 R^{-1} B' grad V) for problems with LQR structure."""

    vectorized = True

    def __init__(self, problem: ControlProblem, model):
        self.gain = problem.lqr.gain_factor()
        self.box = problem.control_box
        self.model = model

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            u = -0.5 * self.gain @ self.model.grad_x(t, x)
        else:
            u = -0.5 * self.model.grad_x_rows(t, x) @ self.gain.T
        return self.box.clip(u)


class _ScanningGreedyPolicy:
    """Greedy in u by grid scan plus bounded refinement (scalar controls)."""

    vectorized = False

    def __init__(self, problem: ControlProblem, model, n_scan: int = 201):
        if problem.p != 1:
            raise ParameterError(
                "scanning greedy policy supports scalar controls only")
        self.problem = problem
        self.model = model
        self.grid = uniform_grid(n_scan, problem.control_box.lo[0],
                                 problem.control_box.hi[0])

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        grad = self.model.grad_x(t, x)
        prob = self.problem

        def qval(u):
            uu = np.array([u])
            return (prob.running_cost(t, x, uu)
                    + grad @ np.asarray(prob.dynamics(t, x, uu), dtype=float))

        vals = np.array([qval(u) for u in self.grid])
        k = int(np.argmin(vals))
        lo = self.grid[max(k - 1, 0)]
        hi = self.grid[min(k + 1, len(self.grid) - 1)]
        if hi > lo:
            res = minimize_scalar(qval, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10})
            if res.fun <= vals[k]:
                return np.array([res.x])
        return np.array([self.grid[k]])


def greedy_policy(problem: ControlProblem, model):
    """Policy minimizing the Hamiltonian integrand of ``model`` pointwise.

    Problems carrying LQR structure get the closed form (quadratic control
    cost, affine dynamics); anything else falls back to a control-grid scan.
    """
    if problem.lqr is not None:
        return _QuadraticCostGreedyPolicy(problem, model)
    return _ScanningGreedyPolicy(problem, model)


def policy_cost(problem: ControlProblem, policy, n_side: int = 10,
                n_steps: int = 1000) -> float:
    """Mean rollout cost from an endpoint-inclusive grid of initial states."""
    X0 = state_grid(problem, n_side)
    if problem.vectorized and getattr(policy, "vectorized", False):
        costs = _rollout_batch_costs(problem, policy, X0, n_steps)
        return float(np.mean(costs))
    total = 0.0
    for row in X0:
        total += rollout(problem, policy, row, n_steps).total_cost
    return total / X0.shape[0]


def project_truth(basis: FeatureBasis, truth, problem: ControlProblem,
                  ts: np.ndarray, X: np.ndarray,
                  ridge: float = 1e-10) -> np.ndarray:
    """Ridge projection of (truth - terminal cost) onto the feature span.

    The result is the best the basis could do on the evaluation grid; it
    bounds what any solver using the same features can reach.
    """
    blocks = []
    targets = []
    for t in ts:
        blocks.append(basis.psi_rows(np.full(X.shape[0], t), X))
        targets.append(np.asarray(truth(t, X), dtype=float)
                       - np.asarray(problem.terminal_cost(X), dtype=float))
    P = np.concatenate(blocks, axis=0)
    y = np.concatenate(targets)
    G = P.T @ P
    G[np.diag_indices_from(G)] += ridge
    return scipy.linalg.cho_solve(
        scipy.linalg.cho_factor(G, check_finite=False), P.T @ y,
        check_finite=False)


def lqr_sos_residual(problem: ControlProblem, riccati: RiccatiSolution,
                     t: float, x: np.ndarray, u: np.ndarray) -> float:
    """Hamiltonian of the exact value function minus its SoS factorization.

    Evaluates L + dV*/dt + grad V* . f - (u + K(t)x)'R(u + K(t)x) with
    dV*/dt taken from the Riccati right-hand side; algebraically zero, so
    the result measures only interpolation and roundoff error.
    """
    lqr = problem.lqr
    if lqr is None:
        raise ParameterError("problem has no LQR ground truth attached")
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    S = riccati.S_at(t)
    Sdot = riccati.S_dot_at(t)
    drift = lqr.A @ x + lqr.B @ u
    run = float(x @ lqr.Q @ x + u @ lqr.R @ u)
    ham = run + float(x @ Sdot @ x) + 2.0 * float((S @ x) @ drift)
    w = u + riccati.K_at(t) @ x
    return ham - float(w @ lqr.R @ w)


def lqr_sos_residuals(problem: ControlProblem, riccati: RiccatiSolution,
                      ts: np.ndarray, xs: np.ndarray,
                      us: np.ndarray) -> np.ndarray:
    return np.array([
        lqr_sos_residual(problem, riccati, t, x, u)
        for t, x, u in zip(ts, xs, us)])


def lqr_sos_residual_stationary(lqr, S: np.ndarray, x: np.ndarray,
                                u: np.ndarray) -> float:
    """Infinite-horizon variant: no dV/dt term, S from the algebraic
    equation; the residual equals x'(ARE residual)x."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    K = np.linalg.solve(lqr.R, lqr.B.T @ S)
    drift = lqr.A @ x + lqr.B @ u
    run = float(x @ lqr.Q @ x + u @ lqr.R @ u)
    w = u + K @ x
    return run + 2.0 * float((S @ x) @ drift) - float(w @ lqr.R @ w)


@dataclass(frozen=True)
class EvalReport:
    value_error: float
    policy_cost: float


def evaluate_model(problem: ControlProblem, model, truth, ts: np.ndarray,
                   X: np.ndarray, n_side: int = 10,
                   n_steps: int = 1000) -> EvalReport:
    ve = value_error(model, truth, ts, X)
    pc = policy_cost(problem, greedy_policy(problem, model),
                     n_side=n_side, n_steps=n_steps)
    return EvalReport(value_error=ve, policy_cost=pc)
