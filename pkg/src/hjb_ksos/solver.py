"""Solvers for the subsampled value-function programs.

Two routes to a maximal subsolution:

* ``solve_lp``: drop the sum-of-squares term and solve the regularized
  linear program with squared-hinge slacks by Newton's method in theta.
* ``solve_sos``: the full program with a PSD Hamiltonian model; solved
  through its smooth log-barrier dual in the constraint multipliers alpha
  by damped Newton steps, with a homotopy that shrinks the barrier weight
  epsilon toward the requested target.

The dual objective being minimized is

    F(alpha) = alpha.b + |c + A'alpha|^2 / (4 lam_theta)
               + |alpha|^2 / (4 gamma) - epsilon logdet U(alpha)
               + epsilon q (log(epsilon) - 1) + C,
    U(alpha) = lam I_q + Phi' Diag(alpha) Phi,

whose minimizer recovers theta* = (c + A'alpha*)/(2 lam_theta), the PSD
model B* = epsilon U(alpha*)^{-1}, and slacks delta* = -alpha*/(2 gamma).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .assembly import ConstraintSystem
from .errors import (ConvergenceError, FactorizationError, NumericalError,
                     ParameterError)
from .features import kappa


@dataclass(frozen=True)
class SolverConfig:
    """Weights and iteration limits shared by the LP and SoS solvers.

    lam        PSD shift weight in U(alpha) (SoS only)
    lam_theta  ridge weight on theta
    gamma      slack penalty weight
    epsilon    barrier weight (SoS only)

    n_stages is the minimum homotopy length; when the cold start's Newton
    decrement at the first stage exceeds dec_cap, solve_sos prepends up to
    max_extra_stages easier stages (same stage_factor spacing) so every
    stage starts inside its fast-convergence region.
    """

    lam: float = 1e-3
    lam_theta: float = 1e-4
    gamma: float = 1e4
    epsilon: float = 1e-4
    newton_tol: float = 1e-8
    max_newton_iters: int = 500
    n_stages: int = 3
    stage_factor: float = 10.0
    dec_cap: float = 64.0
    max_extra_stages: int = 8
    alpha0: float = 1.0
    recover_sos_matrix: bool = True
    lp_tol: float = 1e-8
    # halvings allowed per Newton step when a trial raises F
    max_backtracks: int = 30

    def __post_init__(self):
        for name in ("lam", "lam_theta", "gamma", "epsilon", "newton_tol",
                     "lp_tol", "alpha0", "dec_cap"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if self.max_newton_iters < 1 or self.max_backtracks < 1:
            raise ParameterError("iteration limits must be >= 1")
        if self.n_stages < 1:
            raise ParameterError("n_stages must be >= 1")
        if self.stage_factor <= 1:
            raise ParameterError("stage_factor must be > 1")
        if self.max_extra_stages < 0:
            raise ParameterError("max_extra_stages must be >= 0")


def homotopy_stages(cfg: SolverConfig) -> list[SolverConfig]:
    """Configs with epsilon scaled by factor^(n-1-k), ending exactly at the
    requested target.

    Only the barrier weight moves along the ladder.  The other weights stay
    at their targets throughout: rescaling lam_theta between stages shifts
    each stage's minimizer by an amount that does not shrink with epsilon,
    and chasing that shift drags iterates far off the central path.
    """
    out = []
    for k in range(cfg.n_stages):
        s = cfg.stage_factor ** (cfg.n_stages - 1 - k)
        out.append(replace(cfg, epsilon=cfg.epsilon * s))
    return out


@dataclass(frozen=True)
class DualState:
    """Damped-Newton endpoint: iterate, objective, gradient, decrement."""

    alpha: np.ndarray
    value: float
    gradient: np.ndarray
    decrement: float
    iterations: int
    objective_history: np.ndarray


@dataclass(frozen=True)
class Solution:
    """Recovered primal data.

    ``sos_matrix`` is the PSD Hamiltonian model (None for LP solutions or
    when recovery of the full matrix was turned off); ``delta`` the slack
    values; ``info`` carries solver diagnostics.
    """

    theta: np.ndarray
    sos_matrix: Optional[np.ndarray]
    alpha: Optional[np.ndarray]
    delta: np.ndarray
    info: dict


def _check_shapes(cs: ConstraintSystem, Phi: np.ndarray) -> None:
    Phi = np.asarray(Phi)
    if Phi.ndim != 2 or Phi.shape[0] != cs.n:
        raise ParameterError(
            f"Phi must have one row per constraint, got {Phi.shape} "
            f"for n={cs.n}")


# reference implementations, kept deliberately direct; the workspace below
# reproduces them with cheaper linear algebra

def _factor_U(cs: ConstraintSystem, Phi: np.ndarray, cfg: SolverConfig,
              alpha: np.ndarray):
    U = cfg.lam * np.eye(Phi.shape[1]) + Phi.T @ (alpha[:, None] * Phi)
    try:
        L = scipy.linalg.cholesky(U, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        raise FactorizationError(
            "U(alpha) is not positive definite at this alpha") from None
    return L


def dual_objective(cs: ConstraintSystem, Phi: np.ndarray, cfg: SolverConfig,
                   alpha: np.ndarray) -> float:
    _check_shapes(cs, Phi)
    L = _factor_U(cs, Phi, cfg, alpha)
    logdet = 2.0 * float(np.log(np.diag(L)).sum())
    resid = cs.c + cs.A.T @ alpha
    q = Phi.shape[1]
    return float(alpha @ cs.b + resid @ resid / (4.0 * cfg.lam_theta)
                 + alpha @ alpha / (4.0 * cfg.gamma)
                 - cfg.epsilon * logdet
                 + cfg.epsilon * q * (np.log(cfg.epsilon) - 1.0) + cs.C)


def dual_gradient(cs: ConstraintSystem, Phi: np.ndarray, cfg: SolverConfig,
                  alpha: np.ndarray) -> np.ndarray:
    _check_shapes(cs, Phi)
    L = _factor_U(cs, Phi, cfg, alpha)
    X = scipy.linalg.solve_triangular(L, Phi.T, lower=True,
                                      check_finite=False)
    w = np.einsum("ij,ij->j", X, X)
    resid = cs.c + cs.A.T @ alpha
    return (cs.b + cs.A @ resid / (2.0 * cfg.lam_theta)
            + alpha / (2.0 * cfg.gamma) - cfg.epsilon * w)


def dual_hessian(cs: ConstraintSystem, Phi: np.ndarray, cfg: SolverConfig,
                 alpha: np.ndarray) -> np.ndarray:
    _check_shapes(cs, Phi)
    L = _factor_U(cs, Phi, cfg, alpha)
    X = scipy.linalg.solve_triangular(L, Phi.T, lower=True,
                                      check_finite=False)
    W = X.T @ X
    H = cfg.epsilon * W * W + cs.A @ cs.A.T / (2.0 * cfg.lam_theta)
    H[np.diag_indices_from(H)] += 1.0 / (2.0 * cfg.gamma)
    return H


def _chol_inverse_upper(R: np.ndarray) -> np.ndarray:
    """Full symmetric inverse from an upper Cholesky factor."""
    inv, info = lapack.dpotri(R, lower=0)
    if info != 0:
        raise FactorizationError(f"dpotri failed with info={info}")
    return inv + np.triu(inv, 1).T


# Square instances below this size solve through the dense strategy even
# though the inverse-Gram shortcut applies: inverting the Gram matrix costs
# a fixed precision hit of order cond(Gram) * macheps in the gradient, which
# only pays for itself once the n^3 savings dominate.
_INVERSE_GRAM_MIN_N = 1536


class _DualWorkspace:
    """Per-instance state for evaluating F, its gradient, and Newton steps.

    Picks one of three exact strategies up front:

    * ``inverse_gram`` for large square Phi with invertible Phi Phi' (the
      kernel case, Phi = R'): works with W = (lam (Phi Phi')^{-1} +
      Diag(alpha))^{-1} = Phi U^{-1} Phi' directly, avoiding q x q solves.
    * ``dense`` otherwise, factoring U(alpha) each iterate; the Newton step
      additionally uses a Woodbury solve when m + q^2 is small next to n.
    """

    def __init__(self, cs: ConstraintSystem, Phi: np.ndarray, lam: float):
        _check_shapes(cs, Phi)
        self.cs = cs
        self.Phi = np.asarray(Phi, dtype=float)
        self.lam = lam
        self.n, self.m = cs.A.shape
        self.q = self.Phi.shape[1]
        # c + A'alpha cancels down to O(lam_theta) near the optimum and is
        # then divided by lam_theta, so accumulate it beyond double precision
        self.A_ld = cs.A.astype(np.longdouble)
        self.At_ld = np.ascontiguousarray(self.A_ld.T)
        self.c_ld = cs.c.astype(np.longdouble)
        self.strategy = "dense"
        if self.q == self.n and self.n >= _INVERSE_GRAM_MIN_N:
            gram = self.Phi @ self.Phi.T
            gram = 0.5 * (gram + gram.T)
            try:
                R = scipy.linalg.cholesky(gram, lower=False,
                                          check_finite=False)
            except scipy.linalg.LinAlgError:
                R = None
            if R is not None:
                self.logdet_gram = 2.0 * float(np.log(np.diag(R)).sum())
                self.P = lam * _chol_inverse_upper(R)
                self.strategy = "inverse_gram"
        self.woodbury = (self.strategy == "dense"
                         and (self.m + self.q * self.q) * 2 <= self.n)

    def max_feasible_step(self, alpha: np.ndarray, d: np.ndarray) -> float:
        """Largest s keeping U(alpha + s d) positive definite.

        Reduces to a q x q eigenvalue problem through the Cholesky factor
        of U(alpha).  The inverse-gram strategy never forms U and returns
        inf; there the line search discovers the boundary by trial
        factorization instead.
        """
        if self.strategy == "inverse_gram":
            return np.inf
        U = self.lam * np.eye(self.q) + self.Phi.T @ (alpha[:, None]
                                                      * self.Phi)
        try:
            L = scipy.linalg.cholesky(U, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            return 0.0
        E = self.Phi.T @ (d[:, None] * self.Phi)
        Z = scipy.linalg.solve_triangular(L, E, lower=True, check_finite=False)
        M = scipy.linalg.solve_triangular(L, Z.T, lower=True,
                                          check_finite=False)
        lo = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
        return np.inf if lo >= 0.0 else -1.0 / lo

    def evaluate(self, alpha: np.ndarray, cfg: SolverConfig):
        """Return (F, gradient, newton_solve, diag_w) at alpha.

        ``newton_solve(v)`` applies the inverse Hessian; ``diag_w`` holds
        Phi_i' U^{-1} Phi_i, needed for primal recovery.
        """
        cs, A, b = self.cs, self.cs.A, self.cs.b
        scaled = self.At_ld @ alpha.astype(np.longdouble) + self.c_ld
        scaled /= 2.0 * np.longdouble(cfg.lam_theta)
        ridge_part = np.asarray(self.A_ld @ scaled, dtype=float)
        lin = float(alpha @ b
                    + float(scaled @ scaled) * cfg.lam_theta
                    + alpha @ alpha / (4.0 * cfg.gamma)
                    + cfg.epsilon * self.q * (np.log(cfg.epsilon) - 1.0)
                    + cs.C)
        if self.strategy == "inverse_gram":
            G = self.P + np.diag(alpha)
            try:
                Rg = scipy.linalg.cholesky(G, lower=False, check_finite=False,
                                           overwrite_a=True)
            except scipy.linalg.LinAlgError:
                raise NumericalError(
                    "barrier Hessian factor left the PD cone; "
                    "iterate infeasible") from None
            logdet = self.logdet_gram + 2.0 * float(np.log(np.diag(Rg)).sum())
            W = _chol_inverse_upper(Rg)
            diag_w = np.ascontiguousarray(np.diag(W))
            F = lin - cfg.epsilon * logdet
            g = (b + ridge_part
                 + alpha / (2.0 * cfg.gamma) - cfg.epsilon * diag_w)
            # Hessian assembled in the W buffer: eps W@W elementwise, plus
            # the low-rank A part and the slack diagonal
            W *= W
            W *= cfg.epsilon
            W += (A / (2.0 * cfg.lam_theta)) @ A.T
            W[np.diag_indices_from(W)] += 1.0 / (2.0 * cfg.gamma)
            try:
                Rh = scipy.linalg.cholesky(W, lower=False, check_finite=False,
                                           overwrite_a=True)
            except scipy.linalg.LinAlgError:
                raise NumericalError("dual Hessian factorization failed") \
                    from None

            def solve(v, Rh=Rh):
                y = scipy.linalg.solve_triangular(Rh, v, trans=1, lower=False,
                                                  check_finite=False)
                return scipy.linalg.solve_triangular(Rh, y, lower=False,
                                                     check_finite=False)
            return F, g, solve, diag_w

        L = _factor_U(cs, self.Phi, replace(cfg, lam=self.lam), alpha)
        logdet = 2.0 * float(np.log(np.diag(L)).sum())
        X = scipy.linalg.solve_triangular(L, self.Phi.T, lower=True,
                                          check_finite=False)
        diag_w = np.einsum("ij,ij->j", X, X)
        F = lin - cfg.epsilon * logdet
        g = (b + ridge_part
             + alpha / (2.0 * cfg.gamma) - cfg.epsilon * diag_w)
        if self.woodbury:
            # H = sigma I + Gl Gl' with sigma = 1/(2 gamma) and
            # Gl = [A/sqrt(2 lam_theta), sqrt(eps) Z'], Z the column-wise
            # self-Khatri-Rao of X (so Z'Z = W o W elementwise)
            Z = (X[:, None, :] * X[None, :, :]).reshape(self.q * self.q,
                                                        self.n)
            Gl = np.concatenate(
                [A / np.sqrt(2.0 * cfg.lam_theta),
                 np.sqrt(cfg.epsilon) * Z.T], axis=1)
            sigma = 1.0 / (2.0 * cfg.gamma)
            small = Gl.T @ Gl
            small[np.diag_indices_from(small)] += sigma
            try:
                cho = scipy.linalg.cho_factor(small, check_finite=False)
            except scipy.linalg.LinAlgError:
                raise NumericalError("dual Hessian factorization failed") \
                    from None

            def solve(v, Gl=Gl, cho=cho, sigma=sigma):
                def once(rhs):
                    return (rhs - Gl @ scipy.linalg.cho_solve(
                        cho, Gl.T @ rhs, check_finite=False)) / sigma
                # one refinement round: the correction formula cancels
                # badly when ||Gl||^2 >> sigma
                x = once(v)
                x += once(v - sigma * x - Gl @ (x @ Gl))
                return x
            return F, g, solve, diag_w

        W = X.T @ X
        H = cfg.epsilon * W * W + A @ A.T / (2.0 * cfg.lam_theta)
        H[np.diag_indices_from(H)] += 1.0 / (2.0 * cfg.gamma)
        try:
            cho = scipy.linalg.cho_factor(H, check_finite=False)
        except scipy.linalg.LinAlgError:
            raise NumericalError("dual Hessian factorization failed") \
                from None

        def solve(v, cho=cho):
            return scipy.linalg.cho_solve(cho, v, check_finite=False)
        return F, g, solve, diag_w


def _damped_newton(ws: _DualWorkspace, cfg: SolverConfig,
                   alpha0: np.ndarray) -> tuple[DualState, np.ndarray]:
    """Newton with backtracking on F until the decrement reaches newton_tol.

    Trial steps start near full Newton length (doubling the last accepted
    fraction, capped at 1) and halve whenever the trial raises F or leaves
    the factorizable region.  Two safeguards bound the trials.  A fraction
    to boundary cap keeps every trial at most 90% of the way to the nearest
    point where U(alpha) goes singular, since accepting a wall-hugging
    iterate makes the barrier Hessian unfactorizable in floats even though
    it is positive definite.  Halving then passes through the damped
    fraction 1/(1 + dec) with dec = sqrt(g'H^{-1}g / epsilon), where a
    decrease is guaranteed for exact steps, so only inexact solves or
    boundary roundoff can exhaust the halving budget.  Full steps matter:
    right after a homotopy stage reweights the ridge term, the objective is
    quadratic dominated and the damped fraction alone would need
    O(gap / epsilon) iterations to cross the gap.  Returns the end state
    plus diag_w at the final iterate.
    """
    alpha = np.asarray(alpha0, dtype=float).copy()
    if alpha.shape != (ws.n,):
        raise ParameterError(f"alpha0 must have shape ({ws.n},)")
    F, g, solve, diag_w = ws.evaluate(alpha, cfg)
    if not np.isfinite(F):
        raise NumericalError("non-finite objective at the starting point; "
                             "instance is numerically degenerate")
    history = [F]
    s_prev = 1.0
    dec = np.inf
    for it in range(cfg.max_newton_iters + 1):
        step = -solve(g)
        dec = float(np.sqrt(max(-(g @ step), 0.0) / cfg.epsilon))
        if not np.isfinite(dec):
            raise NumericalError("non-finite Newton data; instance is "
                                 "numerically degenerate")
        if dec <= cfg.newton_tol:
            state = DualState(alpha=alpha, value=F, gradient=g,
                              decrement=dec, iterations=it,
                              objective_history=np.array(history))
            return state, diag_w
        if it == cfg.max_newton_iters:
            break
        s_cap = 0.9 * ws.max_feasible_step(alpha, step)
        floor = min(1.0 / (1.0 + dec), s_cap)
        s = max(min(1.0, 2.0 * s_prev, s_cap), floor)
        accepted = False
        for _ in range(cfg.max_backtracks + 1):
            ok = True
            try:
                Ft, gt, solvet, dwt = ws.evaluate(alpha + s * step, cfg)
            except (NumericalError, FactorizationError):
                ok = False
            # the threshold sits above the evaluation noise of F, so only
            # genuine overshoot trips it, not roundoff near convergence
            if ok and np.isfinite(Ft) and Ft <= F + 1e-8 * (1.0 + abs(F)):
                accepted = True
                break
            s = max(0.5 * s, floor) if s > floor else 0.5 * s
        if not accepted:
            raise NumericalError("Newton step kept increasing the "
                                 "objective after repeated halving")
        alpha = alpha + s * step
        F, g, solve, diag_w = Ft, gt, solvet, dwt
        history.append(F)
        s_prev = s
    raise ConvergenceError(
        f"damped Newton did not reach decrement {cfg.newton_tol} in "
        f"{cfg.max_newton_iters} iterations (last {dec:.3e})",
        decrement=dec)


def damped_newton(cs: ConstraintSystem, Phi: np.ndarray, cfg: SolverConfig,
                  alpha0: Optional[np.ndarray] = None) -> DualState:
    """Minimize the dual objective from alpha0 (defaults to all-ones)."""
    ws = _DualWorkspace(cs, Phi, cfg.lam)
    if alpha0 is None:
        alpha0 = np.full(cs.n, cfg.alpha0)
    state, _ = _damped_newton(ws, cfg, alpha0)
    return state


def recover_primal(cs: ConstraintSystem, Phi: np.ndarray, cfg: SolverConfig,
                   state: DualState,
                   form_sos_matrix: Optional[bool] = None) -> Solution:
    """Primal quantities from a converged dual state.

    The constraint residuals b + A theta - Phi_i'B Phi_i - delta coincide
    with the dual gradient, so they come for free; the full PSD matrix
    costs an extra q x q inversion and can be skipped.
    """
    if form_sos_matrix is None:
        form_sos_matrix = cfg.recover_sos_matrix
    alpha = state.alpha
    resid_ld = (cs.c.astype(np.longdouble)
                + cs.A.T.astype(np.longdouble) @ alpha.astype(np.longdouble))
    theta = np.asarray(resid_ld / (2.0 * np.longdouble(cfg.lam_theta)),
                       dtype=float)
    delta = -alpha / (2.0 * cfg.gamma)
    B = None
    if form_sos_matrix:
        L = _factor_U(cs, Phi, cfg, alpha)
        B = cfg.epsilon * _chol_inverse_upper(np.ascontiguousarray(L.T))
        quad = np.einsum("ij,jk,ik->i", Phi, B, Phi)
        residuals = cs.b + cs.A @ theta - quad - delta
    else:
        residuals = state.gradient.copy()
    info = {
        "residuals": residuals,
        "residual_max": float(np.abs(residuals).max()),
        "dual_value": state.value,
        "newton_iters": state.iterations,
        "final_decrement": state.decrement,
    }
    return Solution(theta=theta, sos_matrix=B, alpha=alpha, delta=delta,
                    info=info)


def _extend_stages(ws: _DualWorkspace, cfg: SolverConfig,
                   alpha: np.ndarray) -> list[SolverConfig]:
    """Homotopy schedule, prepending stages until the start is tame.

    The decrement at a fixed point scales roughly inversely with the stage
    multiplier, so the number of stages still missing can be read off from
    one probe; a second probe then confirms it (or repeats, up to the
    max_extra_stages budget).
    """
    stages = homotopy_stages(cfg)
    extra = 0
    while np.isfinite(cfg.dec_cap) and extra < cfg.max_extra_stages:
        head = stages[0]
        _, g, solve, _ = ws.evaluate(alpha, head)
        dec = float(np.sqrt(max(g @ solve(g), 0.0) / head.epsilon))
        if dec <= cfg.dec_cap:
            break
        decades = int(np.ceil(np.log(dec / cfg.dec_cap)
                              / np.log(cfg.stage_factor)))
        decades = max(1, min(decades, cfg.max_extra_stages - extra))
        stages = [replace(head, epsilon=head.epsilon * s)
                  for s in cfg.stage_factor ** np.arange(decades, 0, -1.0)
                  ] + stages
        extra += decades
    return stages


def _probe_decrement(ws: _DualWorkspace, stage_cfg: SolverConfig,
                     alpha: np.ndarray) -> float:
    # a transition so sharp that the evaluation itself breaks down counts
    # as an unbounded decrement
    try:
        _, g, solve, _ = ws.evaluate(alpha, stage_cfg)
    except (NumericalError, FactorizationError):
        return np.inf
    return float(np.sqrt(max(g @ solve(g), 0.0) / stage_cfg.epsilon))


def solve_sos(cs: ConstraintSystem, Phi: np.ndarray,
              cfg: SolverConfig) -> Solution:
    """Homotopy of damped-Newton solves, warm-starting alpha across stages.

    Stage k scales epsilon by stage_factor^(n_stages-1-k); extra stages are
    prepended when the cold start would otherwise face a huge first
    decrement (see SolverConfig.dec_cap).  Transitions between stages get
    the same treatment: when the warm start's decrement at the next stage
    exceeds dec_cap, an intermediate stage at the geometric mean of the two
    barrier weights is inserted first (recursively, up to max_extra_stages
    insertions).  The last stage runs at the requested targets, whose
    minimizer is the recovered solution.
    """
    if cs.n < 1:
        raise ParameterError("constraint system is empty")
    t0 = time.perf_counter()
    ws = _DualWorkspace(cs, Phi, cfg.lam)
    alpha = np.full(cs.n, cfg.alpha0)
    pending = _extend_stages(ws, cfg, alpha)
    stage_iters = []
    histories = []
    epsilons = []
    state = None
    prev = None
    inserted = 0
    while pending:
        stage_cfg = pending[0]
        if (prev is not None and np.isfinite(cfg.dec_cap)
                and inserted < cfg.max_extra_stages
                and _probe_decrement(ws, stage_cfg, alpha) > cfg.dec_cap):
            mid = replace(stage_cfg, epsilon=np.sqrt(
                prev.epsilon * stage_cfg.epsilon))
            pending.insert(0, mid)
            inserted += 1
            continue
        pending.pop(0)
        try:
            state, _ = _damped_newton(ws, stage_cfg, alpha)
        except ConvergenceError as e:
            e.stage = len(epsilons)
            raise
        alpha = state.alpha
        stage_iters.append(state.iterations)
        histories.append(state.objective_history)
        epsilons.append(stage_cfg.epsilon)
        prev = stage_cfg
    sol = recover_primal(cs, Phi, cfg, state)
    sol.info.update({
        "stage_iterations": stage_iters,
        "stage_epsilons": epsilons,
        "newton_iters": int(sum(stage_iters)),
        "objective_histories": histories,
        "solve_seconds": time.perf_counter() - t0,
        "strategy": ws.strategy + ("+woodbury" if ws.woodbury else ""),
    })
    return sol


def _lp_newton(cs: ConstraintSystem, cfg: SolverConfig, gamma: float,
               theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, int,
                                           float]:
    """One penalized-LP Newton solve at a fixed gamma, from theta.

    The hinge makes the objective piecewise quadratic, so its derivative
    along any direction is piecewise linear and nondecreasing; bisection
    locates the exact minimizer of each Newton step, which stops the
    active-set thrash a fixed step length causes.  Returns (theta,
    residuals, iterations, gradient norm).
    """
    A, b, c = cs.A, cs.b, cs.c

    def split(th):
        r = b + A @ th
        viol = np.maximum(0.0, -r)
        f = -c @ th + cfg.lam_theta * th @ th + gamma * viol @ viol - cs.C
        return r, viol, f

    r, viol, f = split(theta)
    iters = 0
    for it in range(cfg.max_newton_iters + 1):
        g = -c + 2.0 * cfg.lam_theta * theta - 2.0 * gamma * (A.T @ viol)
        gnorm = float(np.abs(g).max())
        if gnorm <= cfg.lp_tol:
            iters = it
            break
        if it == cfg.max_newton_iters:
            raise ConvergenceError(
                f"LP Newton did not reach gradient norm {cfg.lp_tol} in "
                f"{cfg.max_newton_iters} iterations (last {gnorm:.3e})",
                decrement=gnorm)
        active = viol > 0.0
        Aact = A[active]
        H = 2.0 * gamma * (Aact.T @ Aact)
        H[np.diag_indices_from(H)] += 2.0 * cfg.lam_theta
        step = -scipy.linalg.cho_solve(
            scipy.linalg.cho_factor(H, check_finite=False), g,
            check_finite=False)
        slope = float(g @ step)
        if -slope <= 1e-15 * (1.0 + abs(f)):
            # predicted decrease below float resolution of f: the huge
            # penalty curvature pins theta tighter than the gradient noise
            iters = it
            break
        d = A @ step
        c_dot = float(c @ step)
        th_dot = float(theta @ step)
        ss = float(step @ step)

        def dphi(s):
            hinge = float(np.minimum(0.0, r + s * d) @ d)
            return (-c_dot + 2.0 * cfg.lam_theta * (th_dot + s * ss)
                    + 2.0 * gamma * hinge)

        hi = 1.0
        while dphi(hi) < 0.0 and hi < 1e18:
            hi *= 2.0
        lo = 0.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if dphi(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        theta = theta + hi * step
        r, viol, f = split(theta)
    return theta, r, iters, gnorm


def solve_lp(cs: ConstraintSystem, cfg: SolverConfig) -> Solution:
    """Newton with exact line search on the slack-eliminated LP.

    Maximizes c.theta - lam_theta |theta|^2 - gamma sum max(0, -(b + A
    theta))^2 + C.  Large gamma is reached by continuation: the penalty
    weight starts at min(gamma, 100) and grows tenfold per leg, each leg
    warm-started from the last, so the active set is discovered at the
    cheap end of the schedule.
    """
    if cs.n < 1:
        raise ParameterError("constraint system is empty")
    t0 = time.perf_counter()
    n_legs = 1
    if cfg.gamma > 100.0:
        n_legs += int(np.ceil(np.log10(cfg.gamma / 100.0)))
    theta = np.zeros(cs.m)
    total = 0
    for k in range(n_legs):
        gamma = cfg.gamma * 10.0 ** (k + 1 - n_legs)
        theta, r, iters, gnorm = _lp_newton(cs, cfg, gamma, theta)
        total += iters
    delta = np.minimum(0.0, r)
    info = {
        "newton_iters": total,
        "final_decrement": gnorm,
        "objective": float(cs.c @ theta - cfg.lam_theta * theta @ theta
                           - cfg.gamma * delta @ delta + cs.C),
        "min_residual": float(r.min()),
        "solve_seconds": time.perf_counter() - t0,
    }
    return Solution(theta=theta, sos_matrix=None, alpha=None, delta=delta,
                    info=info)


def guided_embedding(t: float, x: np.ndarray, u: np.ndarray, T: float,
                     q_t: int = 5, u_scale: float = 10.0) -> np.ndarray:
    """Low-dimensional SoS feature vector (u/u_scale, x, sines(t) kron x).

    The trailing blocks reuse the sine time profiles, so the quadratic form
    in these features can represent (u + K(t)x)'R(u + K(t)x) with a
    time-varying gain; the standalone x block keeps that possible at t = T
    where every sine vanishes.
    """
    if q_t < 1:
        raise ParameterError("q_t must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    sines = np.array([kappa(j, t, T) for j in range(1, q_t + 1)])
    return np.concatenate([u / u_scale, x, np.kron(sines, x)])


def guided_feature_matrix(samples, T: float, q_t: int = 5,
                          u_scale: float = 10.0) -> np.ndarray:
    """Stacked guided embeddings for a SampleSet, shape (n, p + d + q_t d)."""
    if q_t < 1:
        raise ParameterError("q_t must be >= 1")
    js = np.arange(1, q_t + 1, dtype=float)
    arg = np.multiply.outer(samples.ts - T, js) * (np.pi / (2.0 * T))
    sines = np.sin(arg) / js
    crossed = (sines[:, :, None] * samples.xs[:, None, :]).reshape(
        samples.n, q_t * samples.xs.shape[1])
    return np.concatenate([samples.us / u_scale, samples.xs, crossed], axis=1)
