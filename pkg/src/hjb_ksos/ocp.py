"""Optimal control problems, LQR ground truth, and trajectory rollouts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, DivergenceError, DomainError, ParameterError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-coordinate lower/upper bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ParameterError("box bounds must be 1-d arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ParameterError("box bounds must be finite")
        if np.any(hi <= lo):
            raise ParameterError("box must have positive width in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x: np.ndarray, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - atol) and np.all(x <= self.hi + atol))

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lo, self.hi)


def _check_symmetric(name: str, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"{name} must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ParameterError(f"{name} must be symmetric")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class LqrProblem:
    """Linear dynamics x' = Ax + Bu with quadratic costs.

    Running cost x'Qx + u'Ru, terminal cost x'M0x, horizon [0, T].
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    M0: np.ndarray
    T: float
    state_box: Box
    control_box: Box

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ParameterError("A must be square")
        d = A.shape[0]
        if B.ndim != 2 or B.shape[0] != d:
            raise ParameterError("B must have one row per state dimension")
        p = B.shape[1]
        Q = _check_symmetric("Q", self.Q)
        R = _check_symmetric("R", self.R)
        M0 = _check_symmetric("M0", self.M0)
        if Q.shape[0] != d or M0.shape[0] != d or R.shape[0] != p:
            raise ParameterError("weight matrix dimensions do not match A, B")
        if np.linalg.eigvalsh(Q).min() < -1e-12:
            raise ParameterError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(M0).min() < -1e-12:
            raise ParameterError("M0 must be positive semidefinite")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ParameterError("R must be positive definite") from None
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ParameterError("horizon T must be positive and finite")
        if self.state_box.dim != d or self.control_box.dim != p:
            raise ParameterError("box dimensions do not match A, B")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "M0", M0)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    def gain_factor(self) -> np.ndarray:
        """R^{-1} B', the state-independent part of the optimal feedback."""
        return np.linalg.solve(self.R, self.B.T)


@dataclass
class ControlProblem:
    """Finite-horizon control problem over a state box and a control box.

    ``dynamics(t, x, u)`` returns dx/dt, ``running_cost(t, x, u)`` the
    integrand, ``terminal_cost(x)`` the endpoint penalty with its gradient
    and Laplacian supplied separately (the solver needs both).  When
    ``vectorized`` is set, all callbacks must also accept stacked inputs
    with a leading batch axis.
    """

    d: int
    p: int
    T: float
    dynamics: Callable
    running_cost: Callable
    terminal_cost: Callable
    terminal_cost_grad: Callable
    terminal_cost_laplacian: Callable
    state_box: Box
    control_box: Box
    vectorized: bool = False
    lqr: Optional[LqrProblem] = None
    name: str = ""

    def __post_init__(self):
        if self.d < 1 or self.p < 1:
            raise ParameterError("state and control dimensions must be >= 1")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ParameterError("horizon T must be positive and finite")
        if self.state_box.dim != self.d or self.control_box.dim != self.p:
            raise ParameterError("box dimensions do not match d, p")


@dataclass(frozen=True)
class RiccatiSolution:
    """Backward Riccati solution tabulated on a uniform time grid."""

    lqr: LqrProblem
    grid: np.ndarray
    S: np.ndarray  # (n_steps + 1, d, d), S[i] at grid[i]
    step: float

    def _locate(self, t: float) -> tuple[int, float]:
        T = self.lqr.T
        if t < -1e-12 or t > T + 1e-12:
            raise DomainError(f"t={t} outside horizon [0, {T}]")
        s = min(max(t, 0.0), T) / self.step
        i = min(int(s), self.S.shape[0] - 2)
        return i, s - i

    def S_at(self, t: float) -> np.ndarray:
        """Linearly interpolated S(t)."""
        i, w = self._locate(t)
        return (1.0 - w) * self.S[i] + w * self.S[i + 1]

    def S_dot_at(self, t: float) -> np.ndarray:
        """dS/dt obtained by evaluating the Riccati right-hand side at S(t).

        Using the ODE itself (rather than differencing the table) keeps the
        derivative consistent with S to the accuracy of the interpolation.
        """
        return _riccati_rhs(self.lqr, self.S_at(t))

    def K_at(self, t: float) -> np.ndarray:
        """Optimal feedback gain K(t) = R^{-1} B' S(t)."""
        return np.linalg.solve(self.lqr.R, self.lqr.B.T @ self.S_at(t))

    def value(self, t: float, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.S_at(t) @ x)


def _riccati_rhs(lqr: LqrProblem, S: np.ndarray) -> np.ndarray:
    # dS/dt = -Q - A'S - SA + S B R^{-1} B' S  (backward equation)
    BRB = lqr.B @ np.linalg.solve(lqr.R, lqr.B.T)
    return -lqr.Q - lqr.A.T @ S - S @ lqr.A + S @ BRB @ S


def riccati_backward_solve(lqr: LqrProblem, n_steps: int) -> RiccatiSolution:
    """Integrate the Riccati equation backward from S(T) = M0.

    Fixed-step classical RK4 on a uniform grid of ``n_steps`` intervals; each
    accepted step is symmetrized to stop asymmetry drift.

    Raises
    ------
    DivergenceError
        If the iterates leave the finite range (blowup before t = 0).
    """
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    grid = np.linspace(0.0, lqr.T, n_steps + 1)
    h = lqr.T / n_steps
    S = np.empty((n_steps + 1, lqr.d, lqr.d))
    S[n_steps] = lqr.M0
    for k in range(n_steps - 1, -1, -1):
        s1 = S[k + 1]
        k1 = _riccati_rhs(lqr, s1)
        k2 = _riccati_rhs(lqr, s1 - 0.5 * h * k1)
        k3 = _riccati_rhs(lqr, s1 - 0.5 * h * k2)
        k4 = _riccati_rhs(lqr, s1 - h * k3)
        nxt = s1 - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nxt = 0.5 * (nxt + nxt.T)
        if not np.isfinite(nxt).all():
            raise DivergenceError("Riccati iterate became non-finite",
                                  time=grid[k])
        S[k] = nxt
    return RiccatiSolution(lqr=lqr, grid=grid, S=S, step=h)


def algebraic_riccati_solve(lqr: LqrProblem, tol: float = 1e-12,
                            max_iters: int = 50) -> np.ndarray:
    """Stationary Riccati solution via Newton-Kleinman iteration.

    Seeded with S(0) from a long-horizon backward solve (T = 20), which is
    stabilizing; each Newton step solves the Lyapunov equation
    F'X + XF = -(Q + K'RK) with F = A - BK through the dense Kronecker
    system.  Iterates until the algebraic residual drops below ``tol``.
    """
    seed_T = max(20.0, lqr.T)
    seed = riccati_backward_solve(replace(lqr, T=seed_T),
                                  n_steps=int(200 * seed_T))
    S = seed.S[0]
    d = lqr.d
    eye = np.eye(d)
    BRB = lqr.B @ np.linalg.solve(lqr.R, lqr.B.T)
    for _ in range(max_iters):
        K = np.linalg.solve(lqr.R, lqr.B.T @ S)
        F = lqr.A - lqr.B @ K
        C = -(lqr.Q + K.T @ lqr.R @ K)
        # vec(F'X) + vec(XF) = (kron(F', I) + kron(I, F')) vec(X), row-major
        M = np.kron(F.T, eye) + np.kron(eye, F.T)
        S = np.linalg.solve(M, C.reshape(-1)).reshape(d, d)
        S = 0.5 * (S + S.T)
        res = lqr.Q + lqr.A.T @ S + S @ lqr.A - S @ BRB @ S
        if np.linalg.norm(res) <= tol:
            return S
    raise ConvergenceError(
        f"Newton-Kleinman did not reach residual {tol} in {max_iters} steps",
        decrement=float(np.linalg.norm(res)))


def lqr_value(riccati: RiccatiSolution, t: float, x: np.ndarray) -> float:
    """Optimal cost-to-go x'S(t)x."""
    return riccati.value(t, x)


class LqrValueFunction:
    """Callable handle for the exact LQR value function and its derivatives."""

    def __init__(self, riccati: RiccatiSolution):
        self.riccati = riccati

    def value(self, t: float, x: np.ndarray) -> float:
        return self.riccati.value(t, x)

    def dt(self, t: float, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.riccati.S_dot_at(t) @ x)

    def grad_x(self, t: float, x: np.ndarray) -> np.ndarray:
        return 2.0 * (self.riccati.S_at(t) @ np.asarray(x, dtype=float))

    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        """Batch evaluation at one time over rows of X, shape (B, d) -> (B,)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        S = self.riccati.S_at(t)
        return np.einsum("bi,ij,bj->b", X, S, X)

    def grad_x_rows(self, t: float, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return 2.0 * (X @ self.riccati.S_at(t).T)


def hamiltonian(problem: ControlProblem, value, t: float, x: np.ndarray,
                u: np.ndarray) -> float:
    """dV/dt + running cost + grad V . dynamics for a value handle."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    drift = np.asarray(problem.dynamics(t, x, u), dtype=float)
    return float(problem.running_cost(t, x, u) + value.dt(t, x)
                 + value.grad_x(t, x) @ drift)


@dataclass(frozen=True)
class Trajectory:
    """Rollout record: states on the step grid, controls at step starts."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    running_cost: float
    total_cost: float


def rollout(problem: ControlProblem, policy, x0: np.ndarray,
            n_steps: int) -> Trajectory:
    """Integrate the closed loop under ``policy`` with fixed-step RK4.

    The cost integral rides along as an extra RK4 component so state and
    cost see the same quadrature.  Controls are clipped to the control box
    at every stage evaluation; states are left unclipped.  The recorded
    control for a step is the (clipped) value at the step start.

    Raises
    ------
    DivergenceError
        If the state leaves the finite range; carries the failure time.
    """
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (problem.d,):
        raise ParameterError(f"x0 must have shape ({problem.d},)")
    h = problem.T / n_steps
    box = problem.control_box
    f, L = problem.dynamics, problem.running_cost

    times = np.linspace(0.0, problem.T, n_steps + 1)
    states = np.empty((n_steps + 1, problem.d))
    controls = np.empty((n_steps, problem.p))
    states[0] = x
    cost = 0.0
    for k in range(n_steps):
        t = times[k]
        u1 = box.clip(np.atleast_1d(policy(t, x)))
        k1x = np.asarray(f(t, x, u1), dtype=float)
        k1c = L(t, x, u1)
        x2 = x + 0.5 * h * k1x
        u2 = box.clip(np.atleast_1d(policy(t + 0.5 * h, x2)))
        k2x = np.asarray(f(t + 0.5 * h, x2, u2), dtype=float)
        k2c = L(t + 0.5 * h, x2, u2)
        x3 = x + 0.5 * h * k2x
        u3 = box.clip(np.atleast_1d(policy(t + 0.5 * h, x3)))
        k3x = np.asarray(f(t + 0.5 * h, x3, u3), dtype=float)
        k3c = L(t + 0.5 * h, x3, u3)
        x4 = x + h * k3x
        u4 = box.clip(np.atleast_1d(policy(t + h, x4)))
        k4x = np.asarray(f(t + h, x4, u4), dtype=float)
        k4c = L(t + h, x4, u4)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        cost += (h / 6.0) * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
        if not np.isfinite(x).all():
            raise DivergenceError("state became non-finite during rollout",
                                  time=times[k + 1])
        states[k + 1] = x
        controls[k] = u1
    total = cost + float(problem.terminal_cost(x))
    return Trajectory(times=times, states=states, controls=controls,
                      running_cost=float(cost), total_cost=total)


def _rollout_batch_costs(problem: ControlProblem, policy, X0: np.ndarray,
                         n_steps: int) -> np.ndarray:
    """Total rollout costs for all rows of X0 at once.

    Requires broadcast-safe problem callbacks and policy (leading batch
    axis); numerically identical to per-point ``rollout`` up to summation
    associativity.
    """
    X = np.asarray(X0, dtype=float).copy()
    h = problem.T / n_steps
    box = problem.control_box
    f, L = problem.dynamics, problem.running_cost
    cost = np.zeros(X.shape[0])
    for k in range(n_steps):
        t = k * h
        u1 = box.clip(policy(t, X))
        k1x, k1c = f(t, X, u1), L(t, X, u1)
        X2 = X + 0.5 * h * k1x
        u2 = box.clip(policy(t + 0.5 * h, X2))
        k2x, k2c = f(t + 0.5 * h, X2, u2), L(t + 0.5 * h, X2, u2)
        X3 = X + 0.5 * h * k2x
        u3 = box.clip(policy(t + 0.5 * h, X3))
        k3x, k3c = f(t + 0.5 * h, X3, u3), L(t + 0.5 * h, X3, u3)
        X4 = X + h * k3x
        u4 = box.clip(policy(t + h, X4))
        k4x, k4c = f(t + h, X4, u4), L(t + h, X4, u4)
        X = X + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        cost += (h / 6.0) * (k1c + 2.0 * k2c + 2.0 * k3c + k4c)
        if not np.isfinite(X).all():
            raise DivergenceError("state became non-finite during rollout",
                                  time=(k + 1) * h)
    return cost + problem.terminal_cost(X)


def lqr_control_problem(lqr: LqrProblem, name: str = "lqr") -> ControlProblem:
    """Wrap an LqrProblem as a generic ControlProblem (batch-safe callbacks)."""
    A, B, Q, R, M0 = lqr.A, lqr.B, lqr.Q, lqr.R, lqr.M0
    trace_M0 = 2.0 * float(np.trace(M0))

    def dynamics(t, x, u):
        return x @ A.T + u @ B.T

    def running_cost(t, x, u):
        return np.einsum("...i,ij,...j->...", x, Q, x) \
            + np.einsum("...i,ij,...j->...", u, R, u)

    def terminal_cost(x):
        return np.einsum("...i,ij,...j->...", x, M0, x)

    def terminal_cost_grad(x):
        return 2.0 * (x @ M0.T)

    def terminal_cost_laplacian(x):
        if np.ndim(x) > 1:
            return np.full(np.shape(x)[0], trace_M0)
        return trace_M0

    return ControlProblem(
        d=lqr.d, p=lqr.p, T=lqr.T,
        dynamics=dynamics, running_cost=running_cost,
        terminal_cost=terminal_cost, terminal_cost_grad=terminal_cost_grad,
        terminal_cost_laplacian=terminal_cost_laplacian,
        state_box=lqr.state_box, control_box=lqr.control_box,
        vectorized=True, lqr=lqr, name=name)


def double_integrator() -> ControlProblem:
    """Double integrator benchmark: x1' = x2, x2' = u.

    Unit state cost, control cost 0.1 u^2, terminal cost |x|^2, horizon 1,
    states in [-1, 1]^2, controls in [-10, 10].
    """
    lqr = LqrProblem(
        A=np.array([[0.0, 1.0], [0.0, 0.0]]),
        B=np.array([[0.0], [1.0]]),
        Q=np.eye(2),
        R=np.array([[0.1]]),
        M0=np.eye(2),
        T=1.0,
        state_box=Box(lo=np.array([-1.0, -1.0]), hi=np.array([1.0, 1.0])),
        control_box=Box(lo=np.array([-10.0]), hi=np.array([10.0])),
    )
    return lqr_control_problem(lqr, name="double_integrator")


def control_only_problem(cost_fn: Callable, control_box: Box,
                         T: float = 1.0) -> ControlProblem:
    """Problem with frozen scalar state and control-only running cost.

    dynamics = 0 and terminal cost = 0, so the optimal value is
    (T - t) * min_u cost_fn(u).  Useful as a solver sanity target with a
    closed-form answer.
    """
    p = control_box.dim

    def dynamics(t, x, u):
        return np.zeros_like(x)

    def running_cost(t, x, u):
        u = np.asarray(u, dtype=float)
        if p == 1:
            return cost_fn(u[..., 0]) if u.ndim > 1 else float(cost_fn(u[0]))
        return float(cost_fn(u))

    def zero_scalar(x):
        return np.zeros(np.shape(x)[0]) if np.ndim(x) > 1 else 0.0

    return ControlProblem(
        d=1, p=p, T=T,
        dynamics=dynamics, running_cost=running_cost,
        terminal_cost=zero_scalar,
        terminal_cost_grad=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        terminal_cost_laplacian=zero_scalar,
        state_box=Box(lo=np.array([-1.0]), hi=np.array([1.0])),
        control_box=control_box,
        vectorized=p == 1, name="control_only")
