"""Separable time/state feature bases and the parametric value model.

The candidate value functions have the form

    V(t, x) = theta . psi(t, x) + M(x),

where psi stacks products of time profiles kappa_j(t) and state features
phi_i(x) in the layout psi[j*k + i] = kappa_j(t) * phi_i(x), i.e.
psi = kron(kappa(t), phi(x)).  Every time profile vanishes at t = T so the
terminal condition V(T, .) = M is built in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError


def kappa(j: int, t, T: float):
    """Sine time profile (1/j) sin(j pi/2 (t - T)/T) for j >= 1."""
    return np.sin(j * np.pi / 2.0 * (np.asarray(t, dtype=float) - T) / T) / j


def kappa_dt(j: int, t, T: float):
    """Time derivative pi/(2T) cos(j pi/2 (t - T)/T)."""
    return (np.pi / (2.0 * T)) * np.cos(
        j * np.pi / 2.0 * (np.asarray(t, dtype=float) - T) / T)


def phi_quadratic(x: np.ndarray) -> np.ndarray:
    """Monomials (1, x1, x2, x1 x2, x1^2, x2^2) for a planar state."""
    x1, x2 = x[0], x[1]
    return np.array([1.0, x1, x2, x1 * x2, x1 * x1, x2 * x2])


def phi_quadratic_jac(x: np.ndarray) -> np.ndarray:
    x1, x2 = x[0], x[1]
    return np.array([
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, 1.0],
        [x2, x1],
        [2.0 * x1, 0.0],
        [0.0, 2.0 * x2],
    ])


_PHI_QUAD_LAP = np.array([0.0, 0.0, 0.0, 0.0, 2.0, 2.0])


@dataclass
class FeatureBasis:
    """Time-separable feature map psi(t, x) = kron(kappa(t), phi(x)).

    ``kappa_fn(t)`` returns the (m_t,) vector of time profiles and must
    vanish at t = T; ``phi_fn(x)`` returns the (phi_dim,) state features
    with Jacobian ``phi_jac_fn(x)`` of shape (phi_dim, d) and Laplacian
    ``phi_lap_fn(x)`` of shape (phi_dim,).  Optional *_batch callbacks take
    stacked inputs; without them batch evaluation falls back to a loop.
    """

    d: int
    m_t: int
    phi_dim: int
    T: float
    kappa_fn: Callable
    kappa_dt_fn: Callable
    phi_fn: Callable
    phi_jac_fn: Callable
    phi_lap_fn: Callable
    kappa_batch_fn: Optional[Callable] = None
    kappa_dt_batch_fn: Optional[Callable] = None
    phi_batch_fn: Optional[Callable] = None
    phi_jac_batch_fn: Optional[Callable] = None
    phi_lap_batch_fn: Optional[Callable] = None

    def __post_init__(self):
        if self.m_t < 1 or self.phi_dim < 1:
            raise ParameterError("m_t and phi_dim must be >= 1")
        kT = np.asarray(self.kappa_fn(self.T), dtype=float)
        if kT.shape != (self.m_t,):
            raise ParameterError("kappa_fn must return shape (m_t,)")
        if np.abs(kT).max() > 1e-12:
            raise ParameterError("time profiles must vanish at t = T")

    @property
    def dim(self) -> int:
        return self.m_t * self.phi_dim

    def psi(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.kron(self.kappa_fn(t), self.phi_fn(x))

    def psi_dt(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.kron(self.kappa_dt_fn(t), self.phi_fn(x))

    def psi_jac_x(self, t: float, x: np.ndarray) -> np.ndarray:
        """(dim, d) Jacobian of psi in x at fixed t."""
        k = np.asarray(self.kappa_fn(t), dtype=float)
        return np.kron(k[:, None], self.phi_jac_fn(x))

    def psi_laplacian(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.kron(self.kappa_fn(t), self.phi_lap_fn(x))

    # batch paths: stacked kappa (N, m_t) and phi (N, phi_dim) combine into
    # (N, m_t*phi_dim) with the same j*phi_dim + i layout as np.kron
    def kappa_rows(self, ts: np.ndarray) -> np.ndarray:
        if self.kappa_batch_fn is not None:
            return np.asarray(self.kappa_batch_fn(ts), dtype=float)
        return np.stack([np.asarray(self.kappa_fn(t), dtype=float) for t in ts])

    def phi_rows(self, xs: np.ndarray) -> np.ndarray:
        if self.phi_batch_fn is not None:
            return np.asarray(self.phi_batch_fn(xs), dtype=float)
        return np.stack([np.asarray(self.phi_fn(x), dtype=float) for x in xs])

    def psi_rows(self, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """(N, dim) matrix with rows psi(ts[i], xs[i])."""
        kap = self.kappa_rows(ts)
        ph = self.phi_rows(xs)
        return (kap[:, :, None] * ph[:, None, :]).reshape(len(ts), self.dim)

    def psi_dt_rows(self, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        if self.kappa_dt_batch_fn is not None:
            kdt = np.asarray(self.kappa_dt_batch_fn(ts), dtype=float)
        else:
            kdt = np.stack([np.asarray(self.kappa_dt_fn(t), dtype=float)
                            for t in ts])
        ph = self.phi_rows(xs)
        return (kdt[:, :, None] * ph[:, None, :]).reshape(len(ts), self.dim)

    def phi_jac_rows(self, xs: np.ndarray) -> np.ndarray:
        if self.phi_jac_batch_fn is not None:
            return np.asarray(self.phi_jac_batch_fn(xs), dtype=float)
        return np.stack([np.asarray(self.phi_jac_fn(x), dtype=float)
                         for x in xs])

    def phi_lap_rows(self, xs: np.ndarray) -> np.ndarray:
        if self.phi_lap_batch_fn is not None:
            return np.asarray(self.phi_lap_batch_fn(xs), dtype=float)
        return np.stack([np.asarray(self.phi_lap_fn(x), dtype=float)
                         for x in xs])


def sine_monomial_basis(m_t: int = 10, T: float = 1.0) -> FeatureBasis:
    """Default planar basis: m_t sine time profiles x quadratic monomials."""
    js = np.arange(1, m_t + 1, dtype=float)

    def kap(t):
        return np.sin(js * (np.pi / 2.0) * (t - T) / T) / js

    def kap_dt(t):
        return (np.pi / (2.0 * T)) * np.cos(js * (np.pi / 2.0) * (t - T) / T)

    def kap_batch(ts):
        arg = np.multiply.outer(np.asarray(ts, dtype=float) - T, js)
        return np.sin(arg * (np.pi / 2.0) / T) / js

    def kap_dt_batch(ts):
        arg = np.multiply.outer(np.asarray(ts, dtype=float) - T, js)
        return (np.pi / (2.0 * T)) * np.cos(arg * (np.pi / 2.0) / T)

    def phi_batch(xs):
        x1, x2 = xs[:, 0], xs[:, 1]
        return np.column_stack([np.ones_like(x1), x1, x2, x1 * x2,
                                x1 * x1, x2 * x2])

    def phi_jac_batch(xs):
        n = xs.shape[0]
        J = np.zeros((n, 6, 2))
        J[:, 1, 0] = 1.0
        J[:, 2, 1] = 1.0
        J[:, 3, 0] = xs[:, 1]
        J[:, 3, 1] = xs[:, 0]
        J[:, 4, 0] = 2.0 * xs[:, 0]
        J[:, 5, 1] = 2.0 * xs[:, 1]
        return J

    def phi_lap_batch(xs):
        return np.broadcast_to(_PHI_QUAD_LAP, (xs.shape[0], 6))

    return FeatureBasis(
        d=2, m_t=m_t, phi_dim=6, T=T,
        kappa_fn=kap, kappa_dt_fn=kap_dt,
        phi_fn=phi_quadratic, phi_jac_fn=phi_quadratic_jac,
        phi_lap_fn=lambda x: _PHI_QUAD_LAP.copy(),
        kappa_batch_fn=kap_batch, kappa_dt_batch_fn=kap_dt_batch,
        phi_batch_fn=phi_batch,
        phi_jac_batch_fn=phi_jac_batch, phi_lap_batch_fn=phi_lap_batch)


def linear_decay_basis(T: float = 1.0) -> FeatureBasis:
    """One feature, psi(t, x) = 1 - t/T, for scalar-state sanity problems."""
    return FeatureBasis(
        d=1, m_t=1, phi_dim=1, T=T,
        kappa_fn=lambda t: np.array([1.0 - t / T]),
        kappa_dt_fn=lambda t: np.array([-1.0 / T]),
        phi_fn=lambda x: np.array([1.0]),
        phi_jac_fn=lambda x: np.zeros((1, 1)),
        phi_lap_fn=lambda x: np.zeros(1),
        kappa_batch_fn=lambda ts: (1.0 - np.asarray(ts, dtype=float) / T)[:, None],
        phi_batch_fn=lambda xs: np.ones((np.shape(xs)[0], 1)))


class ValueModel:
    """V(t, x) = theta . psi(t, x) + terminal_cost(x) for a fitted theta."""

    def __init__(self, basis: FeatureBasis, theta: np.ndarray, problem):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (basis.dim,):
            raise ParameterError(
                f"theta must have shape ({basis.dim},), got {theta.shape}")
        self.basis = basis
        self.theta = theta
        self.problem = problem

    def value(self, t: float, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.theta @ self.basis.psi(t, x)
                     + self.problem.terminal_cost(x))

    def dt(self, t: float, x: np.ndarray) -> float:
        return float(self.theta @ self.basis.psi_dt(t, x))

    def grad_x(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self.basis.psi_jac_x(t, x).T @ self.theta
                + np.asarray(self.problem.terminal_cost_grad(x), dtype=float))

    def laplacian(self, t: float, x: np.ndarray) -> float:
        return float(self.theta @ self.basis.psi_laplacian(t, x)
                     + self.problem.terminal_cost_laplacian(x))

    def _phi_weights(self, t: float) -> np.ndarray:
        # theta reshaped (m_t, phi_dim) contracted with kappa(t): the state
        # feature coefficients active at time t
        kap = np.asarray(self.basis.kappa_fn(t), dtype=float)
        return kap @ self.theta.reshape(self.basis.m_t, self.basis.phi_dim)

    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        """Batch values at one time over rows of X, shape (B, d) -> (B,)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        w = self._phi_weights(t)
        return self.basis.phi_rows(X) @ w + np.asarray(
            self.problem.terminal_cost(X), dtype=float)

    def grad_x_rows(self, t: float, X: np.ndarray) -> np.ndarray:
        """Batch spatial gradients at one time, shape (B, d) -> (B, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        w = self._phi_weights(t)
        J = self.basis.phi_jac_rows(X)
        return np.einsum("bkd,k->bd", J, w) + np.asarray(
            self.problem.terminal_cost_grad(X), dtype=float)
