"""Kernels on (t, x, u) samples, Gram assembly, and jittered factorization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FactorizationError, ParameterError


class Kernel:
    """Positive-definite kernel on joint samples y = (t, x, u)."""

    def pair(self, y, y2) -> float:
        t, x, u = y
        t2, x2, u2 = y2
        return float(self._eval(
            np.asarray([t], dtype=float), np.atleast_2d(x), np.atleast_2d(u),
            np.asarray([t2], dtype=float), np.atleast_2d(x2),
            np.atleast_2d(u2))[0, 0])

    def gram_matrix(self, ts, xs, us) -> np.ndarray:
        K = self._eval(ts, xs, us, ts, xs, us)
        # mirror to exact symmetry; (a + b)/2 is symmetric in floats
        return 0.5 * (K + K.T)

    def thin_features(self, samples):
        """Exact thin factor F with F F' = Gram, when one exists.

        Returns None when this kernel has no finite feature map; callers
        then fall back to the jittered Cholesky of the full Gram matrix.
        """
        return None

    def _eval(self, ts, xs, us, ts2, xs2, us2) -> np.ndarray:
        raise NotImplementedError


@dataclass
class ControlAffineKernel(Kernel):
    """<u, u'>/u_scale + <x, x'> exp(-|t - t'|/t_scale).

    Quadratic in the control pair, so candidate Hamiltonian models stay
    quadratic in u, matching the LQR structure.
    """

    u_scale: float = 100.0
    t_scale: float = 1.0

    def __post_init__(self):
        if self.u_scale <= 0 or self.t_scale <= 0:
            raise ParameterError("u_scale and t_scale must be positive")

    def _eval(self, ts, xs, us, ts2, xs2, us2):
        lag = np.abs(np.subtract.outer(np.asarray(ts, dtype=float),
                                       np.asarray(ts2, dtype=float)))
        return (us @ us2.T) / self.u_scale \
            + (xs @ xs2.T) * np.exp(-lag / self.t_scale)

    def thin_features(self, samples):
        """Exact factor of the Gram matrix, shape (n, p + d * n_unique_t).

        Both summands are finite-rank: the control part is linear, and the
        time part is a 1-d kernel evaluated on however many distinct time
        values the samples contain.  Useful when samples sit on a coarse
        time grid, where the factor is far thinner than the n x n Cholesky.
        """
        uniq, idx = np.unique(samples.ts, return_inverse=True)
        lag = np.abs(np.subtract.outer(uniq, uniq))
        fac = np.linalg.cholesky(np.exp(-lag / self.t_scale))
        # row i of the x-block is kron(fac[time of i], x_i)
        xblock = fac[idx][:, :, None] * samples.xs[:, None, :]
        n = samples.ts.shape[0]
        return np.hstack([samples.us / np.sqrt(self.u_scale),
                          xblock.reshape(n, -1)])


@dataclass
class PolynomialKernel(Kernel):
    """(1 + y . y')^degree on the concatenated sample vector y = (t, x, u)."""

    degree: int = 2

    def __post_init__(self):
        if self.degree < 1:
            raise ParameterError("degree must be >= 1")

    def _eval(self, ts, xs, us, ts2, xs2, us2):
        Y = np.column_stack([np.asarray(ts, dtype=float), xs, us])
        Y2 = np.column_stack([np.asarray(ts2, dtype=float), xs2, us2])
        return (1.0 + Y @ Y2.T) ** self.degree


@dataclass
class ExponentialKernel(Kernel):
    """exp(-|y - y'|_2 / sigma) on the concatenated sample vector."""

    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ParameterError("sigma must be positive")

    def _eval(self, ts, xs, us, ts2, xs2, us2):
        Y = np.column_stack([np.asarray(ts, dtype=float), xs, us])
        Y2 = np.column_stack([np.asarray(ts2, dtype=float), xs2, us2])
        sq = (Y * Y).sum(axis=1)[:, None] + (Y2 * Y2).sum(axis=1)[None, :] \
            - 2.0 * (Y @ Y2.T)
        return np.exp(-np.sqrt(np.maximum(sq, 0.0)) / self.sigma)


def make_kernel(variant: str, **params) -> Kernel:
    if variant == "control_affine":
        return ControlAffineKernel(
            u_scale=params.get("u_scale", 100.0),
            t_scale=params.get("t_scale", 1.0))
    if variant == "polynomial":
        return PolynomialKernel(degree=params.get("degree", 2))
    if variant == "exponential":
        return ExponentialKernel(sigma=params.get("sigma", 1.0))
    raise ParameterError(f"unknown kernel variant: {variant!r}")


def gram(kernel: Kernel, samples) -> np.ndarray:
    """Exactly symmetric Gram matrix over a SampleSet."""
    if samples.n < 1:
        raise ParameterError("sample set is empty")
    return kernel.gram_matrix(samples.ts, samples.xs, samples.us)


@dataclass(frozen=True)
class GramFactor:
    """Upper-triangular R with K + jitter*I = R'R, plus the jitter used."""

    R: np.ndarray
    jitter: float

    @property
    def feature_rows(self) -> np.ndarray:
        """Square feature matrix with one row per sample (rows = columns of R)."""
        return self.R.T

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.log(np.diag(self.R)).sum())


def cholesky_jitter(K: np.ndarray, initial: float = 1e-8,
                    max_jitter: float = 1e-2) -> GramFactor:
    """Cholesky of K + jitter*I, escalating jitter 10x on failure.

    The initial jitter is always applied, even when K is comfortably
    positive definite, so a given sample set maps to one fixed factor.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ParameterError("K must be square")
    jitter = initial
    while jitter <= max_jitter:
        try:
            R = scipy.linalg.cholesky(
                K + jitter * np.eye(K.shape[0]), lower=False,
                check_finite=False)
            return GramFactor(R=R, jitter=jitter)
        except scipy.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(
        f"Gram matrix not factorizable below jitter {max_jitter}",
        jitter=jitter / 10.0)
