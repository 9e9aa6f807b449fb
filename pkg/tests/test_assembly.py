import numpy as np
import pytest

from hjb_ksos import (AssemblyError, ParameterError, ValueModel, assemble,
                      build_sample_set, double_integrator,
                      sine_monomial_basis)
from hjb_ksos.assembly import OBJECTIVE_MODES


@pytest.fixture(scope="module")
def problem():
    return double_integrator()


@pytest.fixture(scope="module")
def basis(problem):
    return sine_monomial_basis(m_t=10, T=problem.T)


@pytest.fixture(scope="module")
def samples(problem):
    return build_sample_set(problem, 4, 3, 3)


def test_shapes_and_metadata(problem, basis, samples):
    cs = assemble(problem, basis, samples)
    assert cs.A.shape == (samples.n, basis.dim)
    assert cs.b.shape == (samples.n,)
    assert cs.c.shape == (basis.dim,)
    assert cs.n == samples.n and cs.m == basis.dim
    assert cs.eta == 0.0
    assert cs.objective_mode == "all_samples"
    assert OBJECTIVE_MODES == ("all_samples", "initial_points")


def test_constant_term_hand_value(problem, basis, samples):
    # b_i = L + grad M . f + eta lap M with L = |x|^2 + 0.1 u^2, M = |x|^2
    cs = assemble(problem, basis, samples)
    i = 17
    t, x, u = samples.ts[i], samples.xs[i], samples.us[i]
    L = x @ x + 0.1 * u[0] ** 2
    f = np.array([x[1], u[0]])
    assert abs(cs.b[i] - (L + 2.0 * x @ f)) < 1e-12

    cs_eta = assemble(problem, basis, samples, eta=0.25)
    assert np.abs(cs_eta.b - cs.b - 0.25 * 4.0).max() < 1e-12


def test_rows_apply_hjb_operator_to_model(problem, basis, samples):
    # for any theta, a_i . theta must equal dV/dt + grad V . f + eta lap V
    # of the pure feature part of the model
    rng = np.random.default_rng(5)
    theta = rng.normal(size=basis.dim)
    zero = np.zeros(basis.dim)
    for eta in (0.0, 0.37):
        cs = assemble(problem, basis, samples, eta=eta)
        model = ValueModel(basis, theta, problem)
        base = ValueModel(basis, zero, problem)
        for i in (0, 5, 23, samples.n - 1):
            t, x, u = samples.ts[i], samples.xs[i], samples.us[i]
            f = np.array([x[1], u[0]])
            want = (model.dt(t, x) - base.dt(t, x)
                    + (model.grad_x(t, x) - base.grad_x(t, x)) @ f
                    + eta * (model.laplacian(t, x) - base.laplacian(t, x)))
            assert abs(cs.A[i] @ theta - want) < 1e-11


def test_model_constraint_value_matches_full_operator(problem, basis,
                                                      samples):
    # b_i + a_i . theta = L + dV/dt + grad V . f + eta lap V for the full
    # model V = theta . psi + M
    rng = np.random.default_rng(6)
    theta = rng.normal(size=basis.dim)
    eta = 0.11
    cs = assemble(problem, basis, samples, eta=eta)
    model = ValueModel(basis, theta, problem)
    i = 29
    t, x, u = samples.ts[i], samples.xs[i], samples.us[i]
    f = np.array([x[1], u[0]])
    L = x @ x + 0.1 * u[0] ** 2
    want = (L + model.dt(t, x) + model.grad_x(t, x) @ f
            + eta * model.laplacian(t, x))
    assert abs(cs.b[i] + cs.A[i] @ theta - want) < 1e-11


def test_objective_all_samples(problem, basis, samples):
    cs = assemble(problem, basis, samples)
    rows = np.array([basis.psi(t, x)
                     for t, x in zip(samples.ts, samples.xs)])
    assert np.abs(cs.c - rows.mean(axis=0)).max() < 1e-13
    M = np.array([x @ x for x in samples.xs])
    assert abs(cs.C - M.mean()) < 1e-13


def test_objective_initial_points(problem, basis, samples):
    cs = assemble(problem, basis, samples, objective_mode="initial_points")
    rows = np.array([basis.psi(0.0, x) for x in samples.x_points])
    assert np.abs(cs.c - rows.mean(axis=0)).max() < 1e-13
    M = np.array([x @ x for x in samples.x_points])
    assert abs(cs.C - M.mean()) < 1e-13
    with pytest.raises(ParameterError):
        assemble(problem, basis, samples, objective_mode="bogus")


def test_loop_fallback_matches_vectorized(problem, basis, samples):
    from dataclasses import replace
    slow = replace(problem, vectorized=False)
    fast_cs = assemble(problem, basis, samples, eta=0.2)
    slow_cs = assemble(slow, basis, samples, eta=0.2)
    assert np.abs(fast_cs.A - slow_cs.A).max() < 1e-12
    assert np.abs(fast_cs.b - slow_cs.b).max() < 1e-12
    assert np.abs(fast_cs.c - slow_cs.c).max() < 1e-13


def test_non_finite_data_rejected(problem, basis, samples):
    from dataclasses import replace
    bad = replace(problem, vectorized=False,
                  dynamics=lambda t, x, u: np.array([np.nan, 0.0]))
    with pytest.raises(AssemblyError) as err:
        assemble(bad, basis, samples)
    assert "row" in str(err.value)
