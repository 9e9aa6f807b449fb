import numpy as np
import pytest

from hjb_ksos import (LqrValueFunction, ParameterError, ValueModel,
                      algebraic_riccati_solve, double_integrator,
                      evaluate_model, greedy_policy, lqr_sos_residual,
                      lqr_sos_residual_stationary, lqr_sos_residuals,
                      lqr_value, policy_cost, project_truth,
                      riccati_backward_solve, rollout, sine_monomial_basis,
                      time_state_grid, value_error)
from hjb_ksos.evaluation import (_QuadraticCostGreedyPolicy,
                                 _ScanningGreedyPolicy, state_grid)


@pytest.fixture(scope="module")
def problem():
    return double_integrator()


@pytest.fixture(scope="module")
def riccati(problem):
    return riccati_backward_solve(problem.lqr, 1000)


@pytest.fixture(scope="module")
def truth(riccati):
    return LqrValueFunction(riccati)


def test_time_state_grid_shapes(problem):
    ts, X = time_state_grid(problem, n_t=6, n_side=4)
    assert ts.shape == (6,)
    assert X.shape == (16, 2)
    assert ts[0] == 0.0 and ts[-1] == problem.T
    # corners of the state box are present
    assert any(np.array_equal(r, np.array([-1.0, -1.0])) for r in X)
    assert any(np.array_equal(r, np.array([1.0, 1.0])) for r in X)


def test_value_error_zero_for_identical_handles(problem, truth):
    ts, X = time_state_grid(problem, 4, 5)
    assert value_error(truth, truth, ts, X) == 0.0


def test_value_error_known_offset(problem, truth):
    ts, X = time_state_grid(problem, 3, 4)

    def shifted(t, Xb):
        return np.asarray(truth(t, Xb)) + 0.5

    # (0.5)^2 per grid point
    want = 0.25 * 3 * 16
    assert abs(value_error(shifted, truth, ts, X) - want) < 1e-9


def test_greedy_policy_dispatch(problem, truth):
    pol = greedy_policy(problem, truth)
    assert isinstance(pol, _QuadraticCostGreedyPolicy)
    from dataclasses import replace
    plain = replace(problem, lqr=None)
    pol2 = greedy_policy(plain, truth)
    assert isinstance(pol2, _ScanningGreedyPolicy)


def test_greedy_on_truth_is_lqr_feedback(problem, riccati, truth):
    pol = greedy_policy(problem, truth)
    rng = np.random.default_rng(2)
    for _ in range(5):
        t = rng.uniform(0.0, 1.0)
        x = rng.uniform(-0.3, 0.3, 2)  # small so the box stays inactive
        want = -riccati.K_at(t) @ x
        assert np.abs(pol(t, x) - want).max() < 1e-12


def test_greedy_respects_control_box(problem, truth):
    pol = greedy_policy(problem, truth)
    u = pol(0.0, np.array([1.0, 1.0]) * 1.0)
    assert np.all(u >= -10.0) and np.all(u <= 10.0)


def test_scanning_greedy_matches_quadratic_form(problem, truth):
    from dataclasses import replace
    plain = replace(problem, lqr=None)
    scan = greedy_policy(plain, truth)
    closed = greedy_policy(problem, truth)
    for t, x in [(0.2, np.array([0.4, -0.2])), (0.8, np.array([-0.1, 0.3]))]:
        assert abs(scan(t, x)[0] - closed(t, x)[0]) < 1e-6


def test_policy_cost_matches_lqr_value(problem, riccati, truth):
    # rollouts under u = -K(t)x must reproduce x0'S(0)x0 on the eval grid
    pol = greedy_policy(problem, truth)
    X0 = state_grid(problem, 10)
    want = np.array([lqr_value(riccati, 0.0, x0) for x0 in X0]).mean()
    got = policy_cost(problem, pol, n_side=10, n_steps=1000)
    assert abs(got - want) < 1e-4


def test_policy_cost_batch_equals_loop(problem, truth):
    pol = greedy_policy(problem, truth)
    fast = policy_cost(problem, pol, n_side=3, n_steps=200)
    from dataclasses import replace
    slow_problem = replace(problem, vectorized=False)
    slow = policy_cost(slow_problem, pol, n_side=3, n_steps=200)
    assert abs(fast - slow) < 1e-10


def test_project_truth_recovers_representable_target(problem):
    basis = sine_monomial_basis(m_t=10, T=problem.T)
    rng = np.random.default_rng(8)
    theta_true = rng.normal(size=basis.dim)
    model = ValueModel(basis, theta_true, problem)
    ts, X = time_state_grid(problem, 10, 8)
    theta_hat = project_truth(basis, model, problem, ts, X)
    model_hat = ValueModel(basis, theta_hat, problem)
    assert value_error(model_hat, model, ts, X) < 1e-8


def test_projection_beats_solver_candidates(problem, truth):
    # projection is the representability floor: no theta does better
    basis = sine_monomial_basis(m_t=10, T=problem.T)
    ts, X = time_state_grid(problem, 10, 10)
    theta_star = project_truth(basis, truth, problem, ts, X)
    best = value_error(ValueModel(basis, theta_star, problem), truth, ts, X)
    rng = np.random.default_rng(21)
    for _ in range(5):
        theta = theta_star + rng.normal(0.0, 0.1, basis.dim)
        assert value_error(ValueModel(basis, theta, problem), truth, ts, X) \
            >= best


def test_sos_residual_zero_on_truth(problem, riccati):
    rng = np.random.default_rng(3)
    ts = rng.uniform(0.0, 1.0, 50)
    xs = rng.uniform(-1.0, 1.0, (50, 2))
    us = rng.uniform(-10.0, 10.0, (50, 1))
    res = lqr_sos_residuals(problem, riccati, ts, xs, us)
    assert np.abs(res).max() < 1e-8


def test_sos_residual_stationary_zero_at_are_solution(problem):
    S0 = algebraic_riccati_solve(problem.lqr)
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.uniform(-1.0, 1.0, 2)
        u = rng.uniform(-10.0, 10.0, 1)
        assert abs(lqr_sos_residual_stationary(problem.lqr, S0, x, u)) < 1e-10


def test_sos_residual_nonzero_off_truth(problem, riccati):
    # perturbing S breaks the identity, the residual must notice
    S_bad = riccati.S_at(0.0) + 0.05 * np.eye(2)
    r = lqr_sos_residual_stationary(problem.lqr, S_bad,
                                    np.array([0.5, 0.5]), np.array([1.0]))
    assert abs(r) > 1e-3


def test_sos_residual_requires_lqr(problem, riccati):
    from dataclasses import replace
    plain = replace(problem, lqr=None)
    with pytest.raises(ParameterError):
        lqr_sos_residual(plain, riccati, 0.5, np.zeros(2), np.zeros(1))


def test_evaluate_model_report(problem, riccati, truth):
    basis = sine_monomial_basis(m_t=10, T=problem.T)
    ts, X = time_state_grid(problem, 5, 5)
    theta = project_truth(basis, truth, problem, ts, X)
    model = ValueModel(basis, theta, problem)
    report = evaluate_model(problem, model, truth, ts, X, n_side=5,
                            n_steps=300)
    assert report.value_error >= 0.0
    # projected model is near-exact, its greedy policy near-optimal
    X0 = state_grid(problem, 5)
    want = np.array([lqr_value(riccati, 0.0, x0) for x0 in X0]).mean()
    assert report.policy_cost < want * 1.05
