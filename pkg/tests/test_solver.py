import numpy as np
import pytest

import hjb_ksos.solver as solver_mod
from hjb_ksos import (ConvergenceError, ParameterError, SolverConfig,
                      assemble, build_sample_set, cholesky_jitter,
                      damped_newton, double_integrator, dual_gradient,
                      dual_hessian, dual_objective, gram, guided_embedding,
                      guided_feature_matrix, homotopy_stages, make_kernel,
                      recover_primal, sine_monomial_basis, solve_lp,
                      solve_sos)
from hjb_ksos.assembly import ConstraintSystem
from hjb_ksos.features import linear_decay_basis
from hjb_ksos.ocp import Box, control_only_problem
from hjb_ksos.solver import _DualWorkspace


def random_instance(rng, n, m, q, C=0.3):
    A = rng.normal(0.0, 0.7, (n, m))
    b = rng.uniform(0.5, 2.0, n)
    c = rng.normal(0.0, 0.5, m)
    Phi = rng.normal(0.0, 0.8, (n, q))
    cs = ConstraintSystem(A=A, b=b, c=c, C=C, eta=0.0,
                          objective_mode="all_samples")
    return cs, Phi


def central_diff(f, x, h):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def test_config_validation():
    with pytest.raises(ParameterError):
        SolverConfig(lam=-1.0)
    with pytest.raises(ParameterError):
        SolverConfig(epsilon=0.0)
    with pytest.raises(ParameterError):
        SolverConfig(n_stages=0)
    with pytest.raises(ParameterError):
        SolverConfig(stage_factor=1.0)
    with pytest.raises(ParameterError):
        SolverConfig(max_extra_stages=-1)
    with pytest.raises(ParameterError):
        SolverConfig(dec_cap=0.0)


def test_homotopy_stage_scaling():
    cfg = SolverConfig(lam_theta=1e-6, epsilon=1e-4, n_stages=3,
                       stage_factor=10.0)
    stages = homotopy_stages(cfg)
    assert len(stages) == 3
    assert stages[-1].epsilon == cfg.epsilon
    assert stages[0].epsilon == pytest.approx(1e-2)
    assert stages[1].epsilon == pytest.approx(1e-3)
    # only the barrier weight moves along the ladder
    assert all(s.lam_theta == cfg.lam_theta for s in stages)
    assert all(s.gamma == cfg.gamma for s in stages)


def test_objective_hand_instance():
    # n = m = q = 1, every datum 1, C = 0.3: each term is elementary
    cs = ConstraintSystem(A=np.ones((1, 1)), b=np.ones(1), c=np.ones(1),
                          C=0.3, eta=0.0, objective_mode="all_samples")
    Phi = np.ones((1, 1))
    cfg = SolverConfig(lam=1.0, lam_theta=1.0, gamma=1.0, epsilon=1.0)
    alpha = np.ones(1)
    want = (1.0               # alpha . b
            + 4.0 / 4.0       # (c + A'alpha)^2 / (4 lam_theta)
            + 1.0 / 4.0       # |alpha|^2 / (4 gamma)
            - np.log(2.0)     # -eps logdet(lam + phi^2 alpha)
            + 1.0 * (0.0 - 1.0)   # eps q (log eps - 1)
            + 0.3)
    assert dual_objective(cs, Phi, cfg, alpha) == pytest.approx(want,
                                                                abs=1e-14)


@pytest.mark.parametrize("seed,n,m,q", [(0, 12, 4, 3), (1, 20, 7, 5),
                                        (2, 8, 3, 8)])
def test_gradient_hessian_match_finite_differences(seed, n, m, q):
    rng = np.random.default_rng(seed)
    cs, Phi = random_instance(rng, n, m, q)
    cfg = SolverConfig(lam=0.7, lam_theta=0.3, gamma=2.0, epsilon=0.5)
    alpha = rng.uniform(0.2, 1.0, n)

    def f(a):
        return dual_objective(cs, Phi, cfg, a)

    g = dual_gradient(cs, Phi, cfg, alpha)
    g_fd = central_diff(f, alpha, 1e-6)
    assert np.abs(g - g_fd).max() / max(1.0, np.abs(g).max()) < 1e-7

    H = dual_hessian(cs, Phi, cfg, alpha)
    H_fd = np.column_stack([
        central_diff(lambda a: dual_gradient(cs, Phi, cfg, a)[i], alpha, 1e-6)
        for i in range(n)])
    assert np.abs(H - H_fd).max() / np.abs(H).max() < 1e-6
    assert np.abs(H - H.T).max() < 1e-12


def test_newton_hand_root():
    # b = 0, A = 0, c = 0, phi = lam = eps = gamma = 1:
    # F(alpha) = alpha^2/4 - log(1 + alpha) + const, minimized where
    # alpha^2 + alpha - 2 = 0, i.e. alpha* = 1
    cs = ConstraintSystem(A=np.zeros((1, 1)), b=np.zeros(1), c=np.zeros(1),
                          C=0.0, eta=0.0, objective_mode="all_samples")
    cfg = SolverConfig(lam=1.0, lam_theta=1.0, gamma=1.0, epsilon=1.0,
                       newton_tol=1e-12)
    state = damped_newton(cs, np.ones((1, 1)), cfg,
                          alpha0=np.array([0.25]))
    assert abs(state.alpha[0] - 1.0) < 1e-10
    hist = state.objective_history
    assert np.all(np.diff(hist) <= 1e-14)


@pytest.mark.parametrize("seed,n,m,q,label", [
    (3, 25, 4, 3, "dense"),
    (4, 40, 3, 2, "dense+woodbury"),
    (5, 30, 5, 30, "inverse_gram"),
])
def test_workspace_strategies_agree_with_reference(monkeypatch, seed, n, m,
                                                   q, label):
    if label == "inverse_gram":
        monkeypatch.setattr(solver_mod, "_INVERSE_GRAM_MIN_N", 10)
    rng = np.random.default_rng(seed)
    cs, Phi = random_instance(rng, n, m, q)
    if label == "inverse_gram":
        # square full-rank factor, as produced by cholesky_jitter
        Phi = cholesky_jitter(Phi @ Phi.T + np.eye(n)).feature_rows
    cfg = SolverConfig(lam=0.9, lam_theta=0.2, gamma=3.0, epsilon=0.4)
    ws = _DualWorkspace(cs, Phi, cfg.lam)
    assert ws.strategy + ("+woodbury" if ws.woodbury else "") == label
    alpha = rng.uniform(0.3, 1.1, n)
    F, g, solve, diag_w = ws.evaluate(alpha, cfg)
    assert F == pytest.approx(dual_objective(cs, Phi, cfg, alpha), rel=1e-12)
    g_ref = dual_gradient(cs, Phi, cfg, alpha)
    assert np.abs(g - g_ref).max() < 1e-9 * max(1.0, np.abs(g_ref).max())
    H_ref = dual_hessian(cs, Phi, cfg, alpha)
    step_ref = np.linalg.solve(H_ref, g_ref)
    assert np.abs(solve(g) - step_ref).max() < 1e-8 * np.abs(step_ref).max()
    w_ref = np.einsum("ij,jk,ik->i", Phi,
                      np.linalg.inv(cfg.lam * np.eye(Phi.shape[1])
                                    + Phi.T @ (alpha[:, None] * Phi)), Phi)
    assert np.abs(diag_w - w_ref).max() < 1e-8


def test_solve_sos_small_instance_converges():
    rng = np.random.default_rng(9)
    cs, Phi = random_instance(rng, 30, 5, 4)
    cfg = SolverConfig(lam=1e-2, lam_theta=1e-3, gamma=1e2, epsilon=1e-3,
                       newton_tol=1e-9)
    sol = solve_sos(cs, Phi, cfg)
    assert sol.info["final_decrement"] <= 1e-9
    assert sol.info["stage_epsilons"][-1] == cfg.epsilon
    assert len(sol.info["stage_epsilons"]) >= cfg.n_stages
    for hist in sol.info["objective_histories"]:
        assert np.all(np.diff(hist) <= 1e-10 * max(1.0, abs(hist[0])))
    # gradient of the dual at the solution is the constraint residual
    g = dual_gradient(cs, Phi, cfg, sol.alpha)
    assert np.abs(g).max() < 1e-6
    assert np.array_equal(sol.delta, -sol.alpha / (2.0 * cfg.gamma))


def test_adaptive_homotopy_extends_cold_starts():
    rng = np.random.default_rng(10)
    cs, Phi = random_instance(rng, 40, 6, 5)
    hard = SolverConfig(lam=1e-3, lam_theta=1e-6, gamma=1e2, epsilon=1e-5,
                        newton_tol=1e-7, n_stages=2)
    sol = solve_sos(cs, Phi, hard)
    assert len(sol.info["stage_epsilons"]) > 2
    assert max(sol.info["stage_iterations"]) < 200

    easy = SolverConfig(lam=1.0, lam_theta=0.5, gamma=1.0, epsilon=0.5,
                        newton_tol=1e-8, n_stages=2)
    sol = solve_sos(cs, Phi, easy)
    assert len(sol.info["stage_epsilons"]) == 2


def test_adaptive_homotopy_can_be_disabled():
    rng = np.random.default_rng(11)
    cs, Phi = random_instance(rng, 15, 3, 2)
    cfg = SolverConfig(lam=1e-2, lam_theta=1e-3, gamma=10.0, epsilon=1e-3,
                       newton_tol=1e-8, n_stages=3, dec_cap=np.inf,
                       max_newton_iters=5000)
    sol = solve_sos(cs, Phi, cfg)
    assert len(sol.info["stage_epsilons"]) == 3


def test_convergence_error_carries_stage():
    rng = np.random.default_rng(12)
    cs, Phi = random_instance(rng, 30, 5, 4)
    cfg = SolverConfig(lam=1e-3, lam_theta=1e-5, gamma=1e3, epsilon=1e-4,
                       max_newton_iters=2, newton_tol=1e-10)
    with pytest.raises(ConvergenceError) as err:
        solve_sos(cs, Phi, cfg)
    assert err.value.stage is not None
    assert err.value.decrement > 0


def test_recover_primal_consistency():
    rng = np.random.default_rng(13)
    cs, Phi = random_instance(rng, 25, 4, 3)
    cfg = SolverConfig(lam=1e-2, lam_theta=0.3, gamma=2.0, epsilon=0.05,
                       newton_tol=1e-11)
    state = damped_newton(cs, Phi, cfg)
    sol = recover_primal(cs, Phi, cfg, state, form_sos_matrix=True)
    B = sol.sos_matrix
    assert np.abs(B - B.T).max() < 1e-12
    assert np.linalg.eigvalsh(B).min() > 0
    # explicit residual recomputation agrees with the gradient shortcut
    lazy = recover_primal(cs, Phi, cfg, state, form_sos_matrix=False)
    assert lazy.sos_matrix is None
    assert np.abs(sol.info["residuals"] - lazy.info["residuals"]).max() < 1e-8
    assert np.abs(sol.theta - lazy.theta).max() == 0.0
    # stationarity in theta: 2 lam_theta theta = c + A'alpha
    assert np.abs(2 * cfg.lam_theta * sol.theta
                  - (cs.c + cs.A.T @ sol.alpha)).max() < 1e-12


def test_kkt_residuals_tiny_at_both_barrier_weights():
    # the equality residual equals the dual gradient, so a converged solve
    # leaves it orders of magnitude under the O(1) data scale at any epsilon
    rng = np.random.default_rng(14)
    cs, Phi = random_instance(rng, 20, 4, 3)
    for eps in (1e-3, 1e-5):
        cfg = SolverConfig(lam=1e-2, lam_theta=1e-3, gamma=1e2, epsilon=eps,
                           newton_tol=1e-8)
        sol = solve_sos(cs, Phi, cfg)
        assert sol.info["residual_max"] < 1e-7


def test_solve_lp_example1_closed_form():
    # f = 0, M = 0, L = (u - 0.3)^2 + 0.1: value function over the model
    # theta (1 - t/T) reaches theta* = min_i L(u_i) at tight penalties
    box = Box(lo=np.array([-1.0]), hi=np.array([1.0]))
    problem = control_only_problem(lambda u: (u - 0.3) ** 2 + 0.1, box)
    basis = linear_decay_basis(problem.T)
    samples = build_sample_set(problem, 7, 1, 21)
    cs = assemble(problem, basis, samples)
    cfg = SolverConfig(lam_theta=1e-8, gamma=1e8)
    sol = solve_lp(cs, cfg)
    us = samples.u_points[:, 0]
    best = ((us - 0.3) ** 2 + 0.1).min()
    assert abs(sol.theta[0] - best) < 1e-4
    assert sol.info["min_residual"] > -1e-6
    assert sol.sos_matrix is None and sol.alpha is None


def test_solve_lp_respects_binding_constraints():
    # minimize over two constraints with known active set
    A = np.array([[-1.0], [1.0]])
    b = np.array([2.0, 0.5])
    c = np.array([1.0])
    cs = ConstraintSystem(A=A, b=b, c=c, C=0.0, eta=0.0,
                          objective_mode="all_samples")
    cfg = SolverConfig(lam_theta=1e-10, gamma=1e10)
    sol = solve_lp(cs, cfg)
    # maximize c.theta subject to theta <= 2, theta >= -0.5
    assert abs(sol.theta[0] - 2.0) < 1e-6


def test_guided_embedding_layout():
    T = 1.0
    x = np.array([0.3, -0.4])
    u = np.array([5.0])
    vec = guided_embedding(0.0, x, u, T, q_t=5, u_scale=10.0)
    assert vec.shape == (13,)
    assert vec[0] == 0.5
    assert np.array_equal(vec[1:3], x)
    # at t = T every sine block vanishes but u and x blocks survive
    end = guided_embedding(T, x, u, T)
    assert np.abs(end[3:]).max() == 0.0
    assert np.array_equal(end[:3], vec[:3])
    with pytest.raises(ParameterError):
        guided_embedding(0.0, x, u, T, q_t=0)


def test_guided_feature_matrix_matches_pointwise():
    problem = double_integrator()
    samples = build_sample_set(problem, 3, 4, 2)
    M = guided_feature_matrix(samples, problem.T, q_t=5, u_scale=10.0)
    assert M.shape == (samples.n, 13)
    for i in (0, 7, samples.n - 1):
        row = guided_embedding(samples.ts[i], samples.xs[i], samples.us[i],
                               problem.T)
        assert np.abs(M[i] - row).max() < 1e-14


def test_thin_and_square_factors_agree_on_solution():
    problem = double_integrator()
    basis = sine_monomial_basis(m_t=10, T=problem.T)
    samples = build_sample_set(problem, 5, 4, 4)
    cs = assemble(problem, basis, samples)
    kernel = make_kernel("control_affine")
    cfg = SolverConfig(lam=1e-3, lam_theta=1e-4, gamma=1e2, epsilon=1e-4,
                       newton_tol=1e-9, recover_sos_matrix=False)
    sol_thin = solve_sos(cs, kernel.thin_features(samples), cfg)
    K = gram(kernel, samples)
    sol_full = solve_sos(cs, cholesky_jitter(K, initial=1e-12).feature_rows,
                         cfg)
    scale = np.abs(sol_full.theta).max()
    assert np.abs(sol_thin.theta - sol_full.theta).max() < 1e-6 * scale
    assert np.abs(sol_thin.alpha - sol_full.alpha).max() < 1e-6 * max(
        1.0, np.abs(sol_full.alpha).max())
