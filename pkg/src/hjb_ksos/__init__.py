"""Value-function approximation for finite-horizon optimal control.

Approximates the optimal value function from below by fitting a feature
model whose Hamiltonian stays nonnegative on sampled (t, x, u) points,
either through a regularized LP or through sum-of-squares programs solved
via a smooth log-barrier dual.
"""

from .assembly import ConstraintSystem, assemble
from .errors import (AssemblyError, ConvergenceError, DivergenceError,
                     DomainError, FactorizationError, HjbKsosError,
                     NumericalError, ParameterError)
from .evaluation import (EvalReport, evaluate_model, greedy_policy,
                         lqr_sos_residual, lqr_sos_residual_stationary,
                         lqr_sos_residuals, policy_cost, project_truth,
                         state_grid, time_state_grid, value_error)
from .features import (FeatureBasis, ValueModel, kappa, kappa_dt,
                       linear_decay_basis, phi_quadratic, phi_quadratic_jac,
                       sine_monomial_basis)
from .kernels import (ControlAffineKernel, ExponentialKernel, GramFactor,
                      Kernel, PolynomialKernel, cholesky_jitter, gram,
                      make_kernel)
from .ocp import (Box, ControlProblem, LqrProblem, LqrValueFunction,
                  RiccatiSolution, Trajectory, algebraic_riccati_solve,
                  control_only_problem, double_integrator, hamiltonian,
                  lqr_control_problem, lqr_value, riccati_backward_solve,
                  rollout)
from .sampling import SampleSet, build_sample_set, sobol_points, uniform_grid
from .solver import (DualState, Solution, SolverConfig, damped_newton,
                     dual_gradient, dual_hessian, dual_objective,
                     guided_embedding, guided_feature_matrix,
                     homotopy_stages, recover_primal, solve_lp, solve_sos)

__version__ = "0.1.0"
