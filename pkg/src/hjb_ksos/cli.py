"""Experiment driver: hyperparameter sweeps against the LQR ground truth.

``hjb-ksos run`` solves the benchmark problem with each requested method
over a grid of sample counts and hyperparameters, scores every fit by value
error and greedy-policy rollout cost, and writes one results.csv row per
solve.  A projection of the exact value function onto the feature span is
scored the same way as an accuracy ceiling (method name "projection").

results.csv columns, in order:

    method, n_t, n_x, n_u, n, lambda, lambda_theta, gamma, epsilon, eta,
    value_error, policy_cost, newton_iters, final_decrement, solve_seconds,
    status

status is "ok" or "error:<ExceptionName>"; failed rows carry nan metrics.
All columns except solve_seconds are deterministic for a fixed config.
The best row of a (method, sample count) cell is the ok row with smallest
value_error, ties broken by the lexicographically smallest
(lambda, lambda_theta, gamma).
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from . import evaluation
from .assembly import assemble
from .errors import HjbKsosError, ParameterError
from .features import ValueModel, sine_monomial_basis
from .kernels import cholesky_jitter, gram, make_kernel
from .ocp import LqrValueFunction, double_integrator, riccati_backward_solve
from .sampling import build_sample_set
from .solver import (SolverConfig, guided_feature_matrix, solve_lp,
                     solve_sos)

RESULT_COLUMNS = ("method", "n_t", "n_x", "n_u", "n", "lambda",
                  "lambda_theta", "gamma", "epsilon", "eta", "value_error",
                  "policy_cost", "newton_iters", "final_decrement",
                  "solve_seconds", "status")

METHODS = ("lp", "guided", "kernel")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "double_integrator"
    m_t: int = 10
    q_t: int = 5
    guided_u_scale: float = 10.0
    kernel_variant: str = "control_affine"
    kernel_u_scale: float = 100.0
    kernel_t_scale: float = 1.0
    kernel_degree: int = 2
    kernel_sigma: float = 1.0
    jitter: float = 1e-8
    n_t: int = 20
    skip: int = 1
    points: tuple = (5, 10, 15, 20)
    methods: tuple = METHODS
    epsilon: float = 1e-4
    eta: float = 0.0
    newton_tol: float = 1e-6
    max_newton_iters: int = 500
    n_stages: int = 2
    stage_factor: float = 10.0
    objective_mode: str = "all_samples"
    rollout_steps: int = 1000
    riccati_steps: int = 1000
    eval_n_t: int = 10
    eval_n_side: int = 10
    lp_lambda_theta: tuple = (1e-6,)
    lp_gamma: tuple = (1e2, 1e4)
    # the slack penalty competes with an averaged objective, so the best
    # SoS gamma shrinks roughly like 1/n; the grids span that range
    guided_lambda: tuple = (1e-3,)
    guided_lambda_theta: tuple = (1e-6,)
    guided_gamma: tuple = (1e-3, 3e-3, 1e-2)
    kernel_lambda: tuple = (1e-3,)
    kernel_lambda_theta: tuple = (1e-6,)
    kernel_gamma: tuple = (1e-3, 3e-3, 1e-2)
    dump_values: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.problem != "double_integrator":
            raise ParameterError(f"unknown problem {self.problem!r}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ParameterError(f"unknown methods: {sorted(unknown)}")
        if not self.points:
            raise ParameterError("sweep needs at least one point")


_SECTION_FIELDS = {
    "problem": {"name": "problem"},
    "basis": {"m_t": "m_t", "q_t": "q_t", "guided_u_scale": "guided_u_scale"},
    "kernel": {"variant": "kernel_variant", "u_scale": "kernel_u_scale",
               "t_scale": "kernel_t_scale", "degree": "kernel_degree",
               "sigma": "kernel_sigma", "jitter": "jitter"},
    "sampling": {"n_t": "n_t", "skip": "skip"},
    "solver": {"epsilon": "epsilon", "eta": "eta", "newton_tol": "newton_tol",
               "max_newton_iters": "max_newton_iters",
               "n_stages": "n_stages", "stage_factor": "stage_factor",
               "objective_mode": "objective_mode",
               "rollout_steps": "rollout_steps",
               "riccati_steps": "riccati_steps"},
    "sweep": {"points": "points", "methods": "methods",
              "lp_lambda_theta": "lp_lambda_theta", "lp_gamma": "lp_gamma",
              "guided_lambda": "guided_lambda",
              "guided_lambda_theta": "guided_lambda_theta",
              "guided_gamma": "guided_gamma",
              "kernel_lambda": "kernel_lambda",
              "kernel_lambda_theta": "kernel_lambda_theta",
              "kernel_gamma": "kernel_gamma",
              "dump_values": "dump_values",
              "workers": "workers"},
}


def load_config(path) -> ExperimentConfig:
    """ExperimentConfig from a TOML file; unknown keys are an error."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    kwargs = {}
    for section, entries in raw.items():
        if section not in _SECTION_FIELDS:
            raise ParameterError(f"unknown config section [{section}]")
        if not isinstance(entries, dict):
            raise ParameterError(f"[{section}] must be a table")
        mapping = _SECTION_FIELDS[section]
        for key, value in entries.items():
            if key not in mapping:
                raise ParameterError(
                    f"unknown key {key!r} in section [{section}]")
            if isinstance(value, list):
                value = tuple(value)
            kwargs[mapping[key]] = value
    return ExperimentConfig(**kwargs)


def _solver_config(cfg: ExperimentConfig, lam: float, lam_theta: float,
                   gamma: float) -> SolverConfig:
    return SolverConfig(
        lam=lam, lam_theta=lam_theta, gamma=gamma, epsilon=cfg.epsilon,
        newton_tol=cfg.newton_tol, max_newton_iters=cfg.max_newton_iters,
        n_stages=cfg.n_stages, stage_factor=cfg.stage_factor,
        recover_sos_matrix=False)


def _task_grid(cfg: ExperimentConfig):
    """All (method, point, lam, lam_theta, gamma) tasks, in report order."""
    tasks = []
    for method in cfg.methods:
        if method == "lp":
            combos = [(0.0, lt, g) for lt in cfg.lp_lambda_theta
                      for g in cfg.lp_gamma]
        elif method == "guided":
            combos = [(l, lt, g) for l in cfg.guided_lambda
                      for lt in cfg.guided_lambda_theta
                      for g in cfg.guided_gamma]
        else:
            combos = [(l, lt, g) for l in cfg.kernel_lambda
                      for lt in cfg.kernel_lambda_theta
                      for g in cfg.kernel_gamma]
        for point in cfg.points:
            for combo in combos:
                tasks.append((method, int(point)) + combo)
    return tasks


def _run_task(cfg: ExperimentConfig, task) -> dict:
    method, point, lam, lam_theta, gamma = task
    problem = double_integrator()
    basis = sine_monomial_basis(m_t=cfg.m_t, T=problem.T)
    samples = build_sample_set(problem, cfg.n_t, point, point, skip=cfg.skip)
    riccati = riccati_backward_solve(problem.lqr, cfg.riccati_steps)
    truth = LqrValueFunction(riccati)
    ts, X = evaluation.time_state_grid(problem, cfg.eval_n_t, cfg.eval_n_side)

    row = {
        "method": method, "n_t": cfg.n_t, "n_x": point, "n_u": point,
        "n": samples.n, "lambda": lam, "lambda_theta": lam_theta,
        "gamma": gamma, "epsilon": 0.0 if method == "lp" else cfg.epsilon,
        "eta": cfg.eta, "value_error": float("nan"),
        "policy_cost": float("nan"), "newton_iters": 0,
        "final_decrement": float("nan"), "solve_seconds": float("nan"),
        "status": "ok", "theta": None,
    }
    start = time.perf_counter()
    try:
        cs = assemble(problem, basis, samples, eta=cfg.eta,
                      objective_mode=cfg.objective_mode)
        scfg = _solver_config(cfg, max(lam, 1e-30), lam_theta, gamma)
        if method == "lp":
            sol = solve_lp(cs, scfg)
        elif method == "guided":
            Phi = guided_feature_matrix(samples, problem.T, q_t=cfg.q_t,
                                        u_scale=cfg.guided_u_scale)
            sol = solve_sos(cs, Phi, scfg)
        else:
            kernel = make_kernel(cfg.kernel_variant,
                                 u_scale=cfg.kernel_u_scale,
                                 t_scale=cfg.kernel_t_scale,
                                 degree=cfg.kernel_degree,
                                 sigma=cfg.kernel_sigma)
            Phi = kernel.thin_features(samples)
            if Phi is None:
                K = gram(kernel, samples)
                Phi = cholesky_jitter(K, initial=cfg.jitter).feature_rows
                del K
            sol = solve_sos(cs, Phi, scfg)
        model = ValueModel(basis, sol.theta, problem)
        report = evaluation.evaluate_model(
            problem, model, truth, ts, X, n_side=cfg.eval_n_side,
            n_steps=cfg.rollout_steps)
        row.update({
            "value_error": report.value_error,
            "policy_cost": report.policy_cost,
            "newton_iters": int(sol.info.get("newton_iters", 0)),
            "final_decrement": float(sol.info.get("final_decrement",
                                                  float("nan"))),
            "theta": sol.theta.tolist(),
        })
    except HjbKsosError as err:
        row["status"] = f"error:{type(err).__name__}"
    row["solve_seconds"] = time.perf_counter() - start
    return row


def _projection_rows(cfg: ExperimentConfig) -> list[dict]:
    problem = double_integrator()
    basis = sine_monomial_basis(m_t=cfg.m_t, T=problem.T)
    riccati = riccati_backward_solve(problem.lqr, cfg.riccati_steps)
    truth = LqrValueFunction(riccati)
    ts, X = evaluation.time_state_grid(problem, cfg.eval_n_t, cfg.eval_n_side)
    theta = evaluation.project_truth(basis, truth, problem, ts, X)
    model = ValueModel(basis, theta, problem)
    report = evaluation.evaluate_model(
        problem, model, truth, ts, X, n_side=cfg.eval_n_side,
        n_steps=cfg.rollout_steps)
    rows = []
    for point in cfg.points:
        rows.append({
            "method": "projection", "n_t": cfg.n_t, "n_x": int(point),
            "n_u": int(point), "n": cfg.n_t * int(point) ** 2, "lambda": 0.0,
            "lambda_theta": 0.0, "gamma": 0.0, "epsilon": 0.0, "eta": 0.0,
            "value_error": report.value_error,
            "policy_cost": report.policy_cost, "newton_iters": 0,
            "final_decrement": 0.0, "solve_seconds": 0.0, "status": "ok",
            "theta": theta.tolist(),
        })
    return rows


def best_rows(rows: list[dict]) -> dict:
    """Best ok row per (method, n_x): min value_error, ties by smallest
    (lambda, lambda_theta, gamma)."""
    cells: dict = {}
    for row in rows:
        if row["status"] != "ok" or not np.isfinite(row["value_error"]):
            continue
        key = (row["method"], row["n_x"])
        rank = (row["value_error"], row["lambda"], row["lambda_theta"],
                row["gamma"])
        if key not in cells or rank < cells[key][0]:
            cells[key] = (rank, row)
    return {key: row for key, (rank, row) in cells.items()}


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_results(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_format_cell(row[col]) for col in RESULT_COLUMNS])


def dump_value_function(model, truth, problem, path, n_t: int = 10,
                        n_side: int = 10) -> None:
    """Grid dump of model and true values: t, x1, x2, v_model, v_true."""
    ts, X = evaluation.time_state_grid(problem, n_t, n_side)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x1", "x2", "v_model", "v_true"])
        for t in ts:
            vm = np.asarray(model(t, X), dtype=float)
            vt = np.asarray(truth(t, X), dtype=float)
            for row_x, m_val, t_val in zip(X, vm, vt):
                writer.writerow([repr(float(t))]
                                + [repr(float(v)) for v in row_x]
                                + [repr(float(m_val)), repr(float(t_val))])


def run_experiment(cfg: ExperimentConfig, out_dir,
                   workers: int | None = None,
                   methods: tuple | None = None,
                   log=print) -> list[dict]:
    """Run the sweep, write results.csv and value dumps, return the rows."""
    if methods:
        cfg = replace(cfg, methods=tuple(methods))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg.workers if workers is None else workers
    tasks = _task_grid(cfg)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, [cfg] * len(tasks), tasks))
    else:
        rows = []
        for task in tasks:
            row = _run_task(cfg, task)
            rows.append(row)
            log(f"{row['method']:10s} n={row['n']:<6d} "
                f"lam={row['lambda']:g} lam_theta={row['lambda_theta']:g} "
                f"gamma={row['gamma']:g} value_error={row['value_error']:.6g} "
                f"policy_cost={row['policy_cost']:.6g} "
                f"[{row['status']}] {row['solve_seconds']:.1f}s")
    rows.extend(_projection_rows(cfg))
    write_results(rows, out / "results.csv")

    if cfg.dump_values:
        problem = double_integrator()
        basis = sine_monomial_basis(m_t=cfg.m_t, T=problem.T)
        riccati = riccati_backward_solve(problem.lqr, cfg.riccati_steps)
        truth = LqrValueFunction(riccati)
        largest = max(cfg.points)
        best = best_rows(rows)
        for method in tuple(cfg.methods) + ("projection",):
            row = best.get((method, largest))
            if row is None or row["theta"] is None:
                continue
            model = ValueModel(basis, np.asarray(row["theta"]), problem)
            dump_value_function(model, truth, problem,
                                out / f"values_{method}.csv",
                                n_t=cfg.eval_n_t, n_side=cfg.eval_n_side)
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hjb-ksos",
        description="Value-function approximation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a sweep and write results.csv")
    run_p.add_argument("--config", type=Path, default=None,
                       help="TOML config (defaults apply when omitted)")
    run_p.add_argument("--out-dir", type=Path, required=True)
    run_p.add_argument("--workers", type=int, default=None)
    run_p.add_argument("--methods", type=str, default=None,
                       help="comma-separated subset of lp,guided,kernel")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        methods = tuple(args.methods.split(",")) if args.methods else None
        run_experiment(cfg, args.out_dir, workers=args.workers,
                       methods=methods)
    except HjbKsosError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
