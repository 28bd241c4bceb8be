import math

import numpy as np
import pytest
from pydantic import ValidationError

from birkhoff_ps.errors import SolverError
from birkhoff_ps.grid import make_grid
from birkhoff_ps.nlpsolve import SolverOptions, SolverStatus, estimate_multipliers, kkt_residual, solve
from birkhoff_ps.ocp import make_double_integrator, make_linear_quadratic
from birkhoff_ps.transcribe import NlpProblem, extract_trajectory, initial_guess, transcribe


def _bounded_quadratic():
    # min (x - 2)^2 with x <= 1
    return NlpProblem(
        n_vars=1,
        objective=lambda x: float((x[0] - 2.0) ** 2),
        objective_gradient=lambda x: np.array([2.0 * (x[0] - 2.0)]),
        upper=np.array([1.0]),
    )


def _inequality_quadratic():
    # min x^2 with x >= 1 as a general inequality
    return NlpProblem(
        n_vars=1,
        objective=lambda x: float(x[0] ** 2),
        objective_gradient=lambda x: np.array([2.0 * x[0]]),
        inequality=lambda x: np.array([x[0]]),
        inequality_jacobian=lambda x: np.array([[1.0]]),
        inequality_lower=[1.0],
        inequality_upper=[np.inf],
    )


def _equality_quadratic():
    # min (x^2 + y^2) / 2 with x + y = 2
    return NlpProblem(
        n_vars=2,
        objective=lambda x: float(0.5 * x @ x),
        objective_gradient=lambda x: np.array(x, dtype=float),
        equality=lambda x: np.array([x[0] + x[1] - 2.0]),
        equality_jacobian=lambda x: np.array([[1.0, 1.0]]),
    )


@pytest.mark.parametrize("method", ["slsqp", "auglag"])
def test_active_bound(method):
    sol = solve(_bounded_quadratic(), SolverOptions(method=method))
    assert sol.status is SolverStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0, abs=1e-8)
    assert sol.multipliers_bounds[0] == pytest.approx(2.0, abs=1e-6)
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("method", ["slsqp", "auglag"])
def test_active_inequality(method):
    sol = solve(_inequality_quadratic(), SolverOptions(method=method), x_init=[3.0])
    assert sol.success
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.multipliers_ineq[0] == pytest.approx(2.0, abs=1e-5)


@pytest.mark.parametrize("method", ["slsqp", "auglag"])
def test_equality_multiplier(method):
    sol = solve(_equality_quadratic(), SolverOptions(method=method))
    assert sol.success
    np.testing.assert_allclose(sol.x, [1.0, 1.0], atol=1e-7)
    assert sol.multipliers_eq[0] == pytest.approx(1.0, abs=1e-6)
    assert sol.residuals.feasibility <= 1e-8


def test_estimate_multipliers_on_active_set():
    nlp = _bounded_quadratic()
    lam, mu, zb = estimate_multipliers(nlp, np.array([1.0]), 1e-6)
    assert lam.size == 0 and mu.size == 0
    np.testing.assert_allclose(zb, [2.0])
    _, _, inactive = estimate_multipliers(nlp, np.array([0.0]), 1e-6)
    np.testing.assert_array_equal(inactive, [0.0])


def test_kkt_residual_at_solution():
    report = kkt_residual(_equality_quadratic(), [1.0, 1.0], [1.0])
    assert report.stationarity == 0.0
    assert report.feasibility == 0.0
    assert report.dual_scale == 1.0
    assert report.within(SolverOptions())


def test_kkt_residual_dual_scaling():
    report = kkt_residual(_equality_quadratic(), [1.0, 1.0], [1000.0])
    assert report.dual_scale == pytest.approx(10.0)
    assert report.scaled_stationarity == pytest.approx(999.0 / 10.0)


def test_kkt_residual_dimension_errors():
    nlp = _equality_quadratic()
    with pytest.raises(SolverError, match="point must have length 2"):
        kkt_residual(nlp, [1.0])
    with pytest.raises(SolverError, match="equality multipliers"):
        kkt_residual(nlp, [1.0, 1.0], [1.0, 2.0])


def test_start_vector_dimension_error():
    with pytest.raises(SolverError, match="x_init"):
        solve(_equality_quadratic(), x_init=[0.0, 0.0, 0.0])


def test_nan_equality_reports_index():
    nlp = NlpProblem(
        n_vars=1,
        objective=lambda x: 0.0,
        objective_gradient=lambda x: np.zeros(1),
        equality=lambda x: np.array([x[0], math.nan]),
        equality_jacobian=lambda x: np.array([[1.0], [0.0]]),
    )
    sol = solve(nlp)
    assert sol.status is SolverStatus.NUMERICAL_FAILURE
    assert sol.failed_constraint == 1


def test_nan_inequality_offset_by_equalities():
    nlp = NlpProblem(
        n_vars=1,
        objective=lambda x: 0.0,
        objective_gradient=lambda x: np.zeros(1),
        equality=lambda x: np.array([x[0]]),
        equality_jacobian=lambda x: np.array([[1.0]]),
        inequality=lambda x: np.array([x[0], math.nan]),
        inequality_jacobian=lambda x: np.array([[1.0], [1.0]]),
        inequality_lower=[-1.0, -1.0],
        inequality_upper=[1.0, 1.0],
    )
    sol = solve(nlp, SolverOptions(method="auglag"))
    assert sol.status is SolverStatus.NUMERICAL_FAILURE
    assert sol.failed_constraint == 2
    assert "inequality" in sol.message


def test_infeasible_problem():
    nlp = NlpProblem(
        n_vars=1,
        objective=lambda x: 0.0,
        objective_gradient=lambda x: np.zeros(1),
        equality=lambda x: np.array([x[0] - 5.0]),
        equality_jacobian=lambda x: np.array([[1.0]]),
        upper=np.array([1.0]),
    )
    sol = solve(nlp)
    assert sol.status is SolverStatus.INFEASIBLE
    assert sol.residuals.feasibility >= 4.0 - 1e-9


def test_solve_is_deterministic():
    nlp = transcribe(make_linear_quadratic(), make_grid("cgl", 8), "birkhoff-a")
    first = solve(nlp, x_init=initial_guess(nlp))
    second = solve(nlp, x_init=initial_guess(nlp))
    np.testing.assert_array_equal(first.x, second.x)
    assert first.iterations == second.iterations


def test_options_validation():
    with pytest.raises(ValidationError):
        SolverOptions(tol_feas=-1.0)
    with pytest.raises(ValidationError):
        SolverOptions(method="ipopt")
    with pytest.raises(ValidationError):
        SolverOptions(step_size=0.1)


def test_options_from_json5_file(tmp_path):
    path = tmp_path / "opts.json5"
    path.write_text("{\n  // looser run\n  method: 'auglag',\n  max_iter: 40,\n  tol_opt: 1e-5,\n}\n")
    opts = SolverOptions.from_file(path, max_iter=None, tol_feas=1e-9)
    assert opts.method == "auglag"
    assert opts.max_iter == 40
    assert opts.tol_opt == 1e-5
    assert opts.tol_feas == 1e-9


@pytest.mark.parametrize("variant", ["birkhoff-a", "lagrange"])
def test_linear_quadratic_reaches_riccati_cost(variant):
    prob = make_linear_quadratic()
    nlp = transcribe(prob, make_grid("cgl", 16), variant)
    sol = solve(nlp, x_init=initial_guess(nlp))
    assert sol.success
    traj = extract_trajectory(sol.x, nlp)
    assert traj.objective == pytest.approx(prob.parameters["optimal_cost"], abs=1e-8)


def test_double_integrator_minimum_time():
    nlp = transcribe(make_double_integrator(), make_grid("cgl", 16), "birkhoff-a")
    sol = solve(nlp, x_init=initial_guess(nlp))
    assert sol.residuals.feasibility <= 1e-6
    traj = extract_trajectory(sol.x, nlp)
    assert traj.tf == pytest.approx(2.0, abs=0.05)
    np.testing.assert_allclose(traj.X[-1], [1.0, 0.0], atol=1e-6)
