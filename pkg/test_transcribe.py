import dataclasses
import math

import numpy as np
import pytest

from birkhoff_ps.errors import TranscriptionError
from birkhoff_ps.grid import make_grid
from birkhoff_ps.ocp import TimeSpec, Trajectory, make_double_integrator, make_linear_quadratic, make_orbit_transfer
from birkhoff_ps.transcribe import (
    MethodVariant,
    VariableLayout,
    defect_report,
    extract_trajectory,
    initial_guess,
    parse_variant,
    quadrature_weights,
    transcribe,
    warm_start,
)


def _fixed_double_integrator():
    return dataclasses.replace(make_double_integrator(), time_spec=TimeSpec(tf=2.0))


def _fd_jacobian(fun, z, h=1e-6):
    columns = []
    for k in range(z.size):
        step = h * max(1.0, abs(z[k]))
        plus, minus = z.copy(), z.copy()
        plus[k] += step
        minus[k] -= step
        columns.append((np.atleast_1d(fun(plus)) - np.atleast_1d(fun(minus))) / (2.0 * step))
    return np.stack(columns, axis=-1)


def test_lagrange_layout():
    nlp = transcribe(_fixed_double_integrator(), make_grid("cgl", 8), "lagrange")
    assert nlp.n_vars == 27
    assert nlp.equality_blocks["dynamics"] == slice(0, 18)
    assert nlp.m_eq == 22
    assert nlp.layout.tf_index is None


def test_birkhoff_layout():
    nlp = transcribe(_fixed_double_integrator(), make_grid("cgl", 8), MethodVariant.BIRKHOFF_A)
    assert nlp.n_vars == 27 + 16
    assert nlp.layout.v_slice == slice(27, 43)
    blocks = nlp.equality_blocks
    assert blocks["boundary_row"].stop - blocks["boundary_row"].start == 2
    assert blocks["reconstruction"].stop - blocks["reconstruction"].start == 16
    assert nlp.m_eq == 16 + 16 + 2 + 4


def test_free_final_time_layout_and_bounds():
    nlp = transcribe(make_double_integrator(), make_grid("lgl", 6), "birkhoff-b")
    assert nlp.layout.free_tf
    assert nlp.layout.tf_index == nlp.n_vars - 1
    assert nlp.lower[nlp.layout.tf_index] == 0.5
    assert nlp.upper[nlp.layout.tf_index] == 10.0
    np.testing.assert_array_equal(nlp.lower[nlp.layout.u_slice], -1.0)
    assert nlp.sparsity.shape == (nlp.m_eq, nlp.n_vars)


def test_layout_pack_unpack():
    lay = VariableLayout(n_nodes=3, nx=2, nu=1, n_v=2, free_tf=True, t0=0.0)
    X = np.arange(6.0).reshape(3, 2)
    U = np.array([[7.0], [8.0], [9.0]])
    V = np.ones((2, 2))
    z = lay.pack(X, U, V, tf=4.0)
    assert z.size == lay.n_vars == 14
    X2, U2, V2, tf = lay.unpack(z)
    np.testing.assert_array_equal(X2, X)
    np.testing.assert_array_equal(U2, U)
    np.testing.assert_array_equal(V2, V)
    assert tf == 4.0
    with pytest.raises(TranscriptionError, match="free final time"):
        lay.pack(X, U, V)
    with pytest.raises(TranscriptionError, match="length"):
        lay.unpack(z[:-1])


@pytest.mark.parametrize("kind", ["cgl", "lgl"])
def test_quadrature_weights_sum_to_two(kind):
    assert quadrature_weights(make_grid(kind, 17)).sum() == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("kind", ["cgl", "lgl"])
def test_three_point_quadrature_is_simpson(kind):
    np.testing.assert_allclose(quadrature_weights(make_grid(kind, 2)), [1 / 3, 4 / 3, 1 / 3], atol=1e-15)


def test_clenshaw_curtis_integrates_exponential():
    grid = make_grid("cgl", 16)
    assert quadrature_weights(grid) @ np.exp(grid.nodes) == pytest.approx(math.e - 1.0 / math.e, abs=1e-13)


def test_quadrature_weights_reject_other_grids():
    with pytest.raises(TranscriptionError):
        quadrature_weights(make_grid("lgr", 4))


@pytest.mark.parametrize("kind", ["lgr", "cgr", "lg", "uniform"])
def test_non_lobatto_grids_rejected(kind):
    with pytest.raises(TranscriptionError, match="Lobatto"):
        transcribe(make_double_integrator(), make_grid(kind, 8), "birkhoff-a")


def test_parse_variant():
    assert parse_variant("right-precond-a") is MethodVariant.BIRKHOFF_A
    assert parse_variant("LeftPrecondB") is MethodVariant.LEFT_PRECOND_B
    assert parse_variant("birkhoff_b") is MethodVariant.BIRKHOFF_B
    assert parse_variant("LagrangePN") is MethodVariant.LAGRANGE
    with pytest.raises(TranscriptionError, match="unknown method variant"):
        parse_variant("hermite")


def _orbit_point(nlp, seed):
    rng = np.random.default_rng(seed)
    lay = nlp.layout
    M = lay.n_nodes
    X = np.column_stack((rng.uniform(1.0, 2.0, M), rng.uniform(0.0, 3.0, M),
                         rng.uniform(-0.2, 0.2, M), rng.uniform(0.6, 1.0, M)))
    U = rng.uniform(-1.0, 1.0, (M, 1))
    V = rng.uniform(-0.5, 0.5, (lay.n_v, 4)) if lay.n_v else None
    return lay.pack(X, U, V, tf=3.0)


@pytest.mark.parametrize("variant", ["lagrange", "birkhoff-a", "birkhoff-b", "left-precond-a", "left-precond-b"])
def test_equality_jacobian_matches_finite_differences(variant):
    nlp = transcribe(make_orbit_transfer(0.1, 2.0), make_grid("cgl", 6), variant)
    z = _orbit_point(nlp, 5)
    np.testing.assert_allclose(nlp.equality_jacobian(z), _fd_jacobian(nlp.equality, z), atol=1e-6)


def test_sparsity_covers_jacobian():
    nlp = transcribe(make_orbit_transfer(0.1, 2.0), make_grid("lgl", 5), "birkhoff-a")
    J = nlp.equality_jacobian(_orbit_point(nlp, 8))
    assert not np.any((J != 0.0) & ~nlp.sparsity)


def test_objective_gradient_with_running_cost():
    nlp = transcribe(make_linear_quadratic(), make_grid("cgl", 8), "birkhoff-a")
    z = np.random.default_rng(2).uniform(-1.0, 1.0, nlp.n_vars)
    np.testing.assert_allclose(nlp.objective_gradient(z), _fd_jacobian(nlp.objective, z), atol=1e-7)


def test_objective_gradient_free_time_running_cost():
    prob = dataclasses.replace(make_double_integrator(), running_cost=lambda x, u, t: u[..., 0] ** 2 + t)
    nlp = transcribe(prob, make_grid("lgl", 6), "lagrange")
    z = np.random.default_rng(6).uniform(0.5, 1.0, nlp.n_vars)
    np.testing.assert_allclose(nlp.objective_gradient(z), _fd_jacobian(nlp.objective, z), atol=1e-7)


def test_inequality_jacobian_with_path_constraint():
    prob = dataclasses.replace(
        make_double_integrator(),
        path_fn=lambda x, u, t: (x[..., 1] ** 2 + u[..., 0] * t)[..., None],
        path_lower=[-np.inf],
        path_upper=[1.0],
    )
    nlp = transcribe(prob, make_grid("cgl", 5), "left-precond-a")
    assert nlp.m_ineq == 6
    assert nlp.inequality_blocks["path"] == slice(0, 6)
    z = np.random.default_rng(9).uniform(0.5, 1.5, nlp.n_vars)
    np.testing.assert_allclose(nlp.inequality_jacobian(z), _fd_jacobian(nlp.inequality, z), atol=1e-7)


def _lq_polynomial_point(nlp):
    # x(t) = 1 + t - t^3 / 3 solves x' = u with u = 1 - t^2, exactly representable
    t = 0.5 * (nlp.grid.nodes + 1.0)
    X = (1.0 + t - t ** 3 / 3.0)[:, None]
    U = (1.0 - t ** 2)[:, None]
    V = None
    if nlp.layout.n_v:
        V = 0.5 * U[1:] if nlp.variant.case.value == "a" else 0.5 * U[:-1]
    return nlp.layout.pack(X, U, V)


@pytest.mark.parametrize("variant", ["lagrange", "birkhoff-a", "birkhoff-b", "left-precond-a", "left-precond-b"])
def test_polynomial_solution_satisfies_equalities(variant):
    nlp = transcribe(make_linear_quadratic(), make_grid("cgl", 8), variant)
    z = _lq_polynomial_point(nlp)
    assert np.max(np.abs(nlp.equality(z))) <= 1e-12
    report = defect_report(nlp, z)
    assert set(report) >= {"endpoint", "bounds"}
    assert max(report.values()) <= 1e-12


def test_objective_of_polynomial_solution():
    nlp = transcribe(make_linear_quadratic(), make_grid("cgl", 16), "lagrange")
    z = _lq_polynomial_point(nlp)
    # integral over [0, 1] of (1 + t - t^3/3)^2 + (1 - t^2)^2
    exact = 1.0 + 1.0 + 1.0 / 3.0 - 2.0 / 12.0 - 2.0 / 15.0 + 1.0 / 63.0 + 1.0 - 2.0 / 3.0 + 1.0 / 5.0
    assert nlp.objective(z) == pytest.approx(exact, abs=1e-12)


def test_extract_trajectory():
    nlp = transcribe(make_linear_quadratic(), make_grid("cgl", 8), "birkhoff-a")
    z = _lq_polynomial_point(nlp)
    traj = extract_trajectory(z, nlp)
    assert traj.variant == "birkhoff-a"
    assert traj.V.shape == (8, 1)
    assert traj.tf == 1.0
    assert traj.objective == pytest.approx(nlp.objective(z))
    assert traj.state_at([0.0])[0, 0] == pytest.approx(1.0)


def test_defect_report_flags_bound_violation():
    nlp = transcribe(_fixed_double_integrator(), make_grid("cgl", 4), "lagrange")
    z = np.zeros(nlp.n_vars)
    z[nlp.layout.u_slice] = 1.5
    assert defect_report(nlp, z)["bounds"] == pytest.approx(0.5)


def test_initial_guess_from_boundary_values():
    nlp = transcribe(make_double_integrator(), make_grid("cgl", 8), "birkhoff-a")
    z = initial_guess(nlp)
    X, U, V, tf = nlp.layout.unpack(z)
    assert tf == 3.0
    np.testing.assert_allclose(X[0], [0.0, 0.0])
    np.testing.assert_allclose(X[-1], [1.0, 0.0])
    np.testing.assert_array_equal(U, 0.0)
    np.testing.assert_allclose(V, 1.5 * np.column_stack((X[1:, 1], U[1:, 0])))


def test_initial_guess_uses_problem_guess():
    nlp = transcribe(make_orbit_transfer(0.1, 2.0), make_grid("cgl", 8), "lagrange")
    X, _, _, tf = nlp.layout.unpack(initial_guess(nlp))
    assert X[-1, 0] == pytest.approx(2.0, abs=1e-6)
    assert nlp.lower[nlp.layout.tf_index] <= tf <= nlp.upper[nlp.layout.tf_index]


def test_warm_start_interpolates_coarse_solution():
    coarse = make_grid("cgl", 8)
    t = 0.5 * (coarse.nodes + 1.0)
    traj = Trajectory(coarse, (1.0 + t - t ** 3 / 3.0)[:, None], (1.0 - t ** 2)[:, None], 0.0, 1.0)
    nlp = transcribe(make_linear_quadratic(), make_grid("cgl", 16), "birkhoff-a")
    z = warm_start(nlp, traj)
    assert np.max(np.abs(nlp.equality(z))) <= 1e-12
