import dataclasses
import math

import numpy as np
import pytest

from birkhoff_ps.errors import PropagationError, SingularSystemError
from birkhoff_ps.grid import make_grid
from birkhoff_ps.ocp import Trajectory, make_double_integrator, make_linear_quadratic
from birkhoff_ps.validate import feasibility_error, propagate, propagate_dynamics, solve_linear_ode


def _trajectory(kind, n, t0, tf, state_fn, control_fn):
    grid = make_grid(kind, n)
    t = t0 + 0.5 * (grid.nodes + 1.0) * (tf - t0)
    return Trajectory(grid, np.atleast_2d(state_fn(t).T).reshape(grid.n_nodes, -1),
                      np.atleast_2d(control_fn(t).T).reshape(grid.n_nodes, -1), t0, tf)


def test_zero_dynamics_give_zero_error():
    prob = make_linear_quadratic(2.0)
    traj = _trajectory("cgl", 8, 0.0, 1.0, lambda t: np.full_like(t, 2.0), np.zeros_like)
    report = propagate(prob, traj)
    assert report.success
    assert np.max(report.errors) <= 1e-12
    assert report.times.size == 10 * 9
    errors = feasibility_error(report)
    assert errors.max_error <= 1e-12
    assert errors.terminal_miss <= 1e-12


def test_exponential_growth():
    prob = dataclasses.replace(make_linear_quadratic(), dynamics=lambda x, u, t: x.copy())
    traj = _trajectory("cgl", 24, 0.0, 1.0, np.exp, np.zeros_like)
    report = propagate(prob, traj)
    assert report.propagated_states[-1, 0] == pytest.approx(math.e, rel=1e-9)
    assert np.max(report.errors) <= 1e-9
    assert abs(report.terminal_error[0]) <= 1e-9
    assert report.n_steps > 0 and report.nfev > 0


def test_control_interpolant_drives_propagation():
    prob = make_double_integrator()
    traj = _trajectory("lgl", 12, 0.0, 2.0,
                       lambda t: np.vstack((t ** 3 / 6.0, t ** 2 / 2.0)), lambda t: t)
    report = propagate(prob, traj, control_method="lagrange")
    np.testing.assert_allclose(report.propagated_states[-1], [8.0 / 6.0, 2.0], rtol=1e-9)
    assert np.max(report.errors) <= 1e-9
    # this trajectory ignores the (1, 0) endpoint targets
    assert feasibility_error(report).terminal_miss == pytest.approx(2.0, rel=1e-9)


def test_report_frame_columns():
    prob = make_double_integrator()
    traj = _trajectory("cgl", 4, 0.0, 1.0, lambda t: np.vstack((t, np.ones_like(t))), np.zeros_like)
    frame = propagate(prob, traj, dense_factor=2).to_frame()
    assert list(frame.columns) == [
        "t", "position_ps", "position_prop", "position_err", "velocity_ps", "velocity_prop", "velocity_err",
    ]
    assert len(frame) == 10


def test_finite_time_blow_up_is_reported():
    prob = dataclasses.replace(make_linear_quadratic(), dynamics=lambda x, u, t: x ** 2)
    traj = _trajectory("cgl", 8, 0.0, 2.0, np.ones_like, np.zeros_like)
    with np.errstate(over="ignore", invalid="ignore"):
        report = propagate(prob, traj)
    assert not report.success
    assert report.t_failure == pytest.approx(1.0, abs=1e-3)
    assert np.all(np.isnan(report.terminal_error))


def test_propagation_rejects_bad_inputs():
    prob = make_linear_quadratic()
    traj = _trajectory("cgl", 4, 0.0, 1.0, np.ones_like, np.zeros_like)
    with pytest.raises(PropagationError, match="tolerances"):
        propagate(prob, traj, rtol=0.0)
    with pytest.raises(PropagationError, match="tolerances"):
        propagate_dynamics(prob, [1.0], lambda t: [0.0], (0.0, 1.0), atol=-1.0)
    wide = _trajectory("cgl", 4, 0.0, 1.0, lambda t: np.vstack((t, t)), np.zeros_like)
    with pytest.raises(PropagationError, match="problem expects"):
        propagate(prob, wide)


def test_zero_system_returns_initial_state():
    sol = solve_linear_ode(make_grid("cgl", 10), [[0.0]], None, [3.0])
    np.testing.assert_allclose(sol.states, 3.0, atol=1e-13)
    assert sol.form == "birkhoff"


@pytest.mark.parametrize("form", ["birkhoff", "lagrange"])
def test_exponential_reaches_spectral_accuracy(form):
    grid = make_grid("cgl", 24)
    sol = solve_linear_ode(grid, [[1.0]], None, [1.0], form=form)
    assert np.max(np.abs(sol.states[:, 0] - np.exp(grid.nodes + 1.0))) <= 1e-10


def test_forced_solution():
    grid = make_grid("cgl", 32)
    sol = solve_linear_ode(grid, [[0.0]], np.cos, [0.0])
    np.testing.assert_allclose(sol.states[:, 0], np.sin(grid.nodes) + math.sin(1.0), atol=1e-12)


def test_oscillator_system():
    grid = make_grid("lgl", 32)
    sol = solve_linear_ode(grid, [[0.0, 1.0], [-1.0, 0.0]], None, [1.0, 0.0])
    shifted = grid.nodes + 1.0
    np.testing.assert_allclose(sol.states, np.column_stack((np.cos(shifted), -np.sin(shifted))), atol=1e-11)


def test_birkhoff_system_is_well_conditioned():
    grid = make_grid("cgl", 128)
    birk = solve_linear_ode(grid, [[1.0]], None, [1.0])
    lagr = solve_linear_ode(grid, [[1.0]], None, [1.0], form="lagrange")
    assert birk.condition_number < 1e3
    assert lagr.condition_number > 10.0 * birk.condition_number


def test_linear_ode_rejects():
    with pytest.raises(PropagationError, match="Lobatto"):
        solve_linear_ode(make_grid("lgr", 8), [[1.0]], None, [1.0])
    with pytest.raises(PropagationError, match="unknown form"):
        solve_linear_ode(make_grid("cgl", 8), [[1.0]], None, [1.0], form="hermite")
    with pytest.raises(PropagationError, match="do not match"):
        solve_linear_ode(make_grid("cgl", 8), [[1.0, 0.0]], None, [1.0])


def test_singular_birkhoff_system():
    # N = 1: B = [[2]], so I - B * 0.5 vanishes
    with pytest.raises(SingularSystemError) as info:
        solve_linear_ode(make_grid("cgl", 1), [[0.5]], None, [1.0])
    assert not math.isfinite(info.value.condition_number) or info.value.condition_number > 1e15


@pytest.mark.slow
def test_spectral_convergence():
    errors = []
    for n in (4, 8, 16):
        grid = make_grid("cgl", n)
        sol = solve_linear_ode(grid, [[1.0]], None, [1.0])
        errors.append(np.max(np.abs(sol.states[:, 0] - np.exp(grid.nodes + 1.0))))
    assert errors[0] > errors[1] > errors[2]
    assert errors[1] / errors[0] < 1e-3


@pytest.mark.slow
def test_large_n_accuracy_gap():
    grid = make_grid("cgl", 1024)
    exact = np.exp(grid.nodes + 1.0)
    birk = solve_linear_ode(grid, [[1.0]], None, [1.0])
    lagr = solve_linear_ode(grid, [[1.0]], None, [1.0], form="lagrange")
    err_birk = np.max(np.abs(birk.states[:, 0] - exact))
    err_lagr = np.max(np.abs(lagr.states[:, 0] - exact))
    assert err_birk <= 1e-12
    assert err_lagr >= 100.0 * err_birk
