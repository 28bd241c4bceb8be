"""
Independent checks of collocation solutions

Propagates the dynamics through the interpolated control with an adaptive
Runge-Kutta 4(5) integrator and compares against the PS state interpolant;
also solves linear ODEs in Birkhoff and Lagrange form.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.integrate import solve_ivp

from .birkhoff import BirkhoffCase, build_birkhoff
from .errors import PropagationError, SingularSystemError
from .grid import Grid
from .interp import build_basis, diff_matrix
from .ocp import OcpProblem, Trajectory

logger = logging.getLogger(__name__)

DENSE_FACTOR = 10


@dataclass
class PropagationReport:
    times: np.ndarray
    ps_states: np.ndarray
    propagated_states: np.ndarray
    errors: np.ndarray
    terminal_error: np.ndarray
    terminal_violation: np.ndarray
    n_steps: int
    n_rejected: int
    nfev: int
    success: bool = True
    message: str = ""
    t_failure: Optional[float] = None
    state_names: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times}
        names = self.state_names or [f"x{i}" for i in range(self.ps_states.shape[1])]
        for k, name in enumerate(names):
            columns[f"{name}_ps"] = self.ps_states[:, k]
            columns[f"{name}_prop"] = self.propagated_states[:, k]
            columns[f"{name}_err"] = self.errors[:, k]
        return pd.DataFrame(columns)


@dataclass
class FeasibilityErrors:
    per_state: np.ndarray
    terminal_miss: float
    state_names: List[str] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return float(np.max(self.per_state, initial=0.0))

    def as_dict(self) -> dict:
        names = self.state_names or [f"x{i}" for i in range(self.per_state.size)]
        return {"per_state": dict(zip(names, self.per_state.tolist())), "terminal_miss": self.terminal_miss}


def propagate_dynamics(
    prob: OcpProblem,
    x0: np.ndarray,
    control: Callable[[float], np.ndarray],
    t_span,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    t_eval: Optional[np.ndarray] = None,
    dense_output: bool = False
):
    """Integrate x' = f(x, u(t), t) with RK45; returns the solve_ivp result"""
    if rtol <= 0.0 or atol <= 0.0:
        raise PropagationError(f"tolerances must be positive, got rtol={rtol}, atol={atol}")

    def rhs(t, x):
        u = np.asarray(control(t), dtype=float).reshape(prob.nu)
        return prob.dynamics(x, u, t)

    return solve_ivp(rhs, t_span, np.asarray(x0, dtype=float), method="RK45",
                     rtol=rtol, atol=atol, t_eval=t_eval, dense_output=dense_output)


def _rejected_steps(sol) -> int:
    # RK45 spends six evaluations per attempt plus two to pick the first step
    accepted = max(sol.t.size - 1, 0)
    return max(int(round((sol.nfev - 2) / 6.0)) - accepted, 0)


def propagate(
    prob: OcpProblem,
    traj: Trajectory,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    control_method: str = "lagrange",
    dense_factor: int = DENSE_FACTOR
) -> PropagationReport:
    """
    Propagate from the trajectory's initial state through its control interpolant

    Errors are taken on a dense_factor*(N+1) point grid against the PS state
    interpolant. Integrator breakdown returns a failed report with its time.
    """
    if traj.X.shape[1] != prob.nx or traj.U.shape[1] != prob.nu:
        raise PropagationError(
            f"trajectory has {traj.X.shape[1]} states / {traj.U.shape[1]} controls; "
            f"problem expects {prob.nx} / {prob.nu}"
        )
    if rtol <= 0.0 or atol <= 0.0:
        raise PropagationError(f"tolerances must be positive, got rtol={rtol}, atol={atol}")

    times = np.linspace(traj.t0, traj.tf, dense_factor * traj.grid.n_nodes)
    ps_states = traj.state_at(times)
    sol = propagate_dynamics(
        prob,
        traj.X[0],
        lambda t: traj.control_at(np.array([t]), control_method)[0],
        (traj.t0, traj.tf),
        rtol=rtol,
        atol=atol,
        dense_output=True,
    )
    n_steps = max(sol.t.size - 1, 0)
    if not sol.success:
        t_fail = float(sol.t[-1]) if sol.t.size else traj.t0
        logger.warning("propagation failed at t = %.6g: %s", t_fail, sol.message)
        k = int(np.searchsorted(times, t_fail, side="right")) if n_steps else 0
        reached = sol.sol(times[:k]).T if k else np.zeros((0, prob.nx))
        nan = np.full(prob.nx, math.nan)
        return PropagationReport(
            times=times[:k],
            ps_states=ps_states[:k],
            propagated_states=reached,
            errors=np.abs(reached - ps_states[:k]),
            terminal_error=nan,
            terminal_violation=np.full(prob.n_endpoint, math.nan),
            n_steps=n_steps,
            n_rejected=_rejected_steps(sol),
            nfev=int(sol.nfev),
            success=False,
            message=str(sol.message),
            t_failure=t_fail,
            state_names=list(prob.state_names),
        )

    propagated = sol.sol(times).T
    propagated[-1] = sol.y[:, -1]
    e = np.atleast_1d(prob.endpoint_fn(propagated[0], propagated[-1], traj.t0, traj.tf))
    violation = np.maximum(np.maximum(prob.endpoint_lower - e, e - prob.endpoint_upper), 0.0)
    return PropagationReport(
        times=times,
        ps_states=ps_states,
        propagated_states=propagated,
        errors=np.abs(propagated - ps_states),
        terminal_error=propagated[-1] - traj.X[-1],
        terminal_violation=violation,
        n_steps=n_steps,
        n_rejected=_rejected_steps(sol),
        nfev=int(sol.nfev),
        message=str(sol.message),
        state_names=list(prob.state_names),
    )


def feasibility_error(report: PropagationReport) -> FeasibilityErrors:
    per_state = np.max(report.errors, axis=0) if report.errors.size else np.zeros(len(report.state_names))
    miss = float(np.max(report.terminal_violation, initial=0.0))
    return FeasibilityErrors(per_state=per_state, terminal_miss=miss, state_names=list(report.state_names))


@dataclass
class LinearOdeSolution:
    tau: np.ndarray
    states: np.ndarray
    condition_number: float
    form: str


def _forcing_samples(forcing, tau: np.ndarray, nx: int) -> np.ndarray:
    if forcing is None:
        return np.zeros((tau.size, nx))
    g = np.asarray(forcing(tau), dtype=float)
    return g.reshape(tau.size, nx)


def solve_linear_ode(
    grid: Grid,
    system_matrix,
    forcing: Optional[Callable[[np.ndarray], np.ndarray]],
    x0,
    form: str = "birkhoff"
) -> LinearOdeSolution:
    """
    Solve x' = Lam x + g(tau), x(-1) = x0 at the grid nodes

    birkhoff: (I - Ba (x) Lam) X_a = b0 (x) x0 + (Ba (x) I) g_a
    lagrange: (Da (x) I - I (x) Lam) X_a = g_a - l0 (x) x0
    """
    if not grid.kind.is_lobatto:
        raise PropagationError(f"linear ODE solves need a Lobatto grid, got {grid.kind.value}")
    Lam = np.atleast_2d(np.asarray(system_matrix, dtype=float))
    nx = Lam.shape[0]
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if Lam.shape != (nx, nx) or x0.shape != (nx,):
        raise PropagationError(f"system matrix {Lam.shape} and x0 {x0.shape} do not match")
    if not (np.all(np.isfinite(Lam)) and np.all(np.isfinite(x0))):
        raise PropagationError("system matrix and x0 must be finite")

    tau = grid.nodes
    n = grid.order
    g = _forcing_samples(forcing, tau, nx)[1:]
    if not np.all(np.isfinite(g)):
        raise PropagationError("forcing must be finite")
    basis = build_basis(grid)
    ops = diff_matrix(basis)
    eye_x = np.eye(nx)
    if form == "birkhoff":
        birk = build_birkhoff(basis, BirkhoffCase.A, spec_ops=ops)
        A = np.eye(n * nx) - np.kron(birk.B, Lam)
        rhs = np.kron(birk.boundary_col, x0) + np.kron(birk.B, eye_x) @ g.ravel()
    elif form == "lagrange":
        A = np.kron(ops.Da, eye_x) - np.kron(np.eye(n), Lam)
        rhs = g.ravel() - np.kron(ops.l0, x0)
    else:
        raise PropagationError(f"unknown form {form!r}; expected 'birkhoff' or 'lagrange'")

    kappa = float(np.linalg.cond(A))
    try:
        inner = linalg.solve(A, rhs)
    except linalg.LinAlgError:
        raise SingularSystemError(f"{form} system is singular (condition number {kappa:.3e})", kappa) from None
    if not math.isfinite(kappa) or kappa > 1.0 / np.finfo(float).eps:
        raise SingularSystemError(f"{form} system is singular (condition number {kappa:.3e})", kappa)
    states = np.vstack((x0[None, :], inner.reshape(n, nx)))
    logger.debug("%s linear solve at N=%d: cond %.3e", form, n, kappa)
    return LinearOdeSolution(tau=tau.copy(), states=states, condition_number=kappa, form=form)
