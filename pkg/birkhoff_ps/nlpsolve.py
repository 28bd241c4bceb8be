"""
Dense NLP solver for desk-scale transcriptions

Multiplier convention: L = f - lam.c - mu.g - z.b, where g and b are the
one-sided inequality and bound slacks (>= 0) and mu, z >= 0.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import json5
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import Bounds, lsq_linear, minimize

from .errors import SolverError, UsageError
from .transcribe import NlpProblem

logger = logging.getLogger(__name__)

# dual scaling threshold for the stationarity test
_DUAL_SCALE_MAX = 100.0


class SolverStatus(str, Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


class SolverOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: Literal["slsqp", "auglag"] = "slsqp"
    tol_feas: float = Field(default=1e-8, gt=0.0)
    tol_opt: float = Field(default=1e-6, gt=0.0)
    max_iter: int = Field(default=500, ge=1)
    active_tol: float = Field(default=1e-6, gt=0.0)
    slsqp_ftol: float = Field(default=1e-12, gt=0.0)
    penalty_init: float = Field(default=10.0, gt=0.0)
    penalty_growth: float = Field(default=10.0, gt=1.0)
    penalty_max: float = Field(default=1e10, gt=0.0)
    feasibility_decrease: float = Field(default=0.25, gt=0.0, lt=1.0)
    inner_max_iter: int = Field(default=2000, ge=1)
    verbosity: int = Field(default=0, ge=0)

    @classmethod
    def from_file(cls, path: Union[str, Path], **overrides) -> "SolverOptions":
        """Load a JSON/JSON5 options file; keyword overrides that are not None win"""
        if not Path(path).exists():
            raise UsageError(f"options file not found: {path}")
        with open(path, "r") as f:
            data = json5.load(f)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass
class ResidualReport:
    stationarity: float
    feasibility: float
    complementarity: float
    dual_scale: float = 1.0

    @property
    def scaled_stationarity(self) -> float:
        return self.stationarity / self.dual_scale

    @property
    def scaled_complementarity(self) -> float:
        return self.complementarity / self.dual_scale

    def within(self, opts: SolverOptions) -> bool:
        return (self.feasibility <= opts.tol_feas
                and self.scaled_stationarity <= opts.tol_opt
                and self.scaled_complementarity <= opts.tol_opt)

    def as_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "scaled_stationarity": self.scaled_stationarity,
            "feasibility": self.feasibility,
            "complementarity": self.complementarity,
            "dual_scale": self.dual_scale,
        }


@dataclass
class NlpSolution:
    x: np.ndarray
    status: SolverStatus
    residuals: ResidualReport
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_bounds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    objective: float = math.nan
    message: str = ""
    feasibility_history: List[float] = field(default_factory=list)
    failed_constraint: Optional[int] = None

    @property
    def success(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


class _NonFinite(Exception):
    def __init__(self, what: str, index: Optional[int]):
        super().__init__(f"{what} returned a non-finite value" + ("" if index is None else f" at index {index}"))
        self.what = what
        self.index = index


def _guard(values, what: str, offset: int = 0) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise _NonFinite(what, offset + int(bad[0]) if values.ndim else None)
    return values


def kkt_residual(
    nlp: NlpProblem,
    x,
    multipliers_eq=None,
    multipliers_ineq=None,
    multipliers_bounds=None
) -> ResidualReport:
    """
    Stationarity, feasibility and complementarity (infinity norms)

    multipliers_ineq are per one-sided row (see NlpProblem.one_sided).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (nlp.n_vars,):
        raise SolverError(f"point must have length {nlp.n_vars}, got shape {x.shape}")
    c = np.asarray(nlp.equality(x), dtype=float)
    g = nlp.one_sided(x)
    b = nlp.bound_slacks(x)
    lam = np.zeros(c.size) if multipliers_eq is None else np.asarray(multipliers_eq, dtype=float)
    mu = np.zeros(g.size) if multipliers_ineq is None else np.asarray(multipliers_ineq, dtype=float)
    zb = np.zeros(b.size) if multipliers_bounds is None else np.asarray(multipliers_bounds, dtype=float)
    for name, mult, size in (("equality", lam, c.size), ("inequality", mu, g.size), ("bound", zb, b.size)):
        if mult.shape != (size,):
            raise SolverError(f"{name} multipliers must have length {size}, got shape {mult.shape}")

    grad = np.asarray(nlp.objective_gradient(x), dtype=float).copy()
    if c.size:
        grad -= np.asarray(nlp.equality_jacobian(x), dtype=float).T @ lam
    if g.size:
        grad -= nlp.one_sided_jacobian(x).T @ mu
    if b.size:
        grad -= nlp.bound_jacobian().T @ zb

    feasibility = max(
        float(np.max(np.abs(c), initial=0.0)),
        float(np.max(-g, initial=0.0)),
        float(np.max(-b, initial=0.0)),
    )
    complementarity = max(float(np.max(np.abs(mu * g), initial=0.0)),
                          float(np.max(np.abs(zb * b), initial=0.0)))
    all_mult = np.concatenate((lam, mu, zb))
    mean_mult = float(np.mean(np.abs(all_mult))) if all_mult.size else 0.0
    return ResidualReport(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        feasibility=feasibility,
        complementarity=complementarity,
        dual_scale=max(1.0, mean_mult / _DUAL_SCALE_MAX),
    )


def estimate_multipliers(nlp: NlpProblem, x, active_tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bounded least-squares multipliers on the active set at x"""
    x = np.asarray(x, dtype=float)
    grad = np.asarray(nlp.objective_gradient(x), dtype=float)
    m = nlp.m_eq
    g = nlp.one_sided(x)
    b = nlp.bound_slacks(x)
    act_g = np.flatnonzero(g <= active_tol)
    act_b = np.flatnonzero(b <= active_tol)
    columns = []
    if m:
        columns.append(np.asarray(nlp.equality_jacobian(x), dtype=float).T)
    if act_g.size:
        columns.append(nlp.one_sided_jacobian(x)[act_g].T)
    if act_b.size:
        columns.append(nlp.bound_jacobian()[act_b].T)
    lam, mu, zb = np.zeros(m), np.zeros(g.size), np.zeros(b.size)
    if not columns:
        return lam, mu, zb
    A = np.hstack(columns)
    lo = np.concatenate((np.full(m, -np.inf), np.zeros(act_g.size + act_b.size)))
    hi = np.full(A.shape[1], np.inf)
    if lo.size and np.all(np.isinf(lo)):
        sol = np.linalg.lstsq(A, grad, rcond=None)[0]
    else:
        sol = lsq_linear(A, grad, bounds=(lo, hi), method="bvls").x
    lam = sol[:m]
    mu[act_g] = sol[m:m + act_g.size]
    zb[act_b] = sol[m + act_g.size:]
    return lam, mu, zb


def _classify(residuals: ResidualReport, opts: SolverOptions, hit_limit: bool) -> SolverStatus:
    if residuals.within(opts):
        return SolverStatus.OPTIMAL
    if hit_limit:
        return SolverStatus.MAX_ITER
    if residuals.feasibility > opts.tol_feas:
        return SolverStatus.INFEASIBLE
    return SolverStatus.NUMERICAL_FAILURE


def _bounds(nlp: NlpProblem) -> Optional[Bounds]:
    if not (np.any(np.isfinite(nlp.lower)) or np.any(np.isfinite(nlp.upper))):
        return None
    return Bounds(nlp.lower, nlp.upper)


def _check_start(nlp: NlpProblem, x: np.ndarray):
    _guard(nlp.objective(x), "objective")
    _guard(nlp.equality(x), "equality")
    if nlp.m_ineq:
        _guard(nlp.inequality(x), "inequality", offset=nlp.m_eq)


def solve(nlp: NlpProblem, opts: Optional[SolverOptions] = None, x_init=None) -> NlpSolution:
    """
    Solve the NLP from x_init (clipped into the box)

    Non-finite evaluator output ends the run with NUMERICAL_FAILURE and the
    index of the offending constraint (inequalities are offset by m_eq).
    """
    opts = opts or SolverOptions()
    x0 = nlp.reference_point() if x_init is None else np.asarray(x_init, dtype=float).copy()
    if x0.shape != (nlp.n_vars,):
        raise SolverError(f"x_init must have length {nlp.n_vars}, got shape {x0.shape}")
    x0 = np.clip(x0, nlp.lower, nlp.upper)
    logger.info("solving NLP with %s: %d vars, %d equalities, %d inequalities",
                opts.method, nlp.n_vars, nlp.m_eq, nlp.m_ineq)
    try:
        _check_start(nlp, x0)
        if opts.method == "slsqp":
            solution = _solve_slsqp(nlp, opts, x0)
        else:
            solution = _solve_auglag(nlp, opts, x0)
    except _NonFinite as e:
        logger.warning("numerical failure: %s", e)
        nan = math.nan
        return NlpSolution(
            x=x0,
            status=SolverStatus.NUMERICAL_FAILURE,
            residuals=ResidualReport(nan, nan, nan),
            message=str(e),
            failed_constraint=e.index if e.what != "objective" else None,
        )
    level = logging.INFO if solution.success else logging.WARNING
    logger.log(level, "solver finished: %s after %d iterations (feasibility %.2e, stationarity %.2e)",
               solution.status.value, solution.iterations,
               solution.residuals.feasibility, solution.residuals.scaled_stationarity)
    return solution


def _solve_slsqp(nlp: NlpProblem, opts: SolverOptions, x0: np.ndarray) -> NlpSolution:
    m_eq = nlp.m_eq
    constraints = []
    if m_eq:
        constraints.append({
            "type": "eq",
            "fun": lambda x: _guard(nlp.equality(x), "equality"),
            "jac": nlp.equality_jacobian,
        })
    if nlp.n_one_sided:
        def one_sided(x):
            _guard(nlp.inequality(x), "inequality", offset=m_eq)
            return nlp.one_sided(x)

        constraints.append({"type": "ineq", "fun": one_sided, "jac": nlp.one_sided_jacobian})

    res = minimize(
        lambda x: float(_guard(nlp.objective(x), "objective")),
        x0,
        jac=nlp.objective_gradient,
        method="SLSQP",
        bounds=_bounds(nlp),
        constraints=constraints,
        options={"maxiter": opts.max_iter, "ftol": opts.slsqp_ftol, "disp": opts.verbosity > 1},
    )
    x = np.clip(res.x, nlp.lower, nlp.upper)
    _check_start(nlp, x)
    lam, mu, zb = estimate_multipliers(nlp, x, opts.active_tol)
    residuals = kkt_residual(nlp, x, lam, mu, zb)
    status = _classify(residuals, opts, hit_limit=res.status == 9)
    return NlpSolution(
        x=x,
        status=status,
        residuals=residuals,
        multipliers_eq=lam,
        multipliers_ineq=mu,
        multipliers_bounds=zb,
        iterations=int(res.nit),
        objective=float(nlp.objective(x)),
        message=str(res.message),
        feasibility_history=[residuals.feasibility],
    )


def _bound_multipliers(nlp: NlpProblem, x, lam, mu, active_tol: float) -> np.ndarray:
    """Bound multipliers from the sign of the remaining Lagrangian gradient"""
    r = np.asarray(nlp.objective_gradient(x), dtype=float).copy()
    if lam.size:
        r -= np.asarray(nlp.equality_jacobian(x), dtype=float).T @ lam
    if mu.size:
        r -= nlp.one_sided_jacobian(x).T @ mu
    b = nlp.bound_slacks(x)
    J = nlp.bound_jacobian()
    # row k of J is +e_i (lower) or -e_i (upper): multiplier is the matching signed gradient
    signed = J @ r
    return np.where(b <= active_tol, np.maximum(signed, 0.0), 0.0)


def _solve_auglag(nlp: NlpProblem, opts: SolverOptions, x0: np.ndarray) -> NlpSolution:
    """Augmented Lagrangian outer loop, L-BFGS-B inner solves with projected bounds"""
    lam = np.zeros(nlp.m_eq)
    mu = np.zeros(nlp.n_one_sided)
    rho = opts.penalty_init
    x = x0
    history: List[float] = []
    prev_feasibility = math.inf
    inner_iterations = 0
    bounds = _bounds(nlp)
    status = SolverStatus.MAX_ITER
    residuals = None
    zb = np.zeros(nlp.n_bound_sides)
    outer = 0

    for outer in range(1, opts.max_iter + 1):
        def merit(xk, lam=lam, mu=mu, rho=rho):
            f = float(_guard(nlp.objective(xk), "objective"))
            grad = np.asarray(nlp.objective_gradient(xk), dtype=float).copy()
            value = f
            if lam.size:
                c = _guard(nlp.equality(xk), "equality")
                value += -lam @ c + 0.5 * rho * c @ c
                grad -= np.asarray(nlp.equality_jacobian(xk), dtype=float).T @ (lam - rho * c)
            if mu.size:
                _guard(nlp.inequality(xk), "inequality", offset=nlp.m_eq)
                q = nlp.one_sided(xk)
                shifted = np.maximum(0.0, mu - rho * q)
                value += (shifted @ shifted - mu @ mu) / (2.0 * rho)
                grad -= nlp.one_sided_jacobian(xk).T @ shifted
            return value, grad

        res = minimize(
            merit,
            x,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": opts.inner_max_iter, "gtol": 0.1 * opts.tol_opt, "ftol": 1e-15, "maxcor": 20},
        )
        x = np.clip(res.x, nlp.lower, nlp.upper)
        inner_iterations += int(res.nit)

        if lam.size:
            lam = lam - rho * _guard(nlp.equality(x), "equality")
        if mu.size:
            mu = np.maximum(0.0, mu - rho * nlp.one_sided(x))
        zb = _bound_multipliers(nlp, x, lam, mu, opts.active_tol)
        residuals = kkt_residual(nlp, x, lam, mu, zb)
        history.append(residuals.feasibility)
        if opts.verbosity:
            logger.info("outer %d: feasibility %.3e, stationarity %.3e, rho %.1e",
                        outer, residuals.feasibility, residuals.scaled_stationarity, rho)
        if residuals.within(opts):
            status = SolverStatus.OPTIMAL
            break
        if residuals.feasibility > opts.feasibility_decrease * prev_feasibility:
            rho = min(rho * opts.penalty_growth, opts.penalty_max)
        prev_feasibility = residuals.feasibility
    else:
        if rho >= opts.penalty_max and residuals.feasibility > opts.tol_feas:
            status = SolverStatus.INFEASIBLE

    return NlpSolution(
        x=x,
        status=status,
        residuals=residuals,
        multipliers_eq=lam,
        multipliers_ineq=mu,
        multipliers_bounds=zb,
        iterations=outer,
        objective=float(nlp.objective(x)),
        message=f"{outer} outer / {inner_iterations} inner iterations",
        feasibility_history=history,
    )
