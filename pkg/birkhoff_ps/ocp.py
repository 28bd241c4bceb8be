"""
Optimal control problem model and the built-in example problems

Every evaluator is vectorized over leading node axes: dynamics(x, u, t) takes
x of shape (..., nx), u of shape (..., nu) and t of shape (...) and returns
(..., nx). Endpoint evaluators take single vectors (x0, xf, t0, tf).
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.integrate import solve_ivp

from .errors import InitialGuessError, ProblemDefinitionError
from .grid import Grid, to_canonical_time, to_physical_time
from .interp import LagrangeBasis, build_basis, interpolate

logger = logging.getLogger(__name__)

FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)

Evaluator = Callable[..., np.ndarray]


@dataclass(frozen=True)
class TimeSpec:
    """Fixed (t0, tf), or free tf within tf_bounds"""

    t0: float = 0.0
    tf: Optional[float] = None
    tf_bounds: Optional[Tuple[float, float]] = None
    tf_guess: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.t0):
            raise ProblemDefinitionError(f"t0 must be finite, got {self.t0}")
        if self.tf is None and self.tf_bounds is None:
            raise ProblemDefinitionError("time spec needs a fixed tf or tf_bounds")
        if self.tf is not None and self.tf_bounds is not None:
            raise ProblemDefinitionError("time spec takes either a fixed tf or tf_bounds, not both")
        if self.tf is not None and not (math.isfinite(self.tf) and self.tf > self.t0):
            raise ProblemDefinitionError(f"fixed tf must be finite and > t0, got {self.tf}")
        if self.tf_bounds is not None:
            lo, hi = self.tf_bounds
            if not (lo > self.t0 and hi >= lo):
                raise ProblemDefinitionError(f"tf_bounds must satisfy t0 < lower <= upper, got {self.tf_bounds}")
            if self.tf_guess is not None and not lo <= self.tf_guess <= hi:
                raise ProblemDefinitionError(f"tf_guess {self.tf_guess} outside tf_bounds {self.tf_bounds}")

    @property
    def free_final_time(self) -> bool:
        return self.tf is None

    @property
    def initial_tf(self) -> float:
        if self.tf is not None:
            return self.tf
        if self.tf_guess is not None:
            return self.tf_guess
        lo, hi = self.tf_bounds
        return 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * lo


@dataclass
class InitialGuess:
    """States and controls at requested canonical nodes plus a final time"""

    states: np.ndarray
    controls: np.ndarray
    tf: float


def _bounds(values, size: int, fill: float, name: str) -> np.ndarray:
    if values is None:
        return np.full(size, fill)
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size != size:
        raise ProblemDefinitionError(f"{name} must have {size} entries, got {arr.size}")
    return arr


@dataclass
class OcpProblem:
    name: str
    nx: int
    nu: int
    dynamics: Evaluator
    endpoint_cost: Evaluator
    endpoint_fn: Evaluator
    endpoint_lower: np.ndarray
    endpoint_upper: np.ndarray
    time_spec: TimeSpec
    running_cost: Optional[Evaluator] = None
    path_fn: Optional[Evaluator] = None
    path_lower: Optional[np.ndarray] = None
    path_upper: Optional[np.ndarray] = None
    state_lower: Optional[np.ndarray] = None
    state_upper: Optional[np.ndarray] = None
    control_lower: Optional[np.ndarray] = None
    control_upper: Optional[np.ndarray] = None
    dynamics_jacobian: Optional[Callable[..., Tuple[np.ndarray, np.ndarray]]] = None
    guess: Optional[Callable[[np.ndarray], InitialGuess]] = None
    boundary_guess: Optional[Tuple[np.ndarray, np.ndarray]] = None
    state_names: List[str] = field(default_factory=list)
    control_names: List[str] = field(default_factory=list)
    parameters: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.nx < 1 or self.nu < 0:
            raise ProblemDefinitionError(f"need nx >= 1 and nu >= 0, got nx={self.nx}, nu={self.nu}")
        lower = np.atleast_1d(np.asarray(self.endpoint_lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.endpoint_upper, dtype=float))
        if lower.shape != upper.shape:
            raise ProblemDefinitionError("endpoint bounds must have matching shapes")
        self.endpoint_lower, self.endpoint_upper = lower, upper
        if self.path_fn is not None:
            if self.path_lower is None or self.path_upper is None:
                raise ProblemDefinitionError("path_fn needs path_lower and path_upper")
            self.path_lower = np.atleast_1d(np.asarray(self.path_lower, dtype=float))
            self.path_upper = np.atleast_1d(np.asarray(self.path_upper, dtype=float))
            if self.path_lower.shape != self.path_upper.shape:
                raise ProblemDefinitionError("path bounds must have matching shapes")
        self.state_lower = _bounds(self.state_lower, self.nx, -np.inf, "state_lower")
        self.state_upper = _bounds(self.state_upper, self.nx, np.inf, "state_upper")
        self.control_lower = _bounds(self.control_lower, self.nu, -np.inf, "control_lower")
        self.control_upper = _bounds(self.control_upper, self.nu, np.inf, "control_upper")
        for name, lo, hi in self._bound_pairs():
            if np.any(lo > hi):
                raise ProblemDefinitionError(f"{name} lower bound exceeds upper bound")
        if not self.state_names:
            self.state_names = [f"x{i}" for i in range(self.nx)]
        if not self.control_names:
            self.control_names = [f"u{i}" for i in range(self.nu)]

    def _bound_pairs(self):
        pairs = [
            ("endpoint", self.endpoint_lower, self.endpoint_upper),
            ("state", self.state_lower, self.state_upper),
            ("control", self.control_lower, self.control_upper),
        ]
        if self.path_fn is not None:
            pairs.append(("path", self.path_lower, self.path_upper))
        return pairs

    @property
    def n_endpoint(self) -> int:
        return self.endpoint_lower.size

    @property
    def n_path(self) -> int:
        return 0 if self.path_fn is None else self.path_lower.size

    def evaluate_dynamics(self, X: np.ndarray, U: np.ndarray, t: np.ndarray) -> np.ndarray:
        out = np.asarray(self.dynamics(X, U, t), dtype=float)
        if out.shape != X.shape:
            raise ProblemDefinitionError(f"dynamics returned shape {out.shape}, expected {X.shape}")
        return out

    def dynamics_partials(self, X, U, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(fx, fu, ft) per node, shapes (M, nx, nx), (M, nx, nu), (M, nx)"""
        if self.dynamics_jacobian is None:
            return node_partials(self.evaluate_dynamics, X, U, t)
        fx, fu = self.dynamics_jacobian(X, U, t)
        _, _, ft = node_partials(self.evaluate_dynamics, X, U, t, wrt_state=False, wrt_control=False)
        return np.asarray(fx, dtype=float), np.asarray(fu, dtype=float), ft

    def validate(self, samples: int = 8, seed: int = 0) -> None:
        """Check evaluator shapes and finiteness on random admissible inputs"""
        rng = np.random.default_rng(seed)
        X = _sample_box(rng, self.state_lower, self.state_upper, samples)
        U = _sample_box(rng, self.control_lower, self.control_upper, samples)
        t0 = self.time_spec.t0
        tf = self.time_spec.initial_tf
        t = rng.uniform(t0, tf, samples)
        checks = [("dynamics", self.dynamics(X, U, t), (samples, self.nx))]
        if self.running_cost is not None:
            checks.append(("running_cost", self.running_cost(X, U, t), (samples,)))
        if self.path_fn is not None:
            checks.append(("path_fn", self.path_fn(X, U, t), (samples, self.n_path)))
        checks.append(("endpoint_fn", self.endpoint_fn(X[0], X[-1], t0, tf), (self.n_endpoint,)))
        checks.append(("endpoint_cost", self.endpoint_cost(X[0], X[-1], t0, tf), ()))
        for name, value, shape in checks:
            value = np.asarray(value, dtype=float)
            if value.shape != shape:
                raise ProblemDefinitionError(f"{name} returned shape {value.shape}, expected {shape}")
            if not np.all(np.isfinite(value)):
                raise ProblemDefinitionError(f"{name} returned non-finite values on admissible inputs")


def _sample_box(rng, lower, upper, samples):
    lo = np.where(np.isfinite(lower), lower, np.minimum(-1.0, upper - 1.0))
    hi = np.where(np.isfinite(upper), upper, np.maximum(1.0, lower + 1.0))
    return rng.uniform(lo, hi, size=(samples, lo.size))


def _central_step(values: np.ndarray) -> np.ndarray:
    return FD_STEP * np.maximum(1.0, np.abs(values))


def node_partials(
    fun: Evaluator,
    X: np.ndarray,
    U: np.ndarray,
    t: np.ndarray,
    wrt_state: bool = True,
    wrt_control: bool = True
) -> Tuple[Optional[np.ndarray], Optional[np.ndarray], np.ndarray]:
    """
    Central differences of a node-separable evaluator

    One component is perturbed at every node at once, so each column costs
    two vectorized calls. Returns (d/dx, d/du, d/dt) with shapes
    (M, m, nx), (M, m, nu), (M, m); scalar outputs use m = 1.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    t = np.asarray(t, dtype=float)
    M = X.shape[0]

    def call(x, u, tt):
        return np.asarray(fun(x, u, tt), dtype=float).reshape(M, -1)

    def column(args, index, k):
        base = args[index]
        h = _central_step(base[:, k] if base.ndim == 2 else base)
        plus = [a.copy() for a in args]
        minus = [a.copy() for a in args]
        if base.ndim == 2:
            plus[index][:, k] += h
            minus[index][:, k] -= h
            step = plus[index][:, k] - minus[index][:, k]
        else:
            plus[index] += h
            minus[index] -= h
            step = plus[index] - minus[index]
        return (call(*plus) - call(*minus)) / step[:, None]

    args = [X, U, t]
    fx = np.stack([column(args, 0, k) for k in range(X.shape[1])], axis=-1) if wrt_state else None
    fu = None
    if wrt_control:
        if U.shape[1]:
            fu = np.stack([column(args, 1, k) for k in range(U.shape[1])], axis=-1)
        else:
            fu = np.zeros((M, call(X, U, t).shape[1], 0))
    ft = column(args, 2, 0)
    return fx, fu, ft


def endpoint_partials(fun: Evaluator, x0: np.ndarray, xf: np.ndarray, t0: float, tf: float) -> np.ndarray:
    """Central-difference Jacobian w.r.t. the packed vector [x0, xf, t0, tf]"""
    nx = x0.size
    packed = np.concatenate((x0, xf, [t0, tf]))

    def call(z):
        return np.atleast_1d(np.asarray(fun(z[:nx], z[nx:2 * nx], z[-2], z[-1]), dtype=float))

    columns = []
    for k in range(packed.size):
        h = FD_STEP * max(1.0, abs(packed[k]))
        plus, minus = packed.copy(), packed.copy()
        plus[k] += h
        minus[k] -= h
        columns.append((call(plus) - call(minus)) / (plus[k] - minus[k]))
    return np.stack(columns, axis=-1)


@dataclass
class Trajectory:
    grid: Grid
    X: np.ndarray
    U: np.ndarray
    t0: float
    tf: float
    objective: float = math.nan
    V: Optional[np.ndarray] = None
    variant: Optional[str] = None

    def __post_init__(self):
        n = self.grid.n_nodes
        if self.X.ndim != 2 or self.X.shape[0] != n:
            raise ProblemDefinitionError(f"X must have {n} rows, got shape {self.X.shape}")
        if self.U.ndim != 2 or self.U.shape[0] != n:
            raise ProblemDefinitionError(f"U must have {n} rows, got shape {self.U.shape}")
        if self.V is not None and self.V.shape != (n - 1, self.X.shape[1]):
            raise ProblemDefinitionError(f"V must have shape {(n - 1, self.X.shape[1])}, got {self.V.shape}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.U))):
            raise ProblemDefinitionError("trajectory samples must be finite")

    @property
    def times(self) -> np.ndarray:
        return to_physical_time(self.grid.with_domain((self.t0, self.tf)))

    @cached_property
    def basis(self) -> LagrangeBasis:
        return build_basis(self.grid)

    def state_at(self, t) -> np.ndarray:
        return interpolate(self.basis, self.X, to_canonical_time(t, self.t0, self.tf))

    def control_at(self, t, method: str = "lagrange") -> np.ndarray:
        return interpolate(self.basis, self.U, to_canonical_time(t, self.t0, self.tf), method)


# ---------------------------------------------------------------------------
# built-in problems
# ---------------------------------------------------------------------------

ORBIT_MU = 1.0


def _orbit_dynamics(A: float):
    def dynamics(x, u, t):
        r, vr, vt = x[..., 0], x[..., 2], x[..., 3]
        alpha = u[..., 0]
        return np.stack([
            vr,
            vt / r,
            vt ** 2 / r - ORBIT_MU / r ** 2 + A * np.sin(alpha),
            -vr * vt / r + A * np.cos(alpha),
        ], axis=-1)

    def jacobian(x, u, t):
        r, vr, vt = x[..., 0], x[..., 2], x[..., 3]
        alpha = u[..., 0]
        zero = np.zeros_like(r)
        one = np.ones_like(r)
        fx = np.stack([
            np.stack([zero, zero, one, zero], axis=-1),
            np.stack([-vt / r ** 2, zero, zero, 1.0 / r], axis=-1),
            np.stack([-vt ** 2 / r ** 2 + 2.0 * ORBIT_MU / r ** 3, zero, zero, 2.0 * vt / r], axis=-1),
            np.stack([vr * vt / r ** 2, zero, -vt / r, -vr / r], axis=-1),
        ], axis=-2)
        fu = np.stack([zero, zero, A * np.cos(alpha), -A * np.sin(alpha)], axis=-1)[..., None]
        return fx, fu

    return dynamics, jacobian


def tangential_thrust_arc(A: float, r_ratio: float, rtol: float = 1e-8, atol: float = 1e-10):
    """Propagate alpha = 0 thrust from the unit circular orbit until r reaches r_ratio"""
    dynamics, _ = _orbit_dynamics(A)
    x0 = np.array([1.0, 0.0, 0.0, 1.0])

    def rhs(t, x):
        return dynamics(x, np.zeros(1), t)

    def reached(t, x):
        return x[0] - r_ratio

    reached.terminal = True
    reached.direction = 1.0
    horizon = 20.0 * max(1.0 - math.sqrt(1.0 / r_ratio), 0.1) / A
    sol = solve_ivp(rhs, (0.0, horizon), x0, method="RK45", rtol=rtol, atol=atol,
                    events=reached, dense_output=True)
    if sol.status != 1:
        raise InitialGuessError(
            f"tangential-thrust arc never reached r = {r_ratio} within t = {horizon:.4g}"
        )
    return sol, float(sol.t_events[0][0])


def make_orbit_transfer(A: float, r_ratio: float) -> OcpProblem:
    """
    Minimum-time circle-to-circle low-thrust transfer in canonical units (mu = 1)

    States (r, theta, v_r, v_t), control steering angle alpha; theta_f is free.
    """
    if not (math.isfinite(A) and A > 0.0):
        raise ProblemDefinitionError(f"thrust acceleration A must be positive, got {A}")
    if not (math.isfinite(r_ratio) and r_ratio > 0.0):
        raise ProblemDefinitionError(f"r_ratio must be positive, got {r_ratio}")

    dynamics, jacobian = _orbit_dynamics(A)
    x_init = np.array([1.0, 0.0, 0.0, 1.0])
    target = np.array([r_ratio, 0.0, math.sqrt(1.0 / r_ratio)])
    tf_estimate = max(abs(1.0 - math.sqrt(1.0 / r_ratio)), 1e-3) / A

    def endpoint_fn(x0, xf, t0, tf):
        return np.concatenate((x0 - x_init, [xf[0] - target[0], xf[2] - target[1], xf[3] - target[2]]))

    def endpoint_cost(x0, xf, t0, tf):
        return tf

    cache: Dict[str, Any] = {}

    def guess(tau: np.ndarray) -> InitialGuess:
        if "arc" not in cache:
            cache["arc"] = tangential_thrust_arc(A, r_ratio)
        sol, tf = cache["arc"]
        t = 0.5 * (np.asarray(tau) + 1.0) * tf
        states = sol.sol(t).T
        return InitialGuess(states=states, controls=np.zeros((t.size, 1)), tf=tf)

    r_hi = 1.5 * max(r_ratio, 1.0)
    return OcpProblem(
        name="oxfer",
        nx=4,
        nu=1,
        dynamics=dynamics,
        endpoint_cost=endpoint_cost,
        endpoint_fn=endpoint_fn,
        endpoint_lower=np.zeros(7),
        endpoint_upper=np.zeros(7),
        time_spec=TimeSpec(t0=0.0, tf_bounds=(0.2 * tf_estimate, 5.0 * tf_estimate), tf_guess=tf_estimate),
        state_lower=[0.5 * min(r_ratio, 1.0), -np.inf, -1.0, 0.0],
        state_upper=[r_hi, np.inf, 1.0, 1.5],
        control_lower=[-np.pi],
        control_upper=[np.pi],
        dynamics_jacobian=jacobian,
        guess=guess,
        boundary_guess=(x_init, np.array([r_ratio, 0.0, 0.0, target[2]])),
        state_names=["r", "theta", "v_r", "v_t"],
        control_names=["alpha"],
        parameters={"A": A, "r_ratio": r_ratio, "mu": ORBIT_MU,
                    "initial_state": x_init.tolist(), "terminal_target": target.tolist()},
    )


def make_double_integrator() -> OcpProblem:
    """Rest-to-rest minimum time, x: (0, 0) -> (1, 0), |u| <= 1; optimum tf = 2"""

    def dynamics(x, u, t):
        return np.stack([x[..., 1], u[..., 0]], axis=-1)

    def jacobian(x, u, t):
        M = x.shape[:-1]
        fx = np.zeros(M + (2, 2))
        fx[..., 0, 1] = 1.0
        fu = np.zeros(M + (2, 1))
        fu[..., 1, 0] = 1.0
        return fx, fu

    def endpoint_fn(x0, xf, t0, tf):
        return np.array([x0[0], x0[1], xf[0] - 1.0, xf[1]])

    return OcpProblem(
        name="double-integrator",
        nx=2,
        nu=1,
        dynamics=dynamics,
        endpoint_cost=lambda x0, xf, t0, tf: tf,
        endpoint_fn=endpoint_fn,
        endpoint_lower=np.zeros(4),
        endpoint_upper=np.zeros(4),
        time_spec=TimeSpec(t0=0.0, tf_bounds=(0.5, 10.0), tf_guess=3.0),
        control_lower=[-1.0],
        control_upper=[1.0],
        dynamics_jacobian=jacobian,
        boundary_guess=(np.zeros(2), np.array([1.0, 0.0])),
        state_names=["position", "velocity"],
        control_names=["u"],
    )


def make_linear_quadratic(x0: float = 1.0, tf: float = 1.0) -> OcpProblem:
    """
    x' = u, minimize the integral of x^2 + u^2 with x(0) = x0 and x(tf) free

    The Riccati solution gives the optimal cost x0^2 tanh(tf).
    """
    if not (math.isfinite(tf) and tf > 0.0):
        raise ProblemDefinitionError(f"tf must be positive, got {tf}")

    return OcpProblem(
        name="lq",
        nx=1,
        nu=1,
        dynamics=lambda x, u, t: u.copy(),
        endpoint_cost=lambda x0_, xf, t0, t1: 0.0,
        endpoint_fn=lambda x0_, xf, t0, t1: np.array([x0_[0] - x0]),
        endpoint_lower=np.zeros(1),
        endpoint_upper=np.zeros(1),
        time_spec=TimeSpec(t0=0.0, tf=tf),
        running_cost=lambda x, u, t: x[..., 0] ** 2 + u[..., 0] ** 2,
        dynamics_jacobian=lambda x, u, t: (np.zeros(x.shape[:-1] + (1, 1)), np.ones(x.shape[:-1] + (1, 1))),
        boundary_guess=(np.array([x0]), np.array([x0])),
        state_names=["x"],
        control_names=["u"],
        parameters={"x0": x0, "tf": tf, "optimal_cost": x0 ** 2 * math.tanh(tf)},
    )


class ProblemDescriptor(BaseModel):
    """JSON descriptor for the built-in problems"""

    problem: Literal["oxfer", "double-integrator", "lq"]
    A: float = Field(default=0.01, gt=0.0)
    r_ratio: float = Field(default=6.0, gt=0.0)
    x0: float = 1.0
    tf: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="before")
    @classmethod
    def _aliases(cls, data):
        if isinstance(data, dict) and data.get("problem") in ("di", "double_integrator"):
            data = {**data, "problem": "double-integrator"}
        return data

    def build(self) -> OcpProblem:
        if self.problem == "oxfer":
            return make_orbit_transfer(self.A, self.r_ratio)
        if self.problem == "double-integrator":
            return make_double_integrator()
        return make_linear_quadratic(self.x0, self.tf)


@dataclass(frozen=True)
class CanonicalUnits:
    """Distance unit r0, speed sqrt(mu/r0), time sqrt(r0^3/mu), acceleration mu/r0^2"""

    r0_km: float = 7000.0
    mu_km3_s2: float = 398600.4418

    @property
    def distance_km(self) -> float:
        return self.r0_km

    @property
    def speed_km_s(self) -> float:
        return math.sqrt(self.mu_km3_s2 / self.r0_km)

    @property
    def time_s(self) -> float:
        return math.sqrt(self.r0_km ** 3 / self.mu_km3_s2)

    @property
    def acceleration_km_s2(self) -> float:
        return self.mu_km3_s2 / self.r0_km ** 2

    def to_days(self, t_canonical: float) -> float:
        return t_canonical * self.time_s / 86400.0

    def thrust_to_canonical(self, accel_km_s2: float) -> float:
        return accel_km_s2 / self.acceleration_km_s2
