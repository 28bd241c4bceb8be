"""
Direct transcription of an OcpProblem into a dense NLP

Decision vector layout: [X (N+1)*nx | U (N+1)*nu | V N*nx (Birkhoff) | tf (free)].
All node arrays are flattened row-major (node, component). Every dynamics
occurrence carries the time scale s = (tf - t0) / 2 of the canonical map.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import legendre
from scipy.fft import ifft

from .birkhoff import BirkhoffCase, BirkhoffOperators, build_birkhoff
from .errors import TranscriptionError
from .grid import Grid, GridKind
from .interp import build_basis, diff_matrix, interpolate
from .ocp import OcpProblem, Trajectory, endpoint_partials, node_partials

logger = logging.getLogger(__name__)


class MethodVariant(str, Enum):
    LAGRANGE = "lagrange"
    BIRKHOFF_A = "birkhoff-a"
    BIRKHOFF_B = "birkhoff-b"
    LEFT_PRECOND_A = "left-precond-a"
    LEFT_PRECOND_B = "left-precond-b"

    @property
    def has_v(self) -> bool:
        return self in (MethodVariant.BIRKHOFF_A, MethodVariant.BIRKHOFF_B)

    @property
    def case(self) -> Optional[BirkhoffCase]:
        if self in (MethodVariant.BIRKHOFF_A, MethodVariant.LEFT_PRECOND_A):
            return BirkhoffCase.A
        if self in (MethodVariant.BIRKHOFF_B, MethodVariant.LEFT_PRECOND_B):
            return BirkhoffCase.B
        return None


_ALIASES = {
    "lagrangepn": MethodVariant.LAGRANGE,
    "birkhoffa": MethodVariant.BIRKHOFF_A,
    "birkhoffb": MethodVariant.BIRKHOFF_B,
    "leftpreconda": MethodVariant.LEFT_PRECOND_A,
    "leftprecondb": MethodVariant.LEFT_PRECOND_B,
    # right preconditioning of the Lagrange method reproduces Birkhoff case A
    "rightpreconda": MethodVariant.BIRKHOFF_A,
}


def parse_variant(name: Union[str, MethodVariant]) -> MethodVariant:
    if isinstance(name, MethodVariant):
        return name
    key = str(name).strip().lower().replace("_", "-")
    try:
        return MethodVariant(key)
    except ValueError:
        pass
    compact = key.replace("-", "")
    if compact in _ALIASES:
        return _ALIASES[compact]
    choices = ", ".join([v.value for v in MethodVariant] + ["right-precond-a"])
    raise TranscriptionError(f"unknown method variant {name!r}; expected one of {choices}")


@dataclass(frozen=True)
class VariableLayout:
    n_nodes: int
    nx: int
    nu: int
    n_v: int
    free_tf: bool
    t0: float
    tf_fixed: Optional[float] = None

    @property
    def x_slice(self) -> slice:
        return slice(0, self.n_nodes * self.nx)

    @property
    def u_slice(self) -> slice:
        start = self.x_slice.stop
        return slice(start, start + self.n_nodes * self.nu)

    @property
    def v_slice(self) -> slice:
        start = self.u_slice.stop
        return slice(start, start + self.n_v * self.nx)

    @property
    def tf_index(self) -> Optional[int]:
        return self.v_slice.stop if self.free_tf else None

    @property
    def n_vars(self) -> int:
        return self.v_slice.stop + (1 if self.free_tf else 0)

    def pack(self, X, U, V=None, tf: Optional[float] = None) -> np.ndarray:
        z = np.empty(self.n_vars)
        z[self.x_slice] = np.asarray(X, dtype=float).reshape(-1)
        z[self.u_slice] = np.asarray(U, dtype=float).reshape(-1)
        if self.n_v:
            if V is None:
                raise TranscriptionError("this layout carries V; pass derivative samples")
            z[self.v_slice] = np.asarray(V, dtype=float).reshape(-1)
        if self.free_tf:
            if tf is None:
                raise TranscriptionError("this layout has a free final time; pass tf")
            z[self.tf_index] = tf
        return z

    def unpack(self, z) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray], float]:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_vars,):
            raise TranscriptionError(f"decision vector must have length {self.n_vars}, got shape {z.shape}")
        X = z[self.x_slice].reshape(self.n_nodes, self.nx)
        U = z[self.u_slice].reshape(self.n_nodes, self.nu)
        V = z[self.v_slice].reshape(self.n_v, self.nx) if self.n_v else None
        tf = float(z[self.tf_index]) if self.free_tf else float(self.tf_fixed)
        return X, U, V, tf


def _empty(z):
    return np.zeros(0)


@dataclass
class NlpProblem:
    """
    min f(x) s.t. c(x) = 0, gL <= g(x) <= gU, lower <= x <= upper

    Missing constraint evaluators mean no constraints of that type.
    """

    n_vars: int
    objective: Callable[[np.ndarray], float]
    objective_gradient: Callable[[np.ndarray], np.ndarray]
    equality: Optional[Callable[[np.ndarray], np.ndarray]] = None
    equality_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inequality: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inequality_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inequality_lower: Optional[np.ndarray] = None
    inequality_upper: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    layout: Optional[VariableLayout] = None
    sparsity: Optional[np.ndarray] = field(default=None, repr=False)
    equality_blocks: Dict[str, slice] = field(default_factory=dict)
    inequality_blocks: Dict[str, slice] = field(default_factory=dict)
    variant: Optional[MethodVariant] = None
    problem: Optional[OcpProblem] = field(default=None, repr=False)
    grid: Optional[Grid] = field(default=None, repr=False)

    def __post_init__(self):
        n = self.n_vars
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise TranscriptionError(f"variable bounds must have length {n}")
        if self.equality is None:
            self.equality = _empty
            self.equality_jacobian = lambda z: np.zeros((0, n))
        if self.inequality is None:
            self.inequality = _empty
            self.inequality_jacobian = lambda z: np.zeros((0, n))
            self.inequality_lower = np.zeros(0)
            self.inequality_upper = np.zeros(0)
        self.inequality_lower = np.atleast_1d(np.asarray(self.inequality_lower, dtype=float))
        self.inequality_upper = np.atleast_1d(np.asarray(self.inequality_upper, dtype=float))
        self._ineq_lo = np.flatnonzero(np.isfinite(self.inequality_lower))
        self._ineq_hi = np.flatnonzero(np.isfinite(self.inequality_upper))
        self._box_lo = np.flatnonzero(np.isfinite(self.lower))
        self._box_hi = np.flatnonzero(np.isfinite(self.upper))

    def reference_point(self) -> np.ndarray:
        return np.clip(np.zeros(self.n_vars), self.lower, self.upper)

    @property
    def m_eq(self) -> int:
        if self.equality_blocks:
            return max(sl.stop for sl in self.equality_blocks.values())
        return int(np.size(self.equality(self.reference_point())))

    @property
    def m_ineq(self) -> int:
        return self.inequality_lower.size

    @property
    def n_one_sided(self) -> int:
        return self._ineq_lo.size + self._ineq_hi.size

    @property
    def n_bound_sides(self) -> int:
        return self._box_lo.size + self._box_hi.size

    def one_sided(self, z) -> np.ndarray:
        """Inequalities as slacks >= 0: [g - gL (finite gL), gU - g (finite gU)]"""
        g = np.asarray(self.inequality(z), dtype=float)
        return np.concatenate((g[self._ineq_lo] - self.inequality_lower[self._ineq_lo],
                               self.inequality_upper[self._ineq_hi] - g[self._ineq_hi]))

    def one_sided_jacobian(self, z) -> np.ndarray:
        J = np.asarray(self.inequality_jacobian(z), dtype=float).reshape(-1, self.n_vars)
        return np.vstack((J[self._ineq_lo], -J[self._ineq_hi]))

    def bound_slacks(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.concatenate((z[self._box_lo] - self.lower[self._box_lo],
                               self.upper[self._box_hi] - z[self._box_hi]))

    def bound_jacobian(self) -> np.ndarray:
        J = np.zeros((self.n_bound_sides, self.n_vars))
        k = self._box_lo.size
        J[np.arange(k), self._box_lo] = 1.0
        J[k + np.arange(self._box_hi.size), self._box_hi] = -1.0
        return J


def quadrature_weights(grid: Grid) -> np.ndarray:
    """Clenshaw-Curtis weights on CGL grids, Gauss-Lobatto weights on LGL grids"""
    n = grid.order
    if grid.kind is GridKind.CGL:
        if n == 1:
            return np.ones(2)
        odd = np.arange(1, n, 2)
        n_odd = odd.size
        m = n - n_odd
        v0 = np.concatenate((2.0 / odd / (odd - 2), [1.0 / odd[-1]], np.zeros(m)))
        v2 = -v0[:-1] - v0[-1:0:-1]
        g0 = -np.ones(n)
        g0[n_odd] += n
        g0[m] += n
        g = g0 / (n ** 2 - 1 + (n % 2))
        w = ifft(v2 + g).real
        # symmetric, so the cosine ordering needs no reversal
        return np.concatenate((w, w[:1]))
    if grid.kind is GridKind.LGL:
        p_n = legendre.legval(grid.nodes, np.eye(n + 1)[n])
        return 2.0 / (n * (n + 1) * p_n ** 2)
    raise TranscriptionError(f"quadrature weights need a CGL or LGL grid, got {grid.kind.value}")


def _scatter(blocks: np.ndarray, node_idx, n_nodes: int) -> np.ndarray:
    """Place per-node (a x b) blocks at their node columns: (R*a, n_nodes*b)"""
    R, a, b = blocks.shape
    out = np.zeros((R, a, n_nodes, b))
    out[np.arange(R), :, np.asarray(node_idx), :] = blocks
    return out.reshape(R * a, n_nodes * b)


@dataclass
class _NodeValues:
    X: np.ndarray
    U: np.ndarray
    V: Optional[np.ndarray]
    tf: float
    s: float
    t: np.ndarray
    F: np.ndarray


class _Collocation:
    """Constraint blocks and their Jacobians for one (problem, grid, variant)"""

    def __init__(self, prob: OcpProblem, grid: Grid, variant: MethodVariant):
        self.prob = prob
        self.grid = grid
        self.variant = variant
        self.tau = grid.nodes
        self.M = grid.n_nodes
        self.N = grid.order
        nx, nu = prob.nx, prob.nu
        self.nx, self.nu = nx, nu

        basis = build_basis(grid)
        self.ops = diff_matrix(basis)
        self.birk: Optional[BirkhoffOperators] = None
        if variant.case is not None:
            self.birk = build_birkhoff(basis, variant.case, spec_ops=self.ops)

        ts = prob.time_spec
        self.layout = VariableLayout(
            n_nodes=self.M,
            nx=nx,
            nu=nu,
            n_v=self.N if variant.has_v else 0,
            free_tf=ts.free_final_time,
            t0=ts.t0,
            tf_fixed=ts.tf,
        )
        self.dt_dtf = 0.5 * (self.tau + 1.0)
        self.weights = quadrature_weights(grid) if prob.running_cost is not None else None

        eye = np.eye(nx)
        if variant is MethodVariant.LAGRANGE:
            self.D_k = np.kron(self.ops.D, eye)
        elif self.birk is not None:
            self.B_k = np.kron(self.birk.B, eye)
            if variant.has_v:
                self.row_k = np.kron(self.birk.boundary_row[None, :], eye)
            else:
                pin_row = self.ops.D[0] if variant.case is BirkhoffCase.A else self.ops.D[-1]
                self.pin_row_k = np.kron(pin_row[None, :], eye)
                column = self.ops.l0 if variant.case is BirkhoffCase.A else self.ops.lN
                self.Bl = self.birk.B @ column

        e_lo, e_hi = prob.endpoint_lower, prob.endpoint_upper
        self.e_eq = np.flatnonzero(e_lo == e_hi)
        self.e_in = np.flatnonzero(e_lo != e_hi)
        self._node_cache: Tuple[Optional[bytes], Optional[_NodeValues]] = (None, None)
        self._partials_cache: Tuple[Optional[bytes], Optional[tuple]] = (None, None)

    # -- node evaluations -------------------------------------------------

    @property
    def pin(self) -> int:
        """Index of the node whose state is held by the Birkhoff boundary column"""
        return 0 if self.variant.case is not BirkhoffCase.B else self.M - 1

    @property
    def collocated(self) -> np.ndarray:
        return np.arange(1, self.M) if self.pin == 0 else np.arange(0, self.M - 1)

    def values(self, z) -> _NodeValues:
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        cached = self._node_cache
        if cached[0] == key:
            return cached[1]
        X, U, V, tf = self.layout.unpack(z)
        s = 0.5 * (tf - self.layout.t0)
        t = self.layout.t0 + (self.tau + 1.0) * s
        F = self.prob.evaluate_dynamics(X, U, t)
        result = _NodeValues(X, U, V, tf, s, t, F)
        self._node_cache = (key, result)
        return result

    def partials(self, z):
        key = np.asarray(z, dtype=float).tobytes()
        cached = self._partials_cache
        if cached[0] == key:
            return cached[1]
        nv = self.values(z)
        result = self.prob.dynamics_partials(nv.X, nv.U, nv.t)
        self._partials_cache = (key, result)
        return result

    def _scaled_f_tf(self, nv: _NodeValues, ft: np.ndarray, nodes) -> np.ndarray:
        """d(s F)/d tf at the given nodes, shape (len(nodes), nx)"""
        return 0.5 * nv.F[nodes] + nv.s * ft[nodes] * self.dt_dtf[nodes, None]

    # -- equality constraints ---------------------------------------------

    def equality_blocks(self) -> List[Tuple[str, int]]:
        nx, N, M = self.nx, self.N, self.M
        v = self.variant
        if v is MethodVariant.LAGRANGE:
            blocks = [("dynamics", M * nx)]
        elif v.has_v:
            blocks = [("dynamics", N * nx), ("reconstruction", N * nx), ("boundary_row", nx)]
        else:
            blocks = [("boundary_row", nx), ("reconstruction", N * nx)]
        blocks.append(("endpoint", self.e_eq.size))
        return blocks

    def equality(self, z) -> np.ndarray:
        nv = self.values(z)
        X, V, F, s = nv.X, nv.V, nv.F, nv.s
        v = self.variant
        pin, col = self.pin, self.collocated
        parts = []
        if v is MethodVariant.LAGRANGE:
            parts.append((self.ops.D @ X - s * F).ravel())
        elif v.has_v:
            birk = self.birk
            parts.append((V - s * F[col]).ravel())
            parts.append((X[col] - np.outer(birk.boundary_col, X[pin]) - birk.B @ V).ravel())
            parts.append(birk.boundary_row @ V + birk.boundary_dot * X[pin] - s * F[pin])
        else:
            pin_row = self.ops.D[pin]
            parts.append(pin_row @ X - s * F[pin])
            parts.append((X[col] - s * self.birk.B @ F[col] + np.outer(self.Bl, X[pin])).ravel())
        e = np.atleast_1d(self.prob.endpoint_fn(X[0], X[-1], self.layout.t0, nv.tf))
        parts.append(e[self.e_eq] - self.prob.endpoint_lower[self.e_eq])
        return np.concatenate(parts)

    def equality_jacobian(self, z, partials=None) -> np.ndarray:
        nv = self.values(z)
        fx, fu, ft = self.partials(z) if partials is None else partials
        lay = self.layout
        nx, M, N = self.nx, self.M, self.N
        v = self.variant
        pin, col = self.pin, self.collocated
        rows = []

        def new_rows(count):
            block = np.zeros((count, lay.n_vars))
            rows.append(block)
            return block

        if v is MethodVariant.LAGRANGE:
            J = new_rows(M * nx)
            J[:, lay.x_slice] = self.D_k - nv.s * _scatter(fx, np.arange(M), M)
            J[:, lay.u_slice] = -nv.s * _scatter(fu, np.arange(M), M)
            if lay.free_tf:
                J[:, lay.tf_index] = -self._scaled_f_tf(nv, ft, np.arange(M)).ravel()
        elif v.has_v:
            J = new_rows(N * nx)
            J[:, lay.v_slice] = np.eye(N * nx)
            J[:, lay.x_slice] = -nv.s * _scatter(fx[col], col, M)
            J[:, lay.u_slice] = -nv.s * _scatter(fu[col], col, M)
            if lay.free_tf:
                J[:, lay.tf_index] = -self._scaled_f_tf(nv, ft, col).ravel()

            J = new_rows(N * nx)
            Jx = J[:, lay.x_slice].reshape(N * nx, M, nx)
            Jx[:, col, :] = np.eye(N * nx).reshape(N * nx, N, nx)
            Jx[:, pin, :] = -np.kron(self.birk.boundary_col[:, None], np.eye(nx))
            J[:, lay.v_slice] = -self.B_k

            J = new_rows(nx)
            J[:, lay.v_slice] = self.row_k
            Jx = J[:, lay.x_slice].reshape(nx, M, nx)
            Jx[:, pin, :] = self.birk.boundary_dot * np.eye(nx) - nv.s * fx[pin]
            Ju = J[:, lay.u_slice].reshape(nx, M, self.nu)
            Ju[:, pin, :] = -nv.s * fu[pin]
            if lay.free_tf:
                J[:, lay.tf_index] = -self._scaled_f_tf(nv, ft, [pin]).ravel()
        else:
            J = new_rows(nx)
            J[:, lay.x_slice] = self.pin_row_k
            Jx = J[:, lay.x_slice].reshape(nx, M, nx)
            Jx[:, pin, :] -= nv.s * fx[pin]
            Ju = J[:, lay.u_slice].reshape(nx, M, self.nu)
            Ju[:, pin, :] = -nv.s * fu[pin]
            if lay.free_tf:
                J[:, lay.tf_index] = -self._scaled_f_tf(nv, ft, [pin]).ravel()

            J = new_rows(N * nx)
            J[:, lay.x_slice] = -nv.s * self.B_k @ _scatter(fx[col], col, M)
            Jx = J[:, lay.x_slice].reshape(N * nx, M, nx)
            Jx[:, col, :] += np.eye(N * nx).reshape(N * nx, N, nx)
            Jx[:, pin, :] += np.kron(self.Bl[:, None], np.eye(nx))
            J[:, lay.u_slice] = -nv.s * self.B_k @ _scatter(fu[col], col, M)
            if lay.free_tf:
                J[:, lay.tf_index] = -self.B_k @ self._scaled_f_tf(nv, ft, col).ravel()

        if self.e_eq.size:
            J = new_rows(self.e_eq.size)
            self._endpoint_rows(J, nv, self.e_eq)
        return np.vstack(rows)

    def _endpoint_rows(self, J, nv: _NodeValues, index):
        lay = self.layout
        nx, M = self.nx, self.M
        P = endpoint_partials(self.prob.endpoint_fn, nv.X[0], nv.X[-1], lay.t0, nv.tf)[index]
        Jx = J[:, lay.x_slice].reshape(J.shape[0], M, nx)
        Jx[:, 0, :] += P[:, :nx]
        Jx[:, M - 1, :] += P[:, nx:2 * nx]
        if lay.free_tf:
            J[:, lay.tf_index] = P[:, -1]

    # -- inequality constraints -------------------------------------------

    def inequality_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        prob = self.prob
        lo = [prob.endpoint_lower[self.e_in]]
        hi = [prob.endpoint_upper[self.e_in]]
        if prob.path_fn is not None:
            lo.append(np.tile(prob.path_lower, self.M))
            hi.append(np.tile(prob.path_upper, self.M))
        return np.concatenate(lo), np.concatenate(hi)

    def inequality(self, z) -> np.ndarray:
        nv = self.values(z)
        parts = []
        if self.e_in.size:
            e = np.atleast_1d(self.prob.endpoint_fn(nv.X[0], nv.X[-1], self.layout.t0, nv.tf))
            parts.append(e[self.e_in])
        if self.prob.path_fn is not None:
            h = np.asarray(self.prob.path_fn(nv.X, nv.U, nv.t), dtype=float).reshape(self.M, -1)
            parts.append(h.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def inequality_jacobian(self, z) -> np.ndarray:
        nv = self.values(z)
        lay = self.layout
        rows = []
        if self.e_in.size:
            J = np.zeros((self.e_in.size, lay.n_vars))
            self._endpoint_rows(J, nv, self.e_in)
            rows.append(J)
        if self.prob.path_fn is not None:
            hx, hu, ht = node_partials(self.prob.path_fn, nv.X, nv.U, nv.t)
            J = np.zeros((hx.shape[0] * hx.shape[1], lay.n_vars))
            J[:, lay.x_slice] = _scatter(hx, np.arange(self.M), self.M)
            J[:, lay.u_slice] = _scatter(hu, np.arange(self.M), self.M)
            if lay.free_tf:
                J[:, lay.tf_index] = (ht * self.dt_dtf[:, None]).ravel()
            rows.append(J)
        return np.vstack(rows) if rows else np.zeros((0, lay.n_vars))

    # -- objective ----------------------------------------------------------

    def objective(self, z) -> float:
        nv = self.values(z)
        J = float(self.prob.endpoint_cost(nv.X[0], nv.X[-1], self.layout.t0, nv.tf))
        if self.weights is not None:
            F = np.asarray(self.prob.running_cost(nv.X, nv.U, nv.t), dtype=float).reshape(self.M)
            J += nv.s * float(self.weights @ F)
        return J

    def objective_gradient(self, z) -> np.ndarray:
        nv = self.values(z)
        lay = self.layout
        nx, M = self.nx, self.M
        grad = np.zeros(lay.n_vars)
        P = endpoint_partials(self.prob.endpoint_cost, nv.X[0], nv.X[-1], lay.t0, nv.tf)[0]
        gx = grad[lay.x_slice].reshape(M, nx)
        gx[0] += P[:nx]
        gx[-1] += P[nx:2 * nx]
        if lay.free_tf:
            grad[lay.tf_index] += P[-1]
        if self.weights is not None:
            Fx, Fu, Ft = node_partials(self.prob.running_cost, nv.X, nv.U, nv.t)
            w = nv.s * self.weights
            gx += w[:, None] * Fx[:, 0, :]
            grad[lay.u_slice] += (w[:, None] * Fu[:, 0, :]).ravel()
            if lay.free_tf:
                F = np.asarray(self.prob.running_cost(nv.X, nv.U, nv.t), dtype=float).reshape(M)
                grad[lay.tf_index] += 0.5 * float(self.weights @ F) + float(w @ (Ft[:, 0] * self.dt_dtf))
        return grad

    # -- bounds and structure ---------------------------------------------

    def variable_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        prob, lay = self.prob, self.layout
        lower = np.full(lay.n_vars, -np.inf)
        upper = np.full(lay.n_vars, np.inf)
        lower[lay.x_slice] = np.tile(prob.state_lower, self.M)
        upper[lay.x_slice] = np.tile(prob.state_upper, self.M)
        lower[lay.u_slice] = np.tile(prob.control_lower, self.M)
        upper[lay.u_slice] = np.tile(prob.control_upper, self.M)
        if lay.free_tf:
            lower[lay.tf_index], upper[lay.tf_index] = prob.time_spec.tf_bounds
        return lower, upper

    def sparsity(self, z) -> np.ndarray:
        """Structural nonzeros of the equality Jacobian (unit dynamics partials)"""
        ones = (np.ones((self.M, self.nx, self.nx)), np.ones((self.M, self.nx, self.nu)),
                np.ones((self.M, self.nx)))
        pattern = self.equality_jacobian(z, partials=ones) != 0.0
        if self.layout.free_tf:
            # the tf column carries f itself, which may vanish at z
            pattern[:, self.layout.tf_index] = True
        return pattern


def transcribe(prob: OcpProblem, grid: Grid, variant: Union[str, MethodVariant]) -> NlpProblem:
    """
    Discretize prob on a Lobatto grid with one of the method variants

    Radau, Gauss and uniform grids are rejected: they suit only restricted
    boundary conditions on finite horizons.
    """
    variant = parse_variant(variant)
    if not grid.kind.is_lobatto:
        raise TranscriptionError(
            f"transcription needs a Lobatto grid (cgl or lgl), got {grid.kind.value}; "
            "Radau, Gauss and uniform grids suit only restricted boundary conditions on finite horizons"
        )
    col = _Collocation(prob, grid, variant)
    lower, upper = col.variable_bounds()
    ineq_lo, ineq_hi = col.inequality_bounds()

    eq_blocks, start = {}, 0
    for name, size in col.equality_blocks():
        eq_blocks[name] = slice(start, start + size)
        start += size
    ineq_blocks = {"endpoint": slice(0, col.e_in.size)}
    if prob.path_fn is not None:
        ineq_blocks["path"] = slice(col.e_in.size, ineq_lo.size)

    z_ref = np.clip(np.zeros(col.layout.n_vars), lower, upper)
    if col.layout.free_tf:
        z_ref[col.layout.tf_index] = prob.time_spec.initial_tf
    nlp = NlpProblem(
        n_vars=col.layout.n_vars,
        objective=col.objective,
        objective_gradient=col.objective_gradient,
        equality=col.equality,
        equality_jacobian=col.equality_jacobian,
        inequality=col.inequality if ineq_lo.size else None,
        inequality_jacobian=col.inequality_jacobian if ineq_lo.size else None,
        inequality_lower=ineq_lo,
        inequality_upper=ineq_hi,
        lower=lower,
        upper=upper,
        layout=col.layout,
        sparsity=col.sparsity(z_ref),
        equality_blocks=eq_blocks,
        inequality_blocks=ineq_blocks,
        variant=variant,
        problem=prob,
        grid=grid,
    )
    logger.info("transcribed %s on %s N=%d with %s: %d vars, %d equalities, %d inequalities",
                prob.name, grid.kind.value, grid.order, variant.value, nlp.n_vars, start, ineq_lo.size)
    return nlp


def extract_trajectory(z, nlp: NlpProblem) -> Trajectory:
    if nlp.layout is None or nlp.grid is None:
        raise TranscriptionError("NLP has no variable layout to extract a trajectory from")
    X, U, V, tf = nlp.layout.unpack(z)
    return Trajectory(
        grid=nlp.grid,
        X=X.copy(),
        U=U.copy(),
        V=None if V is None else V.copy(),
        t0=nlp.layout.t0,
        tf=tf,
        objective=float(nlp.objective(np.asarray(z, dtype=float))),
        variant=nlp.variant.value if nlp.variant else None,
    )


def defect_report(nlp: NlpProblem, z) -> Dict[str, float]:
    """Max residual per constraint block; inequality blocks report violation"""
    z = np.asarray(z, dtype=float)
    report = {}
    c = np.asarray(nlp.equality(z))
    for name, sl in nlp.equality_blocks.items():
        report[name] = float(np.max(np.abs(c[sl]), initial=0.0))
    if nlp.m_ineq:
        g = np.asarray(nlp.inequality(z))
        violation = np.maximum(np.maximum(nlp.inequality_lower - g, g - nlp.inequality_upper), 0.0)
        for name, sl in nlp.inequality_blocks.items():
            report[f"{name}_inequality"] = float(np.max(violation[sl], initial=0.0))
    bounds = np.maximum(np.maximum(nlp.lower - z, z - nlp.upper), 0.0)
    report["bounds"] = float(np.max(bounds, initial=0.0))
    return report


def _start_vector(nlp: NlpProblem, X: np.ndarray, U: np.ndarray, tf: float) -> np.ndarray:
    prob, lay = nlp.problem, nlp.layout
    if lay.free_tf:
        lo, hi = prob.time_spec.tf_bounds
        tf = float(np.clip(tf, lo, hi))
    else:
        tf = lay.tf_fixed
    X = np.clip(X, prob.state_lower, prob.state_upper)
    U = np.clip(U, prob.control_lower, prob.control_upper)
    V = None
    if lay.n_v:
        s = 0.5 * (tf - lay.t0)
        t = lay.t0 + (nlp.grid.nodes + 1.0) * s
        F = prob.evaluate_dynamics(X, U, t)
        V = s * (F[1:] if nlp.variant.case is BirkhoffCase.A else F[:-1])
    return np.clip(lay.pack(X, U, V, tf), nlp.lower, nlp.upper)


def initial_guess(nlp: NlpProblem) -> np.ndarray:
    """
    Cold start: the problem's own guess if it has one, else a straight line
    between its boundary guesses with controls at the nearest admissible zero
    """
    prob, grid = nlp.problem, nlp.grid
    if prob is None or grid is None:
        raise TranscriptionError("initial guesses need a transcribed NLP")
    tau = grid.nodes
    if prob.guess is not None:
        g = prob.guess(tau)
        return _start_vector(nlp, np.asarray(g.states, dtype=float), np.asarray(g.controls, dtype=float), g.tf)
    x0, xf = prob.boundary_guess or (np.zeros(prob.nx), np.zeros(prob.nx))
    frac = 0.5 * (tau + 1.0)[:, None]
    X = np.asarray(x0)[None, :] + frac * (np.asarray(xf) - np.asarray(x0))[None, :]
    U = np.zeros((grid.n_nodes, prob.nu))
    return _start_vector(nlp, X, U, prob.time_spec.initial_tf)


def warm_start(nlp: NlpProblem, trajectory: Trajectory) -> np.ndarray:
    """Interpolate a coarser solution onto this NLP's grid; V is rebuilt as s f(X, U)"""
    basis = build_basis(trajectory.grid)
    nodes = nlp.grid.nodes
    X = interpolate(basis, trajectory.X, nodes)
    U = interpolate(basis, trajectory.U, nodes)
    return _start_vector(nlp, X, U, trajectory.tf)
