"""
Birkhoff integration matrices for first-order collocation

Case A pins the state at tau_0 and collocates derivatives at tau_1..tau_N;
case B pins it at tau_N and collocates at tau_0..tau_{N-1}.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np
from numpy.polynomial import legendre

from .errors import BirkhoffError
from .interp import LagrangeBasis, SpectralOperators, basis_matrix, diff_matrix

logger = logging.getLogger(__name__)

# upper bound on quadrature-points x subgrid-size entries tabulated at once
_CHUNK_ENTRIES = 4_000_000


class BirkhoffCase(str, Enum):
    A = "a"
    B = "b"


def parse_case(case: Union[str, BirkhoffCase]) -> BirkhoffCase:
    if isinstance(case, BirkhoffCase):
        return case
    try:
        return BirkhoffCase(str(case).strip().lower())
    except ValueError:
        raise BirkhoffError(f"unknown Birkhoff case {case!r}; expected 'a' or 'b'") from None


@dataclass(frozen=True, eq=False)
class BirkhoffOperators:
    case: BirkhoffCase
    B: np.ndarray = field(repr=False)
    boundary_col: np.ndarray = field(repr=False)
    boundary_row: np.ndarray = field(repr=False)
    boundary_dot: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.B.shape[0]


def quadrature_points(n: int) -> int:
    """Gauss-Legendre points that integrate a degree N-1 polynomial exactly"""
    return math.ceil((n + 1) / 2) + 1


def _integral_rows(
    sub_nodes: np.ndarray,
    sub_weights: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    gl_x: np.ndarray,
    gl_w: np.ndarray
) -> np.ndarray:
    """Row r holds the integrals of every subgrid basis function over [lower[r], upper[r]]"""
    n_sub = sub_nodes.size
    m = gl_x.size
    out = np.empty((lower.size, n_sub))
    rows_per_chunk = max(1, _CHUNK_ENTRIES // (m * n_sub))
    for start in range(0, lower.size, rows_per_chunk):
        a = lower[start:start + rows_per_chunk]
        b = upper[start:start + rows_per_chunk]
        half = 0.5 * (b - a)
        pts = half[:, None] * gl_x[None, :] + 0.5 * (b + a)[:, None]
        table = basis_matrix(sub_nodes, sub_weights, pts.ravel()).reshape(a.size, m, n_sub)
        out[start:start + a.size] = half[:, None] * np.einsum("m,rmj->rj", gl_w, table)
    return out


def build_birkhoff(
    basis: LagrangeBasis,
    case: Union[str, BirkhoffCase],
    spec_ops: Optional[SpectralOperators] = None
) -> BirkhoffOperators:
    """
    Build B (N x N), the boundary column and boundary row for one case

    Entries are exact Gauss-Legendre integrals of the subgrid Lagrange basis,
    never an inverse of the inner differentiation matrix.
    """
    case = parse_case(case)
    nodes = basis.nodes
    n = nodes.size - 1
    if n < 1:
        raise BirkhoffError("Birkhoff matrices need at least two nodes")
    if np.any(np.diff(nodes) <= 0.0):
        raise BirkhoffError("degenerate grid: nodes must be strictly increasing")

    gl_x, gl_w = legendre.leggauss(quadrature_points(n))
    if case is BirkhoffCase.A:
        anchor = nodes[0]
        sub_nodes = nodes[1:]
        sub_weights = basis.bary_weights[1:] * (sub_nodes - anchor)
        sub_weights = sub_weights / np.abs(sub_weights).max()
        B = _integral_rows(sub_nodes, sub_weights, np.full(n, anchor), sub_nodes, gl_x, gl_w)
    else:
        anchor = nodes[-1]
        sub_nodes = nodes[:-1]
        sub_weights = basis.bary_weights[:-1] * (sub_nodes - anchor)
        sub_weights = sub_weights / np.abs(sub_weights).max()
        B = -_integral_rows(sub_nodes, sub_weights, sub_nodes, np.full(n, anchor), gl_x, gl_w)

    boundary_row = basis_matrix(sub_nodes, sub_weights, np.array([anchor]))[0]
    # B_0 (resp. B_N) is identically one
    boundary_col = np.ones(n)

    if spec_ops is None:
        spec_ops = diff_matrix(basis)
    birk = BirkhoffOperators(
        case=case,
        B=B,
        boundary_col=boundary_col,
        boundary_row=boundary_row,
        boundary_dot=0.0,
        metadata={"quadrature_points": int(gl_x.size)},
    )
    residual = inverse_residual(spec_ops, birk)
    threshold = 1e-9 * n
    birk.metadata.update(inverse_residual=residual, inverse_threshold=threshold)
    if residual > threshold:
        logger.warning("D B - I residual %.3e exceeds %.3e (case %s, N=%d)", residual, threshold, case.value, n)
    for arr in (birk.B, birk.boundary_col, birk.boundary_row):
        arr.setflags(write=False)
    return birk


def inner_block(spec_ops: SpectralOperators, case: BirkhoffCase) -> np.ndarray:
    return spec_ops.Da if case is BirkhoffCase.A else spec_ops.Db


def inverse_residual(spec_ops: SpectralOperators, birk: BirkhoffOperators) -> float:
    """max |D_w B_w - I| for the matching inner block"""
    inner = inner_block(spec_ops, birk.case)
    if inner.shape != birk.B.shape:
        raise BirkhoffError(
            f"shape mismatch: inner D is {inner.shape}, B is {birk.B.shape}"
        )
    return float(np.max(np.abs(inner @ birk.B - np.eye(birk.order))))


def boundary_column_residual(spec_ops: SpectralOperators, birk: BirkhoffOperators) -> float:
    """||Da b0 + l0|| (case A) or ||Db bN + lN|| (case B)"""
    inner = inner_block(spec_ops, birk.case)
    column = spec_ops.l0 if birk.case is BirkhoffCase.A else spec_ops.lN
    if inner.shape[0] != birk.boundary_col.size:
        raise BirkhoffError("shape mismatch between spectral and Birkhoff operators")
    return float(np.max(np.abs(inner @ birk.boundary_col + column)))


def reconstruct_states(birk: BirkhoffOperators, boundary_value: np.ndarray, V: np.ndarray) -> np.ndarray:
    """
    Full (N+1) node states from the pinned boundary value and derivative samples

    Case A: X_a = x0 b0 + Ba V. Case B: X_b = Bb V + xN bN.
    """
    boundary_value = np.asarray(boundary_value, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.shape[0] != birk.order:
        raise BirkhoffError(f"V must have {birk.order} rows, got shape {V.shape}")
    inner = np.multiply.outer(birk.boundary_col, boundary_value) + birk.B @ V
    if birk.case is BirkhoffCase.A:
        return np.concatenate((boundary_value[None, ...], inner), axis=0)
    return np.concatenate((inner, boundary_value[None, ...]), axis=0)


def interpolant_agreement_residual(
    spec_ops: SpectralOperators,
    birk: BirkhoffOperators,
    boundary_value: np.ndarray,
    V: np.ndarray
) -> float:
    """
    Lagrange derivative at the pinned node versus its Birkhoff counterpart

    For X reconstructed from (boundary_value, V) the two interpolants agree,
    so sum_j x_j L'_j(tau_pin) = x_pin B'_pin(tau_pin) + boundary_row . V.
    """
    X = reconstruct_states(birk, boundary_value, V)
    row = spec_ops.D[0] if birk.case is BirkhoffCase.A else spec_ops.D[-1]
    lagrange = row @ X
    birkhoff = birk.boundary_dot * np.asarray(boundary_value) + birk.boundary_row @ np.asarray(V)
    return float(np.max(np.abs(lagrange - birkhoff)))
