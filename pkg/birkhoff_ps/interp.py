"""
Barycentric Lagrange interpolation, the pseudospectral differentiation matrix
and Chebyshev modal coefficients
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev
from scipy.fft import dct

from .errors import InterpolationError
from .grid import Grid, GridKind

logger = logging.getLogger(__name__)

NODE_TOL = 1e-14
QUERY_TOL = 1e-12


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    """
    w_j = 1 / prod_{k != j} (tau_j - tau_k), rescaled to max |w_j| = 1

    Magnitudes are accumulated as log sums so large N does not overflow.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.size < 1:
        raise InterpolationError("nodes must be a non-empty 1-D array")
    if not np.all(np.isfinite(nodes)):
        raise InterpolationError("nodes must be finite")
    if nodes.size == 1:
        return np.ones(1)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise InterpolationError("duplicate nodes")
    log_mag = -np.sum(np.log(np.abs(diff)), axis=1)
    negatives = np.sum(diff < 0.0, axis=1)
    sign = np.where(negatives % 2 == 0, 1.0, -1.0)
    return sign * np.exp(log_mag - log_mag.max())


@dataclass(frozen=True, eq=False)
class LagrangeBasis:
    grid: Grid
    bary_weights: np.ndarray = field(repr=False)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def order(self) -> int:
        return self.grid.order


def build_basis(grid: Grid) -> LagrangeBasis:
    weights = barycentric_weights(grid.nodes)
    weights.setflags(write=False)
    return LagrangeBasis(grid, weights)


def basis_matrix(
    nodes: np.ndarray,
    weights: np.ndarray,
    points: np.ndarray,
    node_tol: float = NODE_TOL
) -> np.ndarray:
    """
    Tabulate every Lagrange basis function at the given points, shape (M, n)

    Points within node_tol of a node get the exact Kronecker row.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    diff = points[:, None] - nodes[None, :]
    close = np.abs(diff) <= node_tol
    hit = close.any(axis=1)
    diff[close] = 1.0
    table = weights[None, :] / diff
    table /= table.sum(axis=1, keepdims=True)
    if hit.any():
        rows = np.flatnonzero(hit)
        table[rows] = 0.0
        table[rows, np.argmax(close[rows], axis=1)] = 1.0
    return table


def _check_query(query) -> np.ndarray:
    query = np.atleast_1d(np.asarray(query, dtype=float))
    if not np.all(np.isfinite(query)):
        raise InterpolationError("query points must be finite")
    if query.size and (query.min() < -1.0 - QUERY_TOL or query.max() > 1.0 + QUERY_TOL):
        raise InterpolationError(
            f"query points must lie in [-1, 1], got range [{query.min()}, {query.max()}]"
        )
    return np.clip(query, -1.0, 1.0)


def _check_samples(basis: LagrangeBasis, samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim not in (1, 2) or samples.shape[0] != basis.grid.n_nodes:
        raise InterpolationError(
            f"samples must have {basis.grid.n_nodes} rows, got shape {samples.shape}"
        )
    if not np.all(np.isfinite(samples)):
        raise InterpolationError("samples must be finite")
    return samples


def interpolate(
    basis: LagrangeBasis,
    samples: np.ndarray,
    query,
    method: str = "lagrange"
) -> np.ndarray:
    """
    Evaluate the interpolant of node samples at canonical query points

    Args:
        basis: Lagrange basis of the grid
        samples: (N+1,) or (N+1, k) values at the nodes
        query: points in [-1, 1]
        method: "lagrange" (barycentric) or "linear" (piecewise linear)
    """
    samples = _check_samples(basis, samples)
    query = _check_query(query)
    if method == "lagrange":
        return basis_matrix(basis.nodes, basis.bary_weights, query) @ samples
    if method == "linear":
        if samples.ndim == 1:
            return np.interp(query, basis.nodes, samples)
        return np.column_stack([np.interp(query, basis.nodes, col) for col in samples.T])
    raise InterpolationError(f"unknown interpolation method {method!r}; expected 'lagrange' or 'linear'")


@dataclass(frozen=True, eq=False)
class SpectralOperators:
    """D and its partitions; Da/Db drop the first/last node, l0/lN are the dropped columns"""

    D: np.ndarray = field(repr=False)
    Da: np.ndarray = field(repr=False)
    Db: np.ndarray = field(repr=False)
    l0: np.ndarray = field(repr=False)
    lN: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return self.D.shape[0] - 1


def differentiation_matrix(nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (weights[None, :] / weights[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def diff_matrix(basis: LagrangeBasis) -> SpectralOperators:
    D = differentiation_matrix(basis.nodes, basis.bary_weights)
    ops = SpectralOperators(
        D=D,
        Da=D[1:, 1:].copy(),
        Db=D[:-1, :-1].copy(),
        l0=D[1:, 0].copy(),
        lN=D[:-1, -1].copy(),
    )
    for arr in (ops.D, ops.Da, ops.Db, ops.l0, ops.lN):
        arr.setflags(write=False)
    return ops


@dataclass(frozen=True, eq=False)
class SpectralCoefficients:
    """Chebyshev coefficients a_m, m = 0..N, along axis 0"""

    coeffs: np.ndarray

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def evaluate(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        values = chebyshev.chebval(tau, self.coeffs)
        if self.coeffs.ndim == 2:
            return np.moveaxis(values, 0, -1)
        return values

    def tail_ratio(self, fraction: float = 0.1) -> np.ndarray:
        """max |a_m| over the trailing fraction divided by max |a_m|, per column"""
        return tail_ratio(self.coeffs, fraction)


def modal_coefficients(grid: Grid, samples) -> SpectralCoefficients:
    if grid.kind is not GridKind.CGL:
        raise InterpolationError(f"modal coefficients need a CGL grid, got {grid.kind.value}")
    samples = np.asarray(samples, dtype=float)
    if samples.ndim not in (1, 2) or samples.shape[0] != grid.n_nodes:
        raise InterpolationError(f"samples must have {grid.n_nodes} rows, got shape {samples.shape}")
    n = grid.order
    # ascending CGL nodes are cos((N - i) pi / N), so reversing gives DCT-I order
    coeffs = dct(samples[::-1], type=1, axis=0) / n
    coeffs[0] *= 0.5
    coeffs[-1] *= 0.5
    return SpectralCoefficients(coeffs)


def tail_ratio(coeffs: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    coeffs = np.abs(np.asarray(coeffs, dtype=float))
    n_tail = max(1, math.ceil(fraction * coeffs.shape[0]))
    peak = coeffs.max(axis=0)
    tail = coeffs[-n_tail:].max(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(peak > 0.0, tail / np.where(peak > 0.0, peak, 1.0), 0.0)
