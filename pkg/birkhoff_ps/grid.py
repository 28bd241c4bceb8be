"""
Collocation grids on [-1, 1] and their affine map to physical time
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple, Union

import numpy as np
from numpy.polynomial import legendre

from .errors import GridError

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-14
NEWTON_MAX_ITER = 100


class GridKind(str, Enum):
    CGL = "cgl"
    LGL = "lgl"
    LGR = "lgr"
    CGR = "cgr"
    CG = "cg"
    LG = "lg"
    UNIFORM = "uniform"

    @property
    def is_lobatto(self) -> bool:
        return self in (GridKind.CGL, GridKind.LGL)

    @property
    def is_radau(self) -> bool:
        return self in (GridKind.LGR, GridKind.CGR)

    @property
    def is_gauss(self) -> bool:
        return self in (GridKind.CG, GridKind.LG)


def parse_kind(kind: Union[str, GridKind]) -> GridKind:
    if isinstance(kind, GridKind):
        return kind
    try:
        return GridKind(str(kind).strip().lower())
    except ValueError:
        choices = ", ".join(k.value for k in GridKind)
        raise GridError(f"unknown grid kind {kind!r}; expected one of {choices}") from None


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered nodes tau_0 < ... < tau_N on [-1, 1] plus a physical time domain"""

    kind: GridKind
    order: int
    nodes: np.ndarray = field(repr=False)
    domain: Tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.shape != (self.order + 1,):
            raise GridError(f"expected {self.order + 1} nodes for order {self.order}, got shape {nodes.shape}")
        if not np.all(np.isfinite(nodes)):
            raise GridError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0.0):
            raise GridError("grid nodes must be strictly increasing")
        if nodes[0] < -1.0 or nodes[-1] > 1.0:
            raise GridError("grid nodes must lie in [-1, 1]")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "domain", _check_domain(self.domain))

    @property
    def n_nodes(self) -> int:
        return self.order + 1

    @property
    def t0(self) -> float:
        return self.domain[0]

    @property
    def tf(self) -> float:
        return self.domain[1]

    def with_domain(self, domain: Tuple[float, float]) -> "Grid":
        return Grid(self.kind, self.order, self.nodes, domain)

    def to_physical_time(self) -> np.ndarray:
        return to_physical_time(self)


def _check_domain(domain) -> Tuple[float, float]:
    try:
        t0, tf = (float(v) for v in domain)
    except (TypeError, ValueError):
        raise GridError(f"domain must be a pair (t0, tf), got {domain!r}") from None
    if not (math.isfinite(t0) and math.isfinite(tf)):
        raise GridError(f"domain must be finite, got ({t0}, {tf})")
    if tf <= t0:
        raise GridError(f"domain requires tf > t0, got ({t0}, {tf})")
    return (t0, tf)


def _check_order(n) -> int:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise GridError(f"order N must be an integer, got {n!r}")
    if n < 1:
        raise GridError(f"order N must be >= 1, got {n}")
    return int(n)


def chebyshev_lobatto_nodes(n: int) -> np.ndarray:
    # sin form keeps the nodes exactly antisymmetric
    i = np.arange(n + 1)
    return np.sin(np.pi * (2 * i - n) / (2 * n))


def chebyshev_gauss_nodes(n: int) -> np.ndarray:
    i = np.arange(n + 1)
    return -np.cos((2 * i + 1) * np.pi / (2 * n + 2))


def chebyshev_radau_nodes(n: int) -> np.ndarray:
    j = np.arange(n + 1)
    return -np.cos(2.0 * np.pi * j / (2 * n + 1))


def legendre_lobatto_nodes(n: int, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> np.ndarray:
    """Endpoints plus the roots of P'_N, by Newton iteration from Chebyshev points"""
    x = np.cos(np.pi * np.arange(n + 1) / n)
    converged = False
    for _ in range(max_iter):
        x_old = x
        p_prev, p = np.ones_like(x), x.copy()
        for k in range(2, n + 1):
            p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
        x = x_old - (x_old * p - p_prev) / ((n + 1) * p)
        if np.max(np.abs(x - x_old)) <= tol:
            converged = True
            break
    if not converged:
        logger.warning("LGL Newton iteration hit %d iterations at N=%d", max_iter, n)
    x = np.sort(x)
    x = 0.5 * (x - x[::-1])
    x[0], x[-1] = -1.0, 1.0
    return x


def legendre_radau_nodes(n: int, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> np.ndarray:
    """Roots of P_N + P_{N+1}, which include -1"""
    x = chebyshev_radau_nodes(n)
    free = x[1:].copy()
    converged = False
    for _ in range(max_iter):
        old = free
        p_prev, p = np.ones_like(old), old.copy()
        for k in range(2, n + 2):
            p_prev, p = p, ((2 * k - 1) * old * p - (k - 1) * p_prev) / k
        # p_prev = P_N, p = P_{N+1}
        free = old - ((1.0 - old) / (n + 1)) * (p_prev + p) / (p_prev - p)
        if np.max(np.abs(free - old)) <= tol:
            converged = True
            break
    if not converged:
        logger.warning("LGR Newton iteration hit %d iterations at N=%d", max_iter, n)
    return np.concatenate(([-1.0], np.sort(free)))


def legendre_gauss_nodes(n: int) -> np.ndarray:
    nodes, _ = legendre.leggauss(n + 1)
    return np.sort(nodes)


_GENERATORS = {
    GridKind.CGL: chebyshev_lobatto_nodes,
    GridKind.LGL: legendre_lobatto_nodes,
    GridKind.LGR: legendre_radau_nodes,
    GridKind.CGR: chebyshev_radau_nodes,
    GridKind.CG: chebyshev_gauss_nodes,
    GridKind.LG: legendre_gauss_nodes,
    GridKind.UNIFORM: lambda n: np.linspace(-1.0, 1.0, n + 1),
}


def make_grid(
    kind: Union[str, GridKind],
    n: int,
    domain: Tuple[float, float] = (-1.0, 1.0)
) -> Grid:
    """
    Build a grid of N+1 ascending nodes

    Args:
        kind: grid family (cgl, lgl, lgr, cgr, cg, lg, uniform)
        n: order N >= 1
        domain: physical time interval (t0, tf), tf > t0
    """
    kind = parse_kind(kind)
    n = _check_order(n)
    domain = _check_domain(domain)
    nodes = _GENERATORS[kind](n)
    logger.debug("built %s grid with N=%d", kind.value, n)
    return Grid(kind, n, nodes, domain)


def to_physical_time(grid: Grid) -> np.ndarray:
    t0, tf = grid.domain
    t = 0.5 * ((tf + t0) + (tf - t0) * grid.nodes)
    if grid.nodes[0] == -1.0:
        t[0] = t0
    if grid.nodes[-1] == 1.0:
        t[-1] = tf
    return t


def to_canonical_time(t, t0: float, tf: float) -> np.ndarray:
    """Inverse of the affine map, clipped to round-off at the ends"""
    tau = (2.0 * np.asarray(t, dtype=float) - (tf + t0)) / (tf - t0)
    return np.clip(tau, -1.0, 1.0)
