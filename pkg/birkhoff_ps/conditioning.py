"""
Condition numbers of the collocation test matrices and their growth with N
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from .birkhoff import BirkhoffCase, build_birkhoff
from .errors import ConditioningError
from .grid import Grid, GridKind, make_grid, parse_kind
from .interp import build_basis, diff_matrix
from .settings import get_settings

logger = logging.getLogger(__name__)


class MatrixKind(str, Enum):
    INNER_D = "innerd"
    C_LAGR = "clagr"
    C_BIRK = "cbirk"
    A_BIRK = "abirk"

    @property
    def needs_birkhoff(self) -> bool:
        return self in (MatrixKind.C_BIRK, MatrixKind.A_BIRK)


def parse_matrix_kind(kind: Union[str, MatrixKind]) -> MatrixKind:
    if isinstance(kind, MatrixKind):
        return kind
    try:
        return MatrixKind(str(kind).strip().lower())
    except ValueError:
        choices = ", ".join(k.value for k in MatrixKind)
        raise ConditioningError(f"unknown matrix kind {kind!r}; expected one of {choices}") from None


@dataclass(frozen=True)
class CondRecord:
    grid: str
    n: int
    matrix: str
    kappa: float


@dataclass
class SeriesFit:
    grid: str
    matrix: str
    slope: float
    intercept: float
    n_points: int
    complete: bool = True
    message: Optional[str] = None


@dataclass
class SweepResult:
    records: List[CondRecord] = field(default_factory=list)
    fits: List[SeriesFit] = field(default_factory=list)
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return all(fit.complete for fit in self.fits)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(r) for r in self.records], columns=["grid", "matrix", "n", "kappa"])
        return frame.rename(columns={"n": "N"})

    def slopes(self) -> Dict[str, Dict[str, object]]:
        return {f"{fit.grid}/{fit.matrix}": asdict(fit) for fit in self.fits}

    def fit_for(self, grid: str, matrix: str) -> SeriesFit:
        for fit in self.fits:
            if fit.grid == grid and fit.matrix == matrix:
                return fit
        raise KeyError(f"{grid}/{matrix}")


def _check_supported(grid: Grid, kind: MatrixKind):
    if kind.needs_birkhoff and grid.kind.is_gauss:
        raise ConditioningError(
            f"{kind.value} needs a Lobatto, Radau or uniform grid; {grid.kind.value} has no boundary node"
        )


def assemble_test_matrix(grid: Grid, kind: Union[str, MatrixKind]) -> np.ndarray:
    """
    InnerD = Da; CLagr = [Da, -I]; CBirk = [Ba, -I]; ABirk = [Ba, -I, b0]

    For Radau grids the dropped row/column is the -1 node, as for Lobatto grids.
    """
    kind = parse_matrix_kind(kind)
    _check_supported(grid, kind)
    basis = build_basis(grid)
    ops = diff_matrix(basis)
    birk = build_birkhoff(basis, BirkhoffCase.A, spec_ops=ops) if kind.needs_birkhoff else None
    return _compose(kind, ops, birk)


def _compose(kind: MatrixKind, ops, birk) -> np.ndarray:
    eye = np.eye(ops.Da.shape[0])
    if kind is MatrixKind.INNER_D:
        return np.array(ops.Da)
    if kind is MatrixKind.C_LAGR:
        return np.hstack((ops.Da, -eye))
    if kind is MatrixKind.C_BIRK:
        return np.hstack((birk.B, -eye))
    return np.hstack((birk.B, -eye, birk.boundary_col[:, None]))


def cond2(matrix) -> float:
    """
    sigma_max / sigma_min over the nonzero singular values

    A numerically rank-deficient square matrix returns math.inf.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ConditioningError(f"expected a non-empty 2-D matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ConditioningError("matrix entries must be finite")
    sigma = linalg.svdvals(matrix)
    sigma_max = sigma[0]
    if sigma_max == 0.0:
        raise ConditioningError("matrix has no nonzero singular value")
    cutoff = max(matrix.shape) * np.finfo(float).eps * sigma_max
    if matrix.shape[0] == matrix.shape[1] and sigma[-1] <= cutoff:
        return math.inf
    nonzero = sigma[sigma > cutoff]
    return float(sigma_max / nonzero[-1])


def doubling_ladder(nmin: int, nmax: int) -> List[int]:
    if nmin < 1 or nmax < nmin:
        raise ConditioningError(f"need 1 <= nmin <= nmax, got nmin={nmin}, nmax={nmax}")
    ladder = []
    n = nmin
    while n <= nmax:
        ladder.append(n)
        n *= 2
    return ladder


def _matrices_at(kind: GridKind, n: int, matrix_kinds: Sequence[MatrixKind]) -> List[CondRecord]:
    grid = make_grid(kind, n)
    basis = build_basis(grid)
    ops = diff_matrix(basis)
    birk = None
    if any(mk.needs_birkhoff for mk in matrix_kinds):
        birk = build_birkhoff(basis, BirkhoffCase.A, spec_ops=ops)
    records = []
    for mk in matrix_kinds:
        try:
            kappa = cond2(_compose(mk, ops, birk))
        except ConditioningError as e:
            logger.warning("cond2 failed for %s/%s at N=%d: %s", kind.value, mk.value, n, e)
            kappa = math.nan
        records.append(CondRecord(kind.value, n, mk.value, kappa))
    return records


def fit_slope(ns: Sequence[int], kappas: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope and intercept of log kappa against log N"""
    slope, intercept = np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(np.asarray(kappas, dtype=float)), 1)
    return float(slope), float(intercept)


def sweep_and_fit(
    grid_kinds: Iterable[Union[str, GridKind]],
    matrix_kinds: Iterable[Union[str, MatrixKind]],
    n_values: Sequence[int],
    include_gauss: bool = False,
    max_workers: Optional[int] = None
) -> SweepResult:
    """
    Condition numbers over (grid, matrix, N) and a log-log slope per series

    A non-finite kappa truncates its series; the fit then covers the points
    before it and is flagged incomplete.
    """
    grids = [parse_kind(k) for k in grid_kinds]
    mats = [parse_matrix_kind(k) for k in matrix_kinds]
    ns = [int(n) for n in n_values]
    if len(ns) < 4:
        raise ConditioningError(f"N-list needs at least 4 entries, got {len(ns)}")
    if any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
        raise ConditioningError(f"N-list must be positive and strictly increasing, got {ns}")
    for g in grids:
        if g is GridKind.LG and not include_gauss:
            raise ConditioningError("LG grids are only swept with include_gauss=True")
        for mk in mats:
            if mk.needs_birkhoff and g.is_gauss:
                raise ConditioningError(f"{mk.value} is not defined on {g.value} grids")

    workers = max_workers or get_settings().threads
    jobs = [(g, n) for g in grids for n in ns]
    logger.info("conditioning sweep: %d grid/N pairs on %d threads", len(jobs), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(lambda job: _matrices_at(job[0], job[1], mats), jobs))

    result = SweepResult(metadata={"lgr_inner_d": "row and column of the -1 node dropped"})
    table = {(r.grid, r.matrix, r.n): r for chunk in chunks for r in chunk}
    for g in grids:
        for mk in mats:
            series = []
            message = None
            for n in ns:
                record = table[(g.value, mk.value, n)]
                if not math.isfinite(record.kappa):
                    message = f"non-finite condition number at N={n}"
                    break
                series.append(record)
            result.records.extend(series)
            if len(series) >= 2:
                slope, intercept = fit_slope([r.n for r in series], [r.kappa for r in series])
            else:
                slope = intercept = math.nan
            result.fits.append(SeriesFit(
                grid=g.value,
                matrix=mk.value,
                slope=slope,
                intercept=intercept,
                n_points=len(series),
                complete=message is None,
                message=message,
            ))
            logger.info("%s/%s slope %.3f over %d points", g.value, mk.value, slope, len(series))
    return result
