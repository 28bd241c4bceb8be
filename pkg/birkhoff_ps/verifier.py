"""
Built-in identity suite for the spectral and Birkhoff operators
"""
import logging
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .birkhoff import (
    BirkhoffCase,
    BirkhoffOperators,
    build_birkhoff,
    interpolant_agreement_residual,
    boundary_column_residual,
    inverse_residual,
)
from .errors import BirkhoffPSError, UsageError
from .grid import GridKind, make_grid, parse_kind
from .interp import SpectralCoefficients, SpectralOperators, build_basis, diff_matrix, interpolate, modal_coefficients

logger = logging.getLogger(__name__)


@dataclass
class CheckItem:
    name: str
    passed: bool
    residual: float
    threshold: float
    error_message: Optional[str] = None


class IdentityVerifier:
    """Runs the operator identities for one grid kind and order"""

    def __init__(self, kind: Union[str, GridKind], n: int, trials: int = 100, seed: int = 0):
        if trials < 1:
            raise UsageError(f"trials must be >= 1, got {trials}")
        self.kind = parse_kind(kind)
        self.grid = make_grid(self.kind, n)
        self.n = self.grid.order
        self.trials = trials
        self.seed = seed

    def _operators(self) -> Tuple[SpectralOperators, Dict[BirkhoffCase, BirkhoffOperators]]:
        basis = build_basis(self.grid)
        ops = diff_matrix(basis)
        birk = {case: build_birkhoff(basis, case, spec_ops=ops) for case in BirkhoffCase}
        return ops, birk

    def _checks(self) -> List[Tuple[str, float, Callable[[], float]]]:
        n = self.n
        ops, birk = self._operators()
        rng = np.random.default_rng(self.seed)
        checks = []
        for case in BirkhoffCase:
            checks.append((f"inverse-{case.value}", 1e-9 * n,
                           lambda b=birk[case]: inverse_residual(ops, b)))
        for case in BirkhoffCase:
            checks.append((f"interpolant-agreement-{case.value}", 1e-9 * n,
                           lambda b=birk[case]: self._interpolant_agreement(ops, b, rng)))
        for case in BirkhoffCase:
            checks.append((f"boundary-column-{case.value}", 1e-10 * n,
                           lambda b=birk[case]: boundary_column_residual(ops, b)))
        checks.append(("row-sum", 1e-13 * n ** 2, lambda: float(np.max(np.abs(ops.D.sum(axis=1))))))
        checks.append(("second-derivative-affine", 1e-10 * n ** 2, lambda: self._second_derivative(ops, rng)))
        checks.append(("kronecker", 0.0, lambda: self._kronecker(rng)))
        if self.kind is GridKind.CGL:
            checks.append(("modal-round-trip", 1e-12, lambda: self._modal_round_trip(rng)))
        return checks

    def _interpolant_agreement(self, ops: SpectralOperators, birk: BirkhoffOperators, rng) -> float:
        residuals = np.empty(self.trials)
        for k in range(self.trials):
            boundary = rng.uniform(-1.0, 1.0)
            V = rng.uniform(-1.0, 1.0, self.n)
            residuals[k] = interpolant_agreement_residual(ops, birk, np.array(boundary), V)
        # np.max propagates NaN, so one broken trial fails the item
        return float(np.max(residuals))

    def _second_derivative(self, ops: SpectralOperators, rng) -> float:
        # residual is normalized by max(|a|, |b|) so the threshold carries no scale
        residuals = np.empty(self.trials)
        tau = self.grid.nodes
        for k in range(self.trials):
            a, b = rng.uniform(-1.0, 1.0, 2)
            scale = max(abs(a), abs(b))
            residuals[k] = np.max(np.abs(ops.D @ (ops.D @ (a * tau + b)))) / scale
        return float(np.max(residuals))

    def _kronecker(self, rng) -> float:
        basis = build_basis(self.grid)
        samples = rng.uniform(-1.0, 1.0, (self.grid.n_nodes, self.trials))
        return float(np.max(np.abs(interpolate(basis, samples, self.grid.nodes) - samples)))

    def _modal_round_trip(self, rng) -> float:
        coeffs = rng.uniform(-1.0, 1.0, (self.grid.n_nodes, self.trials))
        samples = SpectralCoefficients(coeffs).evaluate(self.grid.nodes)
        return float(np.max(np.abs(modal_coefficients(self.grid, samples).coeffs - coeffs)))

    def run_verification(self) -> List[CheckItem]:
        """
        Evaluate every identity and compare against its threshold

        Build or evaluation errors mark the item failed instead of raising.
        """
        try:
            checks = self._checks()
        except BirkhoffPSError as e:
            logger.error("operators for %s N=%d could not be built: %s", self.kind.value, self.n, e)
            return [CheckItem("operators", False, float("nan"), 0.0, str(e))]

        items = []
        for name, threshold, evaluate in checks:
            try:
                residual = float(evaluate())
            except BirkhoffPSError as e:
                items.append(CheckItem(name, False, float("nan"), threshold, str(e)))
                continue
            passed = bool(np.isfinite(residual) and residual <= threshold)
            message = None if passed else f"residual {residual:.3e} exceeds {threshold:.3e}"
            items.append(CheckItem(name, passed, residual, threshold, message))
            logger.debug("%s: %.3e (threshold %.3e)", name, residual, threshold)
        return items

    def verify_identities(self) -> Dict[str, Any]:
        """High-level check that returns a detailed report"""
        items = self.run_verification()
        failed = [item.name for item in items if not item.passed]
        report = {
            "verification_successful": not failed,
            "grid": self.kind.value,
            "N": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "items": [asdict(item) for item in items],
            "failed": failed,
        }
        if failed:
            logger.warning("identity checks failed for %s N=%d: %s", self.kind.value, self.n, ", ".join(failed))
        return report
