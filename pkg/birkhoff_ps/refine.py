"""
Refinement over an increasing CGL ladder with warm starts

Each rung is warm-started from the previous one; the ladder stops once the
trailing Chebyshev coefficients of every state have decayed below the plan's
threshold.
"""
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from .grid import GridKind, make_grid
from .interp import modal_coefficients
from .nlpsolve import SolverOptions
from .ocp import OcpProblem, Trajectory
from .transcribe import MethodVariant, defect_report, initial_guess, warm_start
from .workflow import SolveWorkflow

logger = logging.getLogger(__name__)


class RefinementPlan(BaseModel):
    ladder: List[int]
    tail_threshold: float = Field(default=1e-6, gt=0.0)
    max_steps: Optional[int] = Field(default=None, ge=1)
    tail_fraction: float = Field(default=0.1, gt=0.0, le=0.5)

    @field_validator("ladder")
    @classmethod
    def _increasing(cls, ladder: List[int]) -> List[int]:
        if not ladder:
            raise ValueError("ladder must not be empty")
        if ladder[0] < 1:
            raise ValueError(f"ladder entries must be >= 1, got {ladder[0]}")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError(f"ladder must be strictly increasing, got {ladder}")
        return ladder

    @property
    def rungs(self) -> List[int]:
        return self.ladder[:self.max_steps] if self.max_steps else list(self.ladder)


@dataclass
class RungDiagnostics:
    n: int
    status: str
    objective: float
    feasibility: float
    stationarity: float
    tail_ratio: float
    iterations: int
    tf: float
    warm_started: bool
    converged: bool = False


@dataclass
class RefinementResult:
    trajectory: Optional[Trajectory]
    rungs: List[RungDiagnostics] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    failure: Optional[str] = None
    status: str = ""
    iterations: int = 0
    residuals: Dict[str, float] = field(default_factory=dict)
    defects: Dict[str, float] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.failure is None

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "failure": self.failure,
            "rungs": [asdict(r) for r in self.rungs],
        }


class RefinementWorkflow(SolveWorkflow):
    """Solve workflow repeated over a refinement ladder"""

    def run_refinement_workflow(
        self,
        prob: OcpProblem,
        plan: RefinementPlan,
        variant: Union[str, MethodVariant]
    ) -> RefinementResult:
        """
        Workflow Steps per rung:
        1. Transcription on CGL(N)
        2. Solve, warm-started from the previous rung
        3. Extraction and coefficient-tail check
        """
        workflow_id = f"refine_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
        logger.info("starting refinement %s over ladder %s", workflow_id, plan.rungs)
        result = RefinementResult(trajectory=None)
        previous: Optional[Trajectory] = None

        for n in plan.rungs:
            grid = make_grid(GridKind.CGL, n)
            nlp = self._transcription_step(prob, grid, variant)
            x0 = warm_start(nlp, previous) if previous is not None else initial_guess(nlp)
            solution = self._solve_step(nlp, x0)
            feasibility = solution.residuals.feasibility

            if not np.isfinite(feasibility) or feasibility > self.options.tol_feas:
                failure = f"rung N={n} ended {solution.status.value} with feasibility {feasibility:.3e}"
                logger.warning("refinement stopped: %s", failure)
                result.rungs.append(RungDiagnostics(
                    n=n, status=solution.status.value, objective=solution.objective,
                    feasibility=feasibility, stationarity=solution.residuals.scaled_stationarity,
                    tail_ratio=float("nan"), iterations=solution.iterations,
                    tf=float("nan"), warm_started=previous is not None,
                ))
                result.failure = failure
                result.stop_reason = "solver_failure"
                result.trajectory = previous if previous is not None else self._extraction_step(nlp, solution)
                if previous is None:
                    result.status = solution.status.value
                    result.iterations = solution.iterations
                    result.residuals = solution.residuals.as_dict()
                    result.defects = defect_report(nlp, solution.x)
                self._record_workflow_step("refinement_failure", {"N": n, "failure": failure})
                return result

            trajectory = self._extraction_step(nlp, solution)
            ratio = float(np.max(modal_coefficients(grid, trajectory.X).tail_ratio(plan.tail_fraction)))
            converged = ratio <= plan.tail_threshold
            result.rungs.append(RungDiagnostics(
                n=n, status=solution.status.value, objective=solution.objective,
                feasibility=feasibility, stationarity=solution.residuals.scaled_stationarity,
                tail_ratio=ratio, iterations=solution.iterations, tf=trajectory.tf,
                warm_started=previous is not None, converged=converged,
            ))
            self._record_workflow_step("rung", {"N": n, "tail_ratio": ratio, "objective": solution.objective})
            logger.info("rung N=%d: objective %.10g, tail ratio %.3e", n, solution.objective, ratio)
            result.trajectory = trajectory
            result.status = solution.status.value
            result.iterations = solution.iterations
            result.residuals = solution.residuals.as_dict()
            result.defects = defect_report(nlp, solution.x)
            previous = trajectory
            if converged:
                result.converged = True
                result.stop_reason = "tail_converged"
                return result

        result.stop_reason = "ladder_exhausted"
        logger.info("refinement ladder exhausted without tail convergence")
        return result


def refine_solve(
    prob: OcpProblem,
    plan: RefinementPlan,
    variant: Union[str, MethodVariant],
    options: Optional[SolverOptions] = None
) -> RefinementResult:
    return RefinementWorkflow(options).run_refinement_workflow(prob, plan, variant)
