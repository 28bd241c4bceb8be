"""
Collocation Workflow Orchestrator
Runs transcription, solve, extraction and propagation as recorded steps
"""
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import BirkhoffPSError
from .grid import Grid, make_grid
from .nlpsolve import NlpSolution, SolverOptions, SolverStatus, solve
from .ocp import OcpProblem, Trajectory
from .transcribe import (
    MethodVariant,
    NlpProblem,
    defect_report,
    extract_trajectory,
    initial_guess,
    transcribe,
    warm_start,
)
from .validate import PropagationReport, feasibility_error, propagate

logger = logging.getLogger(__name__)


@dataclass
class WorkflowState:
    step: str
    data: Dict[str, Any]
    timestamp: datetime


@dataclass
class WorkflowResult:
    success: bool
    workflow_id: str
    report: Dict[str, Any]
    trajectory: Optional[Trajectory] = None
    solution: Optional[NlpSolution] = None
    propagation: Optional[PropagationReport] = None
    nlp: Optional[NlpProblem] = None
    error: Optional[str] = None


class SolveWorkflow:
    """Orchestrates one direct-collocation solve with independent validation"""

    def __init__(
        self,
        options: Optional[SolverOptions] = None,
        rtol: float = 1e-10,
        atol: float = 1e-12,
        control_method: str = "lagrange"
    ):
        self.options = options or SolverOptions()
        self.rtol = rtol
        self.atol = atol
        self.control_method = control_method
        self.workflow_history: List[WorkflowState] = []

    def run_solve_workflow(
        self,
        prob: OcpProblem,
        grid: Grid,
        variant: Union[str, MethodVariant],
        x_init: Optional[np.ndarray] = None,
        validate: bool = True,
        warm_ladder: Sequence[int] = ()
    ) -> WorkflowResult:
        """
        Complete pipeline for one grid

        Steps:
        0. Optionally solve the coarser orders in warm_ladder on the same grid
           family, each warm-starting the next
        1. Transcribe the problem with the chosen method variant
        2. Solve the NLP from x_init, the last presolve, or the cold-start guess
        3. Extract the trajectory
        4. Propagate through the control interpolant and measure errors
        """
        workflow_id = f"solve_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
        logger.info("starting workflow %s", workflow_id)
        try:
            coarse = self._presolve_step(prob, grid, variant, warm_ladder) if x_init is None else None
            nlp = self._transcription_step(prob, grid, variant)
            if x_init is not None:
                x0 = x_init
            elif coarse is not None:
                x0 = warm_start(nlp, coarse)
            else:
                x0 = initial_guess(nlp)
            solution = self._solve_step(nlp, x0)
            trajectory = self._extraction_step(nlp, solution)
            propagation = self._validation_step(prob, trajectory) if validate else None
            report = self._compile_final_report(workflow_id, nlp, solution, trajectory, propagation)
            return WorkflowResult(
                success=report["success"],
                workflow_id=workflow_id,
                report=report,
                trajectory=trajectory,
                solution=solution,
                propagation=propagation,
                nlp=nlp,
            )
        except BirkhoffPSError as e:
            self._record_workflow_step("error", {"error": str(e)})
            logger.error("workflow %s failed: %s", workflow_id, e)
            return WorkflowResult(
                success=False,
                workflow_id=workflow_id,
                report={"success": False, "error": str(e), "workflow_id": workflow_id},
                error=str(e),
            )

    def _presolve_step(
        self,
        prob: OcpProblem,
        grid: Grid,
        variant,
        ladder: Sequence[int]
    ) -> Optional[Trajectory]:
        """Solve each coarser order in ascending order; return the finest usable trajectory"""
        rungs = sorted({int(n) for n in ladder if 1 <= int(n) < grid.order})
        coarse: Optional[Trajectory] = None
        if rungs:
            prob.validate()
        for n in rungs:
            nlp = transcribe(prob, make_grid(grid.kind, n, grid.domain), variant)
            x0 = initial_guess(nlp) if coarse is None else warm_start(nlp, coarse)
            solution = solve(nlp, self.options, x0)
            self._record_workflow_step("presolve", {
                "N": n,
                "status": solution.status.value,
                "iterations": solution.iterations,
                "objective": solution.objective,
            })
            if solution.status in (SolverStatus.INFEASIBLE, SolverStatus.NUMERICAL_FAILURE):
                logger.warning("presolve at N=%d ended %s; keeping the previous rung", n, solution.status.value)
                break
            coarse = extract_trajectory(solution.x, nlp)
        return coarse

    def _transcription_step(self, prob: OcpProblem, grid: Grid, variant) -> NlpProblem:
        prob.validate()
        nlp = transcribe(prob, grid, variant)
        self._record_workflow_step("transcription", {
            "problem": prob.name,
            "grid": grid.kind.value,
            "N": grid.order,
            "variant": nlp.variant.value,
            "n_vars": nlp.n_vars,
            "m_eq": nlp.m_eq,
            "m_ineq": nlp.m_ineq,
        })
        return nlp

    def _solve_step(self, nlp: NlpProblem, x0: np.ndarray) -> NlpSolution:
        solution = solve(nlp, self.options, x0)
        self._record_workflow_step("solve", {
            "status": solution.status.value,
            "iterations": solution.iterations,
            "objective": solution.objective,
            **solution.residuals.as_dict(),
        })
        return solution

    def _extraction_step(self, nlp: NlpProblem, solution: NlpSolution) -> Trajectory:
        trajectory = extract_trajectory(solution.x, nlp)
        self._record_workflow_step("extraction", {
            "tf": trajectory.tf,
            "objective": trajectory.objective,
            "defects": defect_report(nlp, solution.x),
        })
        return trajectory

    def _validation_step(self, prob: OcpProblem, trajectory: Trajectory) -> PropagationReport:
        report = propagate(prob, trajectory, rtol=self.rtol, atol=self.atol, control_method=self.control_method)
        errors = feasibility_error(report)
        self._record_workflow_step("validation", {
            "success": report.success,
            "steps": report.n_steps,
            "rejected": report.n_rejected,
            "t_failure": report.t_failure,
            **errors.as_dict(),
        })
        return report

    def _record_workflow_step(self, step: str, data: Dict[str, Any]):
        """Record workflow step for audit trail"""
        self.workflow_history.append(WorkflowState(step=step, data=data, timestamp=datetime.now()))

    def _compile_final_report(
        self,
        workflow_id: str,
        nlp: NlpProblem,
        solution: NlpSolution,
        trajectory: Trajectory,
        propagation: Optional[PropagationReport]
    ) -> Dict[str, Any]:
        report = {
            "workflow_id": workflow_id,
            "success": solution.success,
            "timestamp": datetime.now().isoformat(),
            "problem": nlp.problem.name,
            "grid": nlp.grid.kind.value,
            "N": nlp.grid.order,
            "variant": nlp.variant.value,
            "status": solution.status.value,
            "message": solution.message,
            "objective": solution.objective,
            "tf": trajectory.tf,
            "iterations": solution.iterations,
            "residuals": solution.residuals.as_dict(),
            "defects": defect_report(nlp, solution.x),
            "workflow_steps": [state.step for state in self.workflow_history],
        }
        if propagation is not None:
            report["propagation"] = {
                "success": propagation.success,
                "message": propagation.message,
                "steps": propagation.n_steps,
                "rejected": propagation.n_rejected,
                **feasibility_error(propagation).as_dict(),
            }
        return report

    def get_workflow_history(self) -> List[Dict[str, Any]]:
        return [
            {"step": s.step, "data": s.data, "timestamp": s.timestamp.isoformat()}
            for s in self.workflow_history
        ]
