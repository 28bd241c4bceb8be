"""
JSON records for solutions and run manifests
"""
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import json5
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .errors import UsageError
from .grid import make_grid
from .ocp import OcpProblem, ProblemDescriptor, Trajectory

logger = logging.getLogger(__name__)


def _read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"file not found: {path}")
    with open(path, "r") as f:
        return json5.load(f)


class SolutionRecord(BaseModel):
    """Solved trajectory plus the solver outcome, as written by solve/refine"""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    problem: str
    descriptor: Optional[ProblemDescriptor] = None
    grid: str
    n: int = Field(ge=1)
    nodes: List[float]
    times: List[float]
    t0: float
    tf: float
    variant: Optional[str] = None
    state_names: List[str] = Field(default_factory=list)
    control_names: List[str] = Field(default_factory=list)
    X: List[List[float]]
    U: List[List[float]]
    V: Optional[List[List[float]]] = None
    objective: float
    status: str
    message: str = ""
    iterations: int = 0
    residuals: Dict[str, float] = Field(default_factory=dict)
    defects: Dict[str, float] = Field(default_factory=dict)

    @classmethod
    def from_trajectory(
        cls,
        traj: Trajectory,
        prob: OcpProblem,
        status: str,
        descriptor: Optional[ProblemDescriptor] = None,
        iterations: int = 0,
        residuals: Optional[Dict[str, float]] = None,
        defects: Optional[Dict[str, float]] = None,
        message: str = ""
    ) -> "SolutionRecord":
        return cls(
            problem=prob.name,
            descriptor=descriptor,
            grid=traj.grid.kind.value,
            n=traj.grid.order,
            nodes=traj.grid.nodes.tolist(),
            times=traj.times.tolist(),
            t0=traj.t0,
            tf=traj.tf,
            variant=traj.variant,
            state_names=list(prob.state_names),
            control_names=list(prob.control_names),
            X=traj.X.tolist(),
            U=traj.U.tolist(),
            V=None if traj.V is None else traj.V.tolist(),
            objective=traj.objective,
            status=status,
            message=message,
            iterations=iterations,
            residuals=dict(residuals or {}),
            defects=dict(defects or {}),
        )

    def to_trajectory(self) -> Trajectory:
        grid = make_grid(self.grid, self.n)
        if not np.allclose(grid.nodes, self.nodes, rtol=0.0, atol=1e-14):
            logger.warning("stored %s nodes differ from regenerated N=%d nodes", self.grid, self.n)
        return Trajectory(
            grid=grid,
            X=np.asarray(self.X, dtype=float).reshape(self.n + 1, -1),
            U=np.asarray(self.U, dtype=float).reshape(self.n + 1, -1),
            V=None if self.V is None else np.asarray(self.V, dtype=float).reshape(self.n, -1),
            t0=self.t0,
            tf=self.tf,
            objective=self.objective,
            variant=self.variant,
        )

    def build_problem(self) -> OcpProblem:
        if self.descriptor is None:
            raise UsageError(f"solution for problem {self.problem!r} carries no descriptor to rebuild it from")
        return self.descriptor.build()

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.model_dump_json(indent=2))
        logger.info("wrote solution to %s", path)
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "SolutionRecord":
        return cls.model_validate(_read_json(path))


class RunManifest(BaseModel):
    """Parameters, outputs and headline metrics of one CLI run"""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    subcommand: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    version: str = __version__
    timestamp: str = Field(default_factory=lambda: datetime.now().isoformat())
    outputs: List[str] = Field(default_factory=list)
    metrics: Dict[str, Any] = Field(default_factory=dict)
    exit_code: int = 0

    def missing_outputs(self) -> List[str]:
        return [p for p in self.outputs if not Path(p).exists()]

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.model_dump_json(indent=2))
        logger.info("wrote manifest to %s", path)
        return path

    @classmethod
    def read(cls, path: Union[str, Path]) -> "RunManifest":
        return cls.model_validate(_read_json(path))


def load_descriptor(path: Union[str, Path], **overrides) -> ProblemDescriptor:
    """Read a JSON/JSON5 problem descriptor; overrides that are not None win"""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise UsageError(f"descriptor {path} must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ProblemDescriptor(**data)
