import math

from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List, Optional, Literal

from app.schemas.results import DerivativeMode, Objective

COMBINER_SWEEP = "sweep"


class ExperimentConfig(BaseModel):
    """Resolved configuration of one CLI run (file values overridden by flags)"""
    experiment: Literal["fig3b", "fig4", "verify", "optimize-state", "qfi-point"]
    state: Literal["nphoton", "tmsv", "coherent-pair"] = "nphoton"
    n: int = Field(4, ge=1)
    nb_min: float = Field(0.0, ge=0)
    nb_max: float = Field(5.0, ge=0)
    steps: int = Field(11, ge=2)
    n_b: float = Field(0.0, ge=0)
    eta: float = Field(1e-3, gt=0, lt=1)
    energy: float = Field(4.0, gt=0)
    signal_only: bool = False
    cutoff_thermal: Optional[int] = Field(None, ge=1)
    cutoff_signal: Optional[int] = Field(None, ge=1)
    derivative: DerivativeMode = DerivativeMode.FIRST_ORDER
    coeff_objective: Objective = Objective.QFI_EQ5
    combiner_phase: Optional[float] = None
    combiner_phases: Optional[List[float]] = None
    jobs: int = Field(1, ge=1)
    seed: int = 0
    out: Optional[str] = None
    json_mirror: bool = False

    @field_validator("combiner_phases", mode="before")
    @classmethod
    def _parse_phases(cls, value):
        # "sweep" is the in-phase and quadrature pair; files give comma-separated lists
        if isinstance(value, str):
            if value.strip().lower() == COMBINER_SWEEP:
                return [0.0, math.pi / 2]
            return [float(v) for v in value.split(",") if v.strip()]
        return value

    @model_validator(mode="after")
    def _check_grid(self):
        if self.nb_max < self.nb_min:
            raise ValueError("nb_max must not be below nb_min")
        if self.json_mirror and self.out is None:
            raise ValueError("--json needs --out")
        if self.combiner_phases is not None:
            if not self.combiner_phases:
                raise ValueError("combiner_phases must not be empty")
            if self.combiner_phase is not None:
                raise ValueError("set either combiner_phase or combiner_phases, not both")
        return self

    def grid(self) -> list[float]:
        """Evenly spaced n_b values; a degenerate range is a single point"""
        if self.nb_max == self.nb_min:
            return [self.nb_min]
        span = self.nb_max - self.nb_min
        return [self.nb_min + span * i / (self.steps - 1) for i in range(self.steps)]

    def phases(self) -> list[Optional[float]]:
        """Combiner phases to evaluate; None means the phase-matched default"""
        return list(self.combiner_phases) if self.combiner_phases is not None else [self.combiner_phase]

    def hashable_view(self) -> dict:
        """Fields that determine the numbers (output location and parallelism excluded)"""
        return self.model_dump(mode="json", exclude={"out", "json_mirror", "jobs"})
