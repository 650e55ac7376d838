from pydantic import BaseModel, Field
from typing import Optional
import math

class TargetScenario(BaseModel):
    """Target modelled as a beam splitter of reflectivity eta in a thermal background"""
    eta: float = Field(..., ge=-1.0, le=1.0)  # negative only for central differences
    varphi: float = math.pi / 2
    n_b: float = Field(0.0, ge=0)
    present: bool = True

    @property
    def theta(self) -> float:
        return 2.0 * math.asin(self.eta)

    @property
    def small_reflectivity(self) -> bool:
        return abs(self.eta) <= 0.1

    @property
    def splitting_regime(self) -> bool:
        return self.eta ** 2 * self.n_b < 1e-2

    def at(self, eta: float) -> "TargetScenario":
        return self.model_copy(update={"eta": eta})

class ReceiverConfig(BaseModel):
    """Photon-number-difference receiver; combiner phase None means phase-matched"""
    varphi_combiner: Optional[float] = None
    fd_step: float = Field(1e-4, ge=1e-5, le=1e-2)
    path: str = Field("observable", pattern="^(observable|combiner)$")
