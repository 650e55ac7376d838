from pydantic import BaseModel, Field
from typing import List, Optional
from enum import Enum

class QfiMethod(str, Enum):
    PURE_EQ2 = "pure_eq2"
    PHASE_MZI = "phase_mzi"
    COHERENT_ANALYTIC_EQ4 = "coherent_analytic_eq4"
    NPHOTON_ANALYTIC_EQ5 = "nphoton_analytic_eq5"
    MIXED_SPECTRAL = "mixed_spectral"

class DerivativeMode(str, Enum):
    FIRST_ORDER = "first_order_commutator"
    FINITE_DIFFERENCE = "finite_difference"

class IndexOrdering(str, Enum):
    STATE = "state-major"    # a_k multiplies |N-k, k>
    SIGNAL = "signal-major"  # a_k multiplies the component with k signal photons

class Objective(str, Enum):
    QFI_EQ5 = "qfi_eq5"
    RECEIVER_SNR = "receiver_snr"

class QfiResult(BaseModel):
    value: float = Field(..., ge=0)
    method: QfiMethod
    derivative_mode: Optional[DerivativeMode] = None
    eigen_cut: float = 0.0
    skipped_weight: float = 0.0
    eta0: float = 0.0

class ReceiverStats(BaseModel):
    m: float
    var_m: float = Field(..., ge=0)
    dm_deta: float
    delta_eta: float = Field(..., gt=0)
    snr: float
    snr_e: float
    n1_mean: float
    n0_mean: float
    sigma1: float
    sigma0: float
    varphi_combiner: float

    @property
    def eq6_residual(self) -> float:
        return abs(self.snr * self.delta_eta * abs(self.dm_deta) - abs(self.m))

class OptimizationProblem(BaseModel):
    N: int = Field(..., ge=1)
    n_b: float = Field(0.0, ge=0)
    objective: Objective = Objective.QFI_EQ5
    eta: float = 1e-3
    varphi_combiner: Optional[float] = None
    restarts: int = Field(16, ge=8)
    seed: int = 0
    tol: float = Field(1e-10, gt=0)

class Optimum(BaseModel):
    coeffs: List[float]
    objective_value: float
    converged: bool
    restart_spread: float
    restarts: int

class TrendRow(BaseModel):
    n_b: float
    coeffs: List[float]
    objective_value: float
    signal_mean: float
    idler_mean: float

class CheckResult(BaseModel):
    """Outcome of one named verification check"""
    name: str
    passed: bool
    detail: str = ""
    informational: bool = False
    value: Optional[float] = None
