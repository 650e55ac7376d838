from pydantic import BaseModel, Field, field_validator, model_validator
from typing import List
import cmath
import math

class TruncationConfig(BaseModel):
    """Per-mode photon-number cutoffs plus the admissible truncated tail mass"""
    per_mode_cutoffs: List[int] = Field(..., min_length=1)
    tail_tolerance: float = Field(1e-10, gt=0)

    @field_validator("per_mode_cutoffs")
    @classmethod
    def _cutoffs_interacting(cls, v: List[int]) -> List[int]:
        if any(c < 1 for c in v):
            raise ValueError("every interacting mode needs cutoff >= 1")
        return v

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.per_mode_cutoffs)

class NPhotonEntangledState(BaseModel):
    """sum_n a_n |N-n, n>_ac with real nonnegative a_n"""
    N: int = Field(..., ge=1)
    coeffs: List[float]

    @model_validator(mode="after")
    def _check_coeffs(self):
        if len(self.coeffs) != self.N + 1:
            raise ValueError(f"expected {self.N + 1} coefficients, got {len(self.coeffs)}")
        if any(c < 0 for c in self.coeffs):
            raise ValueError("coefficients are restricted to nonnegative reals")
        norm = sum(c * c for c in self.coeffs)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"coefficients not normalized: sum a_n^2 = {norm}")
        return self

    @property
    def signal_mean(self) -> float:
        return sum((self.N - n) * c * c for n, c in enumerate(self.coeffs))

    @property
    def idler_mean(self) -> float:
        return sum(n * c * c for n, c in enumerate(self.coeffs))

class EnergyBudget(BaseModel):
    """Mean photon constraint: total <n_a + n_c>, or signal-only <n_a>"""
    total_mean_photons: float = Field(..., gt=0)
    signal_only: bool = False

class CoherentPairParams(BaseModel):
    """|alpha>_a |alpha>_c with the same amplitude on both modes"""
    alpha: complex

    @classmethod
    def for_budget(cls, budget: EnergyBudget) -> "CoherentPairParams":
        per_mode = budget.total_mean_photons if budget.signal_only else budget.total_mean_photons / 2
        return cls(alpha=complex(math.sqrt(per_mode), 0.0))

class CoherentSqueezedParams(BaseModel):
    """Coherent signal with a squeezed-vacuum second port"""
    alpha: complex
    r: float = 0.0
    varphi: float = math.pi / 2

    @property
    def theta_alpha(self) -> float:
        return cmath.phase(self.alpha)

    @property
    def Theta(self) -> float:
        return self.theta_alpha - self.varphi
