"""
State Library

Input-state families compared under an energy budget: N-photon entangled
states, two-mode squeezed vacuum, separable coherent pairs, and the
coherent + squeezed-vacuum input of the single-reflectivity problem.
Mode order is always (signal a, idler c), or (a, b) for two-port inputs.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import ConfigurationException
from app.schemas.states import (
    CoherentPairParams,
    CoherentSqueezedParams,
    EnergyBudget,
    NPhotonEntangledState,
)
from app.services.fock_core import (
    PureState,
    coherent_cutoff,
    coherent_state,
    squeezed_cutoff,
    squeezed_vacuum,
    tensor_product,
    tmsv_state,
)

logger = logging.getLogger(__name__)

FAMILIES = ("nphoton", "tmsv", "coherent-pair")


def build_nphoton(params: NPhotonEntangledState, cutoffs: Optional[Sequence[int]] = None) -> PureState:
    """
    Build sum_n a_n |N-n, n>_ac

    Args:
        params: Validated coefficient vector
        cutoffs: (signal, idler) cutoffs, each at least N; defaults to (N, N)

    Returns:
        PureState over (a, c) living entirely in the N-photon subspace
    """
    N = params.N
    cut_a, cut_c = (N, N) if cutoffs is None else cutoffs
    if cut_a < N or cut_c < N:
        raise ConfigurationException(f"cutoffs {tuple(cutoffs)} cannot hold a {N}-photon state")
    amps = np.zeros((cut_a + 1, cut_c + 1), dtype=complex)
    for n, a_n in enumerate(params.coeffs):
        amps[N - n, n] = a_n
    return PureState((cut_a + 1, cut_c + 1), amps)


def nphoton_from_coeffs(coeffs: Sequence[float]) -> NPhotonEntangledState:
    """Validate a raw coefficient vector (renormalizing tiny drift from optimizers)"""
    coeffs = np.abs(np.asarray(coeffs, dtype=float))
    norm = float(np.sqrt(np.sum(coeffs ** 2)))
    if norm == 0 or abs(norm - 1) > 1e-6:
        raise ConfigurationException(f"coefficient vector far from normalized (norm {norm})")
    return NPhotonEntangledState(N=len(coeffs) - 1, coeffs=list(coeffs / norm))


def signal_idler_means(coeffs: Sequence[float]) -> tuple[float, float]:
    """(<n_a>, <n_c>) of sum_n a_n |N-n, n>"""
    probs = np.asarray(coeffs, dtype=float) ** 2
    N = len(probs) - 1
    n = np.arange(N + 1)
    return float(np.sum((N - n) * probs)), float(np.sum(n * probs))


def tmsv_squeezing(budget: EnergyBudget) -> float:
    per_mode = budget.total_mean_photons if budget.signal_only else budget.total_mean_photons / 2
    return math.asinh(math.sqrt(per_mode))


def tmsv_cutoff(r: float, tail_tolerance: Optional[float] = None) -> int:
    """Smallest cutoff with tanh(r)^(2(cutoff+1)) below the tolerance"""
    tol = get_settings().tail_tolerance if tail_tolerance is None else tail_tolerance
    t = math.tanh(abs(r))
    if t == 0:
        return 1
    return max(1, int(math.ceil(math.log(tol) / (2 * math.log(t)))))


def build_tmsv_for_budget(
    budget: EnergyBudget, cutoff: Optional[int] = None, tail_tolerance: Optional[float] = None
) -> PureState:
    """TMSV with r = arcsinh(sqrt(E/2)) for total energy E (arcsinh(sqrt(E)) when signal_only)"""
    r = tmsv_squeezing(budget)
    cutoff = tmsv_cutoff(r, tail_tolerance) if cutoff is None else cutoff
    logger.debug(f"TMSV r={r:.6f} cutoff={cutoff}")
    return tmsv_state(r, cutoff, tail_tolerance)


def build_coherent_pair(
    budget: EnergyBudget, cutoff: Optional[int] = None, tail_tolerance: Optional[float] = None
) -> PureState:
    """|alpha>_a |alpha>_c; the factors are kept so the channel can act on the signal alone"""
    params = CoherentPairParams.for_budget(budget)
    cutoff = coherent_cutoff(params.alpha) if cutoff is None else cutoff
    single = coherent_state(params.alpha, cutoff, tail_tolerance)
    return tensor_product(single, single)


def build_coherent_squeezed(
    params: CoherentSqueezedParams, cutoffs: Optional[Sequence[int]] = None, tail_tolerance: Optional[float] = None
) -> PureState:
    """|alpha>_a with S(r e^{2i Theta})|0>_b, antisqueezed along Theta + pi/2"""
    if cutoffs is None:
        cutoffs = (coherent_cutoff(params.alpha), squeezed_cutoff(params.r, tail_tolerance))
    signal = coherent_state(params.alpha, cutoffs[0], tail_tolerance)
    port = squeezed_vacuum(params.r, 2 * params.Theta, cutoffs[1], tail_tolerance)
    return tensor_product(signal, port)


def build_state(
    family: str,
    budget: EnergyBudget,
    coeffs: Optional[Sequence[float]] = None,
    cutoffs: Optional[Sequence[int]] = None,
) -> PureState:
    """Name-based dispatch used by the CLI"""
    if family == "nphoton":
        if coeffs is None:
            raise ConfigurationException("nphoton family needs a coefficient vector")
        return build_nphoton(nphoton_from_coeffs(coeffs), cutoffs)
    if family == "tmsv":
        return build_tmsv_for_budget(budget, None if cutoffs is None else cutoffs[0])
    if family == "coherent-pair":
        return build_coherent_pair(budget, None if cutoffs is None else cutoffs[0])
    raise ConfigurationException(f"unknown state family '{family}' (expected one of {', '.join(FAMILIES)})")


def random_pure_state(mode_dims: Sequence[int], rng: np.random.Generator) -> PureState:
    """Haar-like random vector over the truncated space"""
    amps = rng.normal(size=tuple(mode_dims)) + 1j * rng.normal(size=tuple(mode_dims))
    amps /= np.linalg.norm(amps)
    return PureState(tuple(mode_dims), amps)
