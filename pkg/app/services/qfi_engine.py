"""
Quantum Fisher Information Engine

Reflectivity QFI of pure two-mode inputs, the equivalent interferometric
phase QFI, closed forms for coherent and N-photon inputs, and the spectral
mixed-state QFI of the target channel with either the first-order
commutator derivative or a Richardson-checked finite-difference derivative.
Inputs with a conserved photon-number charge can be differentiated block by
block when their dense output is too large.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import eigh

from app.core.config import get_settings
from app.core.exceptions import ConfigurationException, NumericalToleranceException
from app.schemas.results import DerivativeMode, IndexOrdering, QfiMethod, QfiResult
from app.schemas.scenario import TargetScenario
from app.schemas.states import CoherentSqueezedParams
from app.services.fock_core import (
    KronSum,
    MixedState,
    ProductState,
    PureState,
    annihilation_matrix,
    apply_mode_matrix,
    as_dense,
    beam_splitter,
    expectation,
    number,
    pad_modes,
    phase_shift,
    quadrature,
    thermal_cutoff,
    thermal_state,
)
from app.services.state_library import build_nphoton, nphoton_from_coeffs
from app.services.target_channel import (
    BlockOutput,
    apply_present,
    conserved_charge,
    present_output_blocks,
    reference_output,
)

logger = logging.getLogger(__name__)

Derivative = Union[np.ndarray, KronSum]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvector columns"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def of(cls, operator: np.ndarray) -> "SpectralDecomposition":
        evals, evecs = eigh(operator)
        if evals.size and evals[0] < -1e-10:
            raise NumericalToleranceException(f"density operator has eigenvalue {evals[0]:.3e}")
        return cls(evals, evecs)

    def transform(self, operator: np.ndarray) -> np.ndarray:
        return self.eigenvectors.conj().T @ operator @ self.eigenvectors


# ---------------------------------------------------------------------------
# Pure-state QFI
# ---------------------------------------------------------------------------

def _two_mode_padded(state: PureState) -> PureState:
    if state.n_modes != 2:
        raise ConfigurationException(f"expected a two-mode pure state, got {state.n_modes} modes")
    d_a, d_b = state.mode_dims
    return pad_modes(state, [d_b - 1, d_a - 1])


def _variance_qfi(psi: np.ndarray, v: np.ndarray) -> float:
    """4 (<v|v> - |<psi|v>|^2) for v = G psi, normalised by <psi|psi>"""
    norm = float(np.vdot(psi, psi).real)
    mean = np.vdot(psi, v) / norm
    return max(0.0, float(4 * (np.vdot(v, v).real / norm - abs(mean) ** 2)))


def qfi_pure_reflectivity(state: PureState, varphi: Optional[float] = None) -> QfiResult:
    """
    QFI of eta at eta = 0 for B(2 arcsin eta, varphi) acting on a pure (a, b) input

    H = 4 Var(K) with K = i(a^dag b e^{i varphi} - a b^dag e^{-i varphi}); at
    varphi = pi/2 this is 4 Var(a^dag b + b^dag a). Both modes are padded first so
    the ladder products never leave the truncated space.
    """
    varphi = get_settings().default_varphi if varphi is None else varphi
    padded = _two_mode_padded(state)
    lower_a = annihilation_matrix(padded.mode_dims[0])
    lower_b = annihilation_matrix(padded.mode_dims[1])
    psi = padded.amplitudes
    raise_a_lower_b = apply_mode_matrix(apply_mode_matrix(psi, lower_b, 1), lower_a.T, 0)
    lower_a_raise_b = apply_mode_matrix(apply_mode_matrix(psi, lower_b.T, 1), lower_a, 0)
    v = 1j * (np.exp(1j * varphi) * raise_a_lower_b - np.exp(-1j * varphi) * lower_a_raise_b)
    value = _variance_qfi(psi.reshape(-1), v.reshape(-1))
    return QfiResult(value=value, method=QfiMethod.PURE_EQ2)


def _interferometer_state(chi: PureState, phi: float) -> np.ndarray:
    shifted = phase_shift(phase_shift(chi, 0, phi), 1, -phi)
    return shifted.amplitudes.reshape(-1)


def qfi_phase_mzi(state: PureState, varphi: Optional[float] = None, step: float = 1e-4) -> QfiResult:
    """
    QFI of the interferometer phase phi at phi = 0 for
    e^{i phi (n_a - n_b)} B(pi/2, varphi + pi/2) |psi>

    The state derivative is a central difference refined by one Richardson step.
    """
    varphi = get_settings().default_varphi if varphi is None else varphi
    chi = beam_splitter(_two_mode_padded(state), (0, 1), math.pi / 2, varphi + math.pi / 2)
    psi = chi.amplitudes.reshape(-1)

    def central(h: float) -> np.ndarray:
        return (_interferometer_state(chi, h) - _interferometer_state(chi, -h)) / (2 * h)

    dpsi = (4 * central(step / 2) - central(step)) / 3
    norm = float(np.vdot(psi, psi).real)
    overlap = np.vdot(psi, dpsi) / norm
    value = max(0.0, float(4 * (np.vdot(dpsi, dpsi).real / norm - abs(overlap) ** 2)))
    return QfiResult(value=value, method=QfiMethod.PHASE_MZI)


def qfi_coherent_analytic(params: CoherentSqueezedParams, b_state: Union[PureState, MixedState]) -> QfiResult:
    """H = 4[<b^dag b> + 2|alpha|^2 Var(X_{Theta + pi/2})] with Theta = arg(alpha) - varphi"""
    padded = pad_modes(b_state, [2])
    angle = params.Theta + math.pi / 2
    x = quadrature(0, angle)
    mean_n = expectation(padded, number(0)).real
    mean_x = expectation(padded, x).real
    var_x = expectation(padded, [x, x]).real - mean_x ** 2
    value = 4 * (mean_n + 2 * abs(params.alpha) ** 2 * var_x)
    return QfiResult(value=max(0.0, value), method=QfiMethod.COHERENT_ANALYTIC_EQ4)


# ---------------------------------------------------------------------------
# N-photon closed form
# ---------------------------------------------------------------------------

def nphoton_qfi_value(coeffs: Sequence[float], n_b: float, ordering: Optional[IndexOrdering] = None) -> float:
    """
    4/(1+n_b) sum_k (k+1) A_{k+1}^2 A_k^2 / (A_k^2 + A_{k+1}^2 n_b/(1+n_b))

    With signal-major ordering A_k is the amplitude carrying k signal photons,
    i.e. A_k = a_{N-k}. Terms with A_k = A_{k+1} = 0 vanish; with only A_k = 0
    at n_b = 0 the term takes its limit (k+1) A_{k+1}^2.
    """
    ordering = resolve_index_convention() if ordering is None else ordering
    a = np.asarray(coeffs, dtype=float)
    if ordering == IndexOrdering.SIGNAL:
        a = a[::-1]
    probs = a ** 2
    ratio = n_b / (1 + n_b)
    total = 0.0
    for k in range(len(probs) - 1):
        p, q = probs[k], probs[k + 1]
        if p == 0 and q == 0:
            continue
        denom = p + q * ratio
        if denom == 0:
            total += (k + 1) * q
            continue
        total += (k + 1) * p * q / denom
    return 4 * total / (1 + n_b)


def qfi_nphoton_analytic(
    coeffs: Sequence[float], n_b: float, ordering: Optional[IndexOrdering] = None
) -> QfiResult:
    norm = float(np.sum(np.asarray(coeffs, dtype=float) ** 2))
    if abs(norm - 1) > 1e-9:
        raise ConfigurationException(f"coefficients not normalized (sum a^2 = {norm})")
    return QfiResult(value=nphoton_qfi_value(coeffs, n_b, ordering), method=QfiMethod.NPHOTON_ANALYTIC_EQ5)


# ---------------------------------------------------------------------------
# Mixed-state spectral QFI
# ---------------------------------------------------------------------------

def _spectral_sum(spectrum: SpectralDecomposition, drho: np.ndarray, cut: float) -> tuple[float, float]:
    evals = spectrum.eigenvalues
    elements = np.abs(spectrum.transform(drho)) ** 2
    sums = evals[:, None] + evals[None, :]
    kept = sums > cut
    return 2 * float(np.sum(elements[kept] / sums[kept])), float(np.sum(elements[~kept]))


def _spectral_dense(rho: np.ndarray, drho: np.ndarray, eigen_cut: Optional[float]) -> tuple[float, float, float]:
    spectrum = SpectralDecomposition.of(rho)
    cut = get_settings().eigen_cut_relative * max(spectrum.eigenvalues[-1], 0.0) if eigen_cut is None else eigen_cut
    value, skipped = _spectral_sum(spectrum, drho, cut)
    return value, skipped, cut


def _spectral_blocks(
    rho: BlockOutput, drho: dict[int, np.ndarray], eigen_cut: Optional[float]
) -> tuple[float, float, float]:
    """Block-diagonal rho and drho: pairs across blocks have zero derivative weight"""
    spectra = {q: SpectralDecomposition.of(block) for q, block in rho.blocks.items()}
    top = max(max(s.eigenvalues[-1], 0.0) for s in spectra.values())
    cut = get_settings().eigen_cut_relative * top if eigen_cut is None else eigen_cut
    value = 0.0
    skipped = 0.0
    for q, spectrum in spectra.items():
        block_value, block_skipped = _spectral_sum(spectrum, drho[q], cut)
        value += block_value
        skipped += block_skipped
    return value, skipped, cut


def _spectral_factorized(
    rho: ProductState, drho: KronSum, eigen_cut: Optional[float]
) -> tuple[float, float, float]:
    """Same sum with rho = rho_L (x) rho_R and drho = sum_t L_t (x) R_t, never densified"""
    left, right = rho.factors
    spec_l = SpectralDecomposition.of(left.operator)
    spec_r = SpectralDecomposition.of(right.operator)
    lam_l, lam_r = spec_l.eigenvalues, spec_r.eigenvalues
    top = max(lam_l[-1], 0.0) * max(lam_r[-1], 0.0)
    cut = get_settings().eigen_cut_relative * top if eigen_cut is None else eigen_cut
    lefts = np.stack([spec_l.transform(l) for l, _ in drho.terms])
    rights = np.stack([spec_r.transform(r) for _, r in drho.terms])
    value = 0.0
    skipped = 0.0
    for i in range(len(lam_l)):
        # block[k, j, l] = <i k| D |j l> in the product eigenbasis
        block = np.einsum("tj,tkl->kjl", lefts[:, i, :], rights)
        sums = lam_l[i] * lam_r[:, None, None] + lam_l[None, :, None] * lam_r[None, None, :]
        elements = np.abs(block) ** 2
        kept = sums > cut
        value += float(np.sum(elements[kept] / sums[kept]))
        skipped += float(np.sum(elements[~kept]))
    return 2 * value, skipped, cut


def qfi_mixed_spectral(
    rho0: Union[MixedState, ProductState, BlockOutput],
    drho: Union[Derivative, dict[int, np.ndarray]],
    eigen_cut: Optional[float] = None,
    derivative_mode: Optional[DerivativeMode] = None,
    eta0: float = 0.0,
) -> QfiResult:
    """
    H = 2 sum_{n,m} |<n|drho|m>|^2 / (lambda_n + lambda_m) over pairs above eigen_cut

    Args:
        rho0: State at the operating point
        drho: Derivative operator (dense matrix, Kronecker sum, or the
            per-block derivative of a BlockOutput)
        eigen_cut: Floor on lambda_n + lambda_m; defaults to the configured
            fraction of the leading eigenvalue
        derivative_mode: Recorded in the result
        eta0: Operating point, recorded in the result

    Returns:
        QfiResult with the squared-element weight of the skipped pairs
    """
    if isinstance(rho0, BlockOutput):
        if not isinstance(drho, dict) or drho.keys() != rho0.blocks.keys():
            raise ConfigurationException("block output needs a derivative with the same blocks")
        value, skipped, cut = _spectral_blocks(rho0, drho, eigen_cut)
    elif (
        isinstance(rho0, ProductState)
        and len(rho0.factors) == 2
        and isinstance(drho, KronSum)
        and drho.left_dim == rho0.factors[0].dim
    ):
        value, skipped, cut = _spectral_factorized(rho0, drho, eigen_cut)
    else:
        dense_rho = as_dense(rho0).operator
        dense_d = drho.to_dense() if isinstance(drho, KronSum) else np.asarray(drho)
        if dense_d.shape != dense_rho.shape:
            raise ConfigurationException(f"drho shape {dense_d.shape} does not match rho {dense_rho.shape}")
        value, skipped, cut = _spectral_dense(dense_rho, dense_d, eigen_cut)
    if not math.isfinite(value):
        raise NumericalToleranceException("spectral QFI is not finite")
    if skipped > 1e-8:
        logger.info(f"spectral QFI skipped pair weight {skipped:.3e} below eigen cut {cut:.2e}")
    return QfiResult(
        value=value,
        method=QfiMethod.MIXED_SPECTRAL,
        derivative_mode=derivative_mode,
        eigen_cut=cut,
        skipped_weight=skipped,
        eta0=eta0,
    )


# ---------------------------------------------------------------------------
# Channel derivatives
# ---------------------------------------------------------------------------

def _idler_transfer(state: PureState) -> np.ndarray:
    """A = tr_a(a^dag rho_ac) = sum_k sqrt(k) <k-1|rho_ac|k>_a"""
    psi = state.amplitudes
    root = np.sqrt(np.arange(1, psi.shape[0], dtype=float))
    return (psi[:-1, :].T * root) @ psi[1:, :].conj()


def drho_first_order(
    state: PureState,
    n_b: float,
    varphi: Optional[float] = None,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> KronSum:
    """
    Derivative of the (returned, idler) output at eta = 0, keeping only the
    first-order field operation:

        drho = e^{i varphi} [b, rho_th] (x) A - e^{-i varphi} [b^dag, rho_th] (x) A^dag

    The returned mode is sized like the channel output (d_a + cutoff).
    """
    varphi = get_settings().default_varphi if varphi is None else varphi
    if state.n_modes != 2:
        raise ConfigurationException("first-order derivative needs an (a, c) input")
    cutoff = thermal_cutoff(n_b, tail_tolerance) if cutoff is None else cutoff
    thermal = pad_modes(thermal_state(n_b, cutoff, tail_tolerance), [state.mode_dims[0] - 1])
    rho_th = thermal.operator
    lower = annihilation_matrix(thermal.dim)
    transfer = _idler_transfer(state)
    drho = KronSum(
        (
            (np.exp(1j * varphi) * (lower @ rho_th - rho_th @ lower), transfer),
            (-np.exp(-1j * varphi) * (lower.T @ rho_th - rho_th @ lower.T), transfer.conj().T),
        )
    )
    defect = drho.hermiticity_defect()
    if defect > 1e-10:
        raise NumericalToleranceException(f"first-order derivative not Hermitian (defect {defect:.2e})")
    if abs(drho.trace()) > 1e-12:
        raise NumericalToleranceException(f"first-order derivative has trace {abs(drho.trace()):.2e}")
    return drho


def _check_stencil(scenario: TargetScenario, step: float) -> None:
    if not 1e-5 <= step <= 1e-2:
        raise ConfigurationException(f"finite-difference step {step} outside [1e-5, 1e-2]")
    if abs(scenario.eta) + step >= 1:
        raise ConfigurationException("finite-difference stencil leaves the admissible reflectivity range")


def dense_output_fits(state: PureState, cutoff: int) -> bool:
    """Whether the dense present-target output of an entangled input stays within max_dense_dim"""
    d_sig, d_idl = state.mode_dims
    return state.factors is not None or (d_sig + cutoff) * d_idl <= get_settings().max_dense_dim


@dataclass(frozen=True)
class BlockFiniteDifference:
    """Richardson-extrapolated derivative of a BlockOutput, block by block"""
    drho: dict[int, np.ndarray]
    residual: float
    step: float


def finite_difference_blocks(
    state: PureState,
    scenario: TargetScenario,
    step: Optional[float] = None,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> BlockFiniteDifference:
    """finite_difference for inputs with a conserved charge, carried out on the diagonal blocks"""
    step = get_settings().fd_step if step is None else step
    _check_stencil(scenario, step)
    cutoff = thermal_cutoff(scenario.n_b, tail_tolerance) if cutoff is None else cutoff
    eta0 = scenario.eta

    def central(h: float) -> dict[int, np.ndarray]:
        plus = present_output_blocks(state, scenario.at(eta0 + h), cutoff, tail_tolerance).blocks
        minus = present_output_blocks(state, scenario.at(eta0 - h), cutoff, tail_tolerance).blocks
        return {q: (plus[q] - minus[q]) / (2 * h) for q in plus}

    coarse = central(step)
    fine = central(step / 2)
    extrapolated = {q: (4 * fine[q] - coarse[q]) / 3 for q in fine}
    scale = max(1.0, max(float(np.max(np.abs(block))) for block in extrapolated.values()))
    residual = max(float(np.max(np.abs(fine[q] - coarse[q]))) for q in fine) / 3 / scale
    if residual > get_settings().richardson_tolerance:
        raise NumericalToleranceException(
            f"finite-difference derivative not Richardson-consistent (residual {residual:.2e}, step {step})"
        )
    trace = abs(sum(np.trace(block) for block in extrapolated.values()))
    if trace > 1e-10 * scale:
        logger.warning(f"finite-difference derivative trace {trace:.2e}")
    return BlockFiniteDifference(extrapolated, residual, step)


@dataclass(frozen=True)
class FiniteDifference:
    """Richardson-extrapolated derivative with its consistency residual"""
    drho: Derivative
    residual: float
    step: float


def _output_operator(state: PureState, scenario: TargetScenario, cutoff: int, tol: Optional[float]):
    output = apply_present(state, scenario, cutoff, tol).state
    if isinstance(output, ProductState):
        return output.factors[0].operator, output.factors[1].operator
    return output.operator, None


def finite_difference(
    state: PureState,
    scenario: TargetScenario,
    step: Optional[float] = None,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> FiniteDifference:
    """
    Central difference of the present-target output around scenario.eta,
    refined with step/2 and checked for Richardson consistency.

    Product inputs keep their idler factor: the result is a one-term KronSum.
    """
    step = get_settings().fd_step if step is None else step
    _check_stencil(scenario, step)
    eta0 = scenario.eta
    cutoff = thermal_cutoff(scenario.n_b, tail_tolerance) if cutoff is None else cutoff
    if not dense_output_fits(state, cutoff):
        d_sig, d_idl = state.mode_dims
        raise ConfigurationException(
            f"finite-difference output dimension {(d_sig + cutoff) * d_idl} exceeds max_dense_dim"
        )

    idler = None

    def central(h: float) -> np.ndarray:
        nonlocal idler
        plus, idler = _output_operator(state, scenario.at(eta0 + h), cutoff, tail_tolerance)
        minus, _ = _output_operator(state, scenario.at(eta0 - h), cutoff, tail_tolerance)
        return (plus - minus) / (2 * h)

    coarse = central(step)
    fine = central(step / 2)
    extrapolated = (4 * fine - coarse) / 3
    scale = max(1.0, float(np.max(np.abs(extrapolated))))
    residual = float(np.max(np.abs(fine - coarse))) / 3 / scale
    if residual > get_settings().richardson_tolerance:
        raise NumericalToleranceException(
            f"finite-difference derivative not Richardson-consistent (residual {residual:.2e}, step {step})"
        )
    trace = abs(np.trace(extrapolated))
    if trace > 1e-10 * scale:
        logger.warning(f"finite-difference derivative trace {trace:.2e}")
    drho = extrapolated if idler is None else KronSum(((extrapolated, idler),))
    return FiniteDifference(drho, residual, step)


def drho_finite_difference(
    state: PureState,
    scenario: TargetScenario,
    step: Optional[float] = None,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> Derivative:
    return finite_difference(state, scenario, step, cutoff, tail_tolerance).drho


# ---------------------------------------------------------------------------
# Channel QFI
# ---------------------------------------------------------------------------

def qfi_at_scenario(
    state: PureState,
    n_b: float,
    derivative_mode: DerivativeMode = DerivativeMode.FIRST_ORDER,
    eta0: float = 0.0,
    varphi: Optional[float] = None,
    step: Optional[float] = None,
    cutoff: Optional[int] = None,
    eigen_cut: Optional[float] = None,
) -> QfiResult:
    """Spectral QFI of the present-target family at reflectivity eta0"""
    varphi = get_settings().default_varphi if varphi is None else varphi
    cutoff = thermal_cutoff(n_b) if cutoff is None else cutoff
    scenario = TargetScenario(eta=eta0, varphi=varphi, n_b=n_b)
    if derivative_mode == DerivativeMode.FIRST_ORDER:
        if eta0 != 0:
            raise ConfigurationException("the first-order derivative is only defined at eta = 0")
        rho0 = reference_output(state, n_b, cutoff).state
        drho = drho_first_order(state, n_b, varphi, cutoff)
    elif not dense_output_fits(state, cutoff) and conserved_charge(state) is not None:
        rho0 = present_output_blocks(state, scenario, cutoff)
        drho = finite_difference_blocks(state, scenario, step, cutoff).drho
    else:
        rho0 = reference_output(state, n_b, cutoff).state if eta0 == 0 else apply_present(state, scenario, cutoff).state
        drho = drho_finite_difference(state, scenario, step, cutoff)
    return qfi_mixed_spectral(rho0, drho, eigen_cut, derivative_mode, eta0)


LOSS_OPERATING_POINT = 1e-4


def qfi_loss_scenario(state: PureState, eta0: float = LOSS_OPERATING_POINT) -> QfiResult:
    """
    Channel QFI with a vacuum background (pure photon loss), one output discarded.

    Evaluated just above eta = 0 with a finite-difference derivative: for Fock
    inputs the first-order derivative vanishes and the information sits in an
    O(eta^2) population.
    """
    return qfi_at_scenario(
        state, 0.0, DerivativeMode.FINITE_DIFFERENCE, eta0=eta0, step=max(1e-5, eta0 / 10)
    )


@lru_cache(maxsize=1)
def resolve_index_convention() -> IndexOrdering:
    """
    Decide how the closed-form N-photon coefficients map onto sum_n a_n |N-n, n>
    by comparing against the first-order spectral QFI for N = 1, 2.
    """
    rng = np.random.default_rng(20240601)
    n_b = 0.5
    candidates = {IndexOrdering.STATE: 0.0, IndexOrdering.SIGNAL: 0.0}
    for N in (1, 2):
        coeffs = rng.uniform(0.2, 1.0, size=N + 1)
        coeffs /= np.linalg.norm(coeffs)
        state = build_nphoton(nphoton_from_coeffs(coeffs))
        spectral = qfi_at_scenario(state, n_b).value
        for ordering in candidates:
            analytic = nphoton_qfi_value(coeffs, n_b, ordering)
            candidates[ordering] = max(candidates[ordering], abs(analytic - spectral) / max(spectral, 1e-12))
    best = min(candidates, key=candidates.get)
    if candidates[best] > 1e-6:
        raise NumericalToleranceException(f"no coefficient ordering reproduces the spectral QFI: {candidates}")
    logger.info(f"resolved N-photon index convention: {best.value} (mismatch {candidates[best]:.2e})")
    return best


@dataclass(frozen=True)
class DiscrepancyReport:
    """First-order vs finite-difference channel QFI for one input"""
    n_b: float
    first_order: float
    finite_difference: float
    richardson_residual: float
    step_stability: float
    physical_eta: float
    finite_difference_physical: float

    @property
    def difference(self) -> float:
        return self.finite_difference - self.first_order


def discrepancy_study(
    coeffs: Sequence[float], n_b: float, physical_eta: float = 1e-3, step: Optional[float] = None
) -> DiscrepancyReport:
    """
    Compare the first-order QFI with the finite-difference QFI (at eta = 0 and
    at the physical reflectivity); step_stability is the relative change of the
    finite-difference value between step and step/2.
    """
    step = get_settings().fd_step if step is None else step
    state = build_nphoton(nphoton_from_coeffs(coeffs))
    cutoff = thermal_cutoff(n_b)
    scenario = TargetScenario(eta=0.0, n_b=n_b)
    first = qfi_at_scenario(state, n_b, cutoff=cutoff).value
    rho0 = reference_output(state, n_b, cutoff).state
    coarse = finite_difference(state, scenario, step, cutoff)
    fine = finite_difference(state, scenario, step / 2, cutoff)
    fd_coarse = qfi_mixed_spectral(rho0, coarse.drho).value
    fd_fine = qfi_mixed_spectral(rho0, fine.drho).value
    stability = abs(fd_fine - fd_coarse) / max(abs(fd_fine), 1e-12)
    physical = qfi_at_scenario(
        state, n_b, DerivativeMode.FINITE_DIFFERENCE, eta0=physical_eta, step=min(step, physical_eta / 2), cutoff=cutoff
    ).value
    logger.info(
        f"discrepancy n_b={n_b}: first-order {first:.8g}, finite-difference {fd_fine:.8g}, "
        f"at eta={physical_eta} {physical:.8g}"
    )
    return DiscrepancyReport(
        n_b=n_b,
        first_order=first,
        finite_difference=fd_fine,
        richardson_residual=fine.residual,
        step_stability=stability,
        physical_eta=physical_eta,
        finite_difference_physical=physical,
    )
