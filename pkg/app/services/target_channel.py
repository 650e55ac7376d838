"""
Target Channel

The target is a beam splitter of reflectivity eta = sin(theta/2) that mixes
the signal mode a with a thermal background mode b. The returned light is
the b output port; the transmitted a port is lost. Output states live on
(returned b, idler c).

The present-target channel is evaluated exactly by decomposing the thermal
mode into photon-number sectors: each sector is a pure three-mode evolution
whose reduced output is accumulated with its geometric weight.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import ConfigurationException
from app.schemas.scenario import TargetScenario
from app.services.fock_core import (
    MixedState,
    ProductState,
    PureState,
    beam_splitter_tensor,
    pad_modes,
    partial_trace,
    thermal_cutoff,
    thermal_state,
    to_density,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelOutput:
    """Reduced state on (returned, idler) plus the thermal truncation report"""
    state: Union[MixedState, ProductState]
    thermal_tail_report: float

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return self.state.mode_dims


def thermal_cutoff_for(n_b: float, tail_tolerance: Optional[float] = None) -> int:
    return thermal_cutoff(n_b, tail_tolerance)


def renyi2_mutual_info(eta: float, n_b: float) -> float:
    """Gaussian Renyi-2 mutual information between the two split thermal shares"""
    return math.log1p(2 * eta ** 2 * (1 - eta ** 2) * n_b ** 2 / (1 + 2 * n_b))


def _split_input(state: PureState) -> tuple[np.ndarray, Optional[PureState]]:
    """Signal amplitudes (with the idler axis) or, for product inputs, the signal factor alone"""
    if state.n_modes != 2:
        raise ConfigurationException(f"channel input must be a two-mode (a, c) state, got {state.n_modes} modes")
    if state.factors is not None and len(state.factors) == 2:
        return state.factors[0].amplitudes[:, None], state.factors[1]
    return state.amplitudes, None


def _thermal_weights(n_b: float, cutoff: int) -> tuple[np.ndarray, float]:
    d_th = cutoff + 1
    if n_b == 0:
        weights = np.zeros(d_th)
        weights[0] = 1.0
        return weights, 0.0
    x = n_b / (1 + n_b)
    return (1 - x) * x ** np.arange(d_th), x ** d_th


def _sector_kets(amps: np.ndarray, weights: np.ndarray, theta: float, varphi: float):
    """Yield (p_m, K_m) with rows over (returned, idler) and columns over the lost port"""
    d_sig, d_idl = amps.shape
    d_out = d_sig + len(weights) - 1
    for m, p_m in enumerate(weights):
        if p_m < 1e-300:
            continue
        psi = np.zeros((d_out, d_out, d_idl), dtype=complex)
        psi[:d_sig, m, :] = amps
        out = beam_splitter_tensor(psi, 0, 1, theta, varphi)
        yield p_m, out.transpose(1, 2, 0).reshape(d_out * d_idl, d_out)


def _sector_mixture(
    amps: np.ndarray, n_b: float, cutoff: int, theta: float, varphi: float
) -> tuple[np.ndarray, int, float]:
    """sum_m p_m tr_a[B (|psi><psi| (x) |m><m|) B^dag] for amps of shape (d_a, d_c)"""
    d_sig, d_idl = amps.shape
    d_out = d_sig + cutoff
    weights, tail = _thermal_weights(n_b, cutoff)
    rho = np.zeros((d_out * d_idl, d_out * d_idl), dtype=complex)
    for p_m, kept in _sector_kets(amps, weights, theta, varphi):
        rho += p_m * (kept @ kept.conj().T)
    return rho, d_out, tail


def _check_regime(scenario: TargetScenario) -> None:
    if not scenario.small_reflectivity:
        logger.warning(f"eta={scenario.eta} is outside the small-reflectivity regime")
    if not scenario.splitting_regime:
        logger.warning(f"eta^2 n_b = {scenario.eta ** 2 * scenario.n_b:.3g} is not small; noise splitting is questionable")


def apply_present(
    state: PureState,
    scenario: TargetScenario,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> ChannelOutput:
    """
    Reflect the signal off a present target

    Args:
        state: Pure input on (signal a, idler c)
        scenario: Reflectivity, beam-splitter phase and background mean
        cutoff: Thermal mode cutoff; derived from the tail tolerance when omitted
        tail_tolerance: Override of the configured truncation tolerance

    Returns:
        ChannelOutput on (returned, idler). The returned mode has dimension
        d_a + cutoff so that no amplitude leaves the truncated space.

    Raises:
        ConfigurationException: If the target flag says absent, the input is not two-mode,
            or the entangled output would exceed max_dense_dim
        TruncationException: If the thermal tail exceeds the tolerance
    """
    if not scenario.present:
        raise ConfigurationException("apply_present called with present=False")
    tol = get_settings().tail_tolerance if tail_tolerance is None else tail_tolerance
    cutoff = thermal_cutoff(scenario.n_b, tol) if cutoff is None else cutoff
    thermal_state(scenario.n_b, cutoff, tol)  # validates the tail
    _check_regime(scenario)

    amps, idler = _split_input(state)
    dim = (amps.shape[0] + cutoff) * amps.shape[1]
    if dim > get_settings().max_dense_dim:
        raise ConfigurationException(
            f"present-target output of dimension {dim} exceeds max_dense_dim={get_settings().max_dense_dim}"
        )
    rho, d_out, tail = _sector_mixture(amps, scenario.n_b, cutoff, scenario.theta, scenario.varphi)
    tail += state.tail_mass
    if idler is None:
        output = MixedState((d_out, amps.shape[1]), rho, tail)
    else:
        output = ProductState((MixedState((d_out,), rho, tail), to_density(idler)))
    return ChannelOutput(output, tail)


def apply_absent(
    state: PureState,
    scenario: TargetScenario,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> ChannelOutput:
    """rho_th(n_b) (x) tr_a(input), with the returned mode sized like apply_present's"""
    tol = get_settings().tail_tolerance if tail_tolerance is None else tail_tolerance
    cutoff = thermal_cutoff(scenario.n_b, tol) if cutoff is None else cutoff
    thermal = thermal_state(scenario.n_b, cutoff, tol)
    d_sig = state.mode_dims[0]
    returned = pad_modes(thermal, [d_sig - 1])
    _, idler = _split_input(state)
    reduced = to_density(idler) if idler is not None else partial_trace(state, [1])
    return ChannelOutput(ProductState((returned, reduced)), thermal.tail_mass)


def reference_output(
    state: PureState, n_b: float, cutoff: Optional[int] = None, tail_tolerance: Optional[float] = None
) -> ChannelOutput:
    """The eta = 0 member of the present-target family (identical to the absent-target output)"""
    return apply_absent(state, TargetScenario(eta=0.0, n_b=n_b), cutoff, tail_tolerance)


def apply_channel(
    state: PureState,
    scenario: TargetScenario,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> ChannelOutput:
    if scenario.present:
        return apply_present(state, scenario, cutoff, tail_tolerance)
    return apply_absent(state, scenario, cutoff, tail_tolerance)


@dataclass(frozen=True)
class BlockOutput:
    """
    Present-target output on (returned, idler) held as its diagonal blocks

    The blocks are labelled by the conserved charge k + sign * n of the
    returned photon number k and idler photon number n; indices[q] lists the
    flat (returned, idler) positions of block q.
    """
    mode_dims: tuple[int, int]
    sign: int
    indices: dict[int, np.ndarray]
    blocks: dict[int, np.ndarray]
    tail_mass: float

    def to_dense(self) -> np.ndarray:
        dim = self.mode_dims[0] * self.mode_dims[1]
        rho = np.zeros((dim, dim), dtype=complex)
        for q, idx in self.indices.items():
            rho[np.ix_(idx, idx)] = self.blocks[q]
        return rho


def conserved_charge(state: PureState) -> Optional[int]:
    """
    Sign s such that the input is supported on n_a + s * n_c = const, or None

    TMSV has s = -1 and the N-photon family has s = +1. The present-target
    output then commutes with n_b + s * n_c.
    """
    if state.n_modes != 2 or state.factors is not None:
        return None
    support = np.argwhere(state.amplitudes != 0)
    if len(support) == 0:
        return None
    for sign in (1, -1):
        if len({int(i + sign * j) for i, j in support}) == 1:
            return sign
    return None


def present_output_blocks(
    state: PureState,
    scenario: TargetScenario,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> BlockOutput:
    """
    apply_present for entangled inputs with a conserved charge, without the dense matrix

    Raises:
        ConfigurationException: If the input has no conserved charge
        TruncationException: If the thermal tail exceeds the tolerance
    """
    sign = conserved_charge(state)
    if sign is None:
        raise ConfigurationException("block output needs an input with a conserved photon-number charge")
    tol = get_settings().tail_tolerance if tail_tolerance is None else tail_tolerance
    cutoff = thermal_cutoff(scenario.n_b, tol) if cutoff is None else cutoff
    thermal_state(scenario.n_b, cutoff, tol)
    _check_regime(scenario)

    amps = state.amplitudes
    d_out, d_idl = amps.shape[0] + cutoff, amps.shape[1]
    returned, idler = np.divmod(np.arange(d_out * d_idl), d_idl)
    labels = returned + sign * idler
    indices = {int(q): np.flatnonzero(labels == q) for q in np.unique(labels)}
    blocks = {q: np.zeros((len(idx), len(idx)), dtype=complex) for q, idx in indices.items()}

    weights, tail = _thermal_weights(scenario.n_b, cutoff)
    for p_m, kept in _sector_kets(amps, weights, scenario.theta, scenario.varphi):
        for q, idx in indices.items():
            rows = kept[idx]
            blocks[q] += p_m * (rows @ rows.conj().T)
    return BlockOutput((d_out, d_idl), sign, indices, blocks, tail + state.tail_mass)
