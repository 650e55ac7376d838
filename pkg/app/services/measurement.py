"""
Photon-Number-Difference Receiver

The returned mode b and the idler c are combined on a 50:50 beam splitter
and the output photon-number difference n_d - n_e is recorded. Equivalently
the observable M = e^{-i phi} b^dag c + e^{i phi} c^dag b is measured on the
(returned, idler) state. From its moments the error-propagation sensitivity,
the signal-to-noise ratio and the effective SNR / error exponent follow.
"""

import logging
import math
from typing import Optional

import numpy as np

from app.core.config import get_settings
from app.core.exceptions import (
    ConfigurationException,
    NumericalToleranceException,
    SensitivityUndefinedException,
)
from app.schemas.results import ReceiverStats
from app.schemas.scenario import ReceiverConfig, TargetScenario
from app.services.fock_core import (
    PureState,
    annihilate,
    as_dense,
    beam_splitter,
    create,
    expectation,
    number,
    pad_modes,
)
from app.services.target_channel import ChannelOutput, apply_absent, apply_present, thermal_cutoff_for

logger = logging.getLogger(__name__)


def resolve_combiner_phase(config: ReceiverConfig, scenario: TargetScenario) -> float:
    """Explicit phase, or the phase-matched value varphi - pi when unset"""
    if config.varphi_combiner is not None:
        return config.varphi_combiner
    return scenario.varphi - math.pi


def _difference_observable(phi: float):
    return [
        (np.exp(-1j * phi), (create(0), annihilate(1))),
        (np.exp(1j * phi), (create(1), annihilate(0))),
    ]


def _difference_squared(phi: float):
    b_dag, b, c_dag, c = create(0), annihilate(0), create(1), annihilate(1)
    return [
        (np.exp(-2j * phi), (b_dag, b_dag, c, c)),
        (1.0, (b_dag, b, c, c_dag)),
        (1.0, (b, b_dag, c_dag, c)),
        (np.exp(2j * phi), (b, b, c_dag, c_dag)),
    ]


def _observable_moments(output: ChannelOutput, phi: float) -> tuple[float, float]:
    padded = pad_modes(output.state, [2, 2])
    m = expectation(padded, _difference_observable(phi))
    second = expectation(padded, _difference_squared(phi))
    if abs(m.imag) > 1e-10 or abs(second.imag) > 1e-10:
        raise NumericalToleranceException(f"Hermitian moments not real: <M>={m}, <M^2>={second}")
    return m.real, second.real


def _combiner_moments(output: ChannelOutput, phi: float) -> tuple[float, float]:
    """Explicit 50:50 combination of (b, c) followed by n_d - n_e"""
    d_b, d_c = output.mode_dims
    size = (d_b + d_c - 1) ** 2
    if size > get_settings().max_dense_dim:
        raise ConfigurationException(f"combiner path needs a {size}-dimensional state (max_dense_dim)")
    padded = pad_modes(as_dense(output.state), [d_c - 1, d_b - 1])
    combined = beam_splitter(padded, (0, 1), math.pi / 2, -phi)
    m = expectation(combined, [(1.0, (number(0),)), (-1.0, (number(1),))])
    second = expectation(
        combined,
        [(1.0, (number(0), number(0))), (-2.0, (number(0), number(1))), (1.0, (number(1), number(1)))],
    )
    return m.real, second.real


def receiver_stats(
    output: ChannelOutput, config: Optional[ReceiverConfig] = None, varphi_combiner: float = 0.0
) -> tuple[float, float]:
    """
    First moment and variance of the photon-number difference

    Args:
        output: Two-mode (returned, idler) channel output
        config: Selects the evaluation path ("observable" or "combiner")
        varphi_combiner: Resolved combiner phase

    Returns:
        (m, var_m)
    """
    config = config or ReceiverConfig()
    if len(output.mode_dims) != 2:
        raise ConfigurationException("receiver needs a two-mode output state")
    if config.path == "combiner":
        m, second = _combiner_moments(output, varphi_combiner)
    else:
        m, second = _observable_moments(output, varphi_combiner)
    return m, max(0.0, second - m ** 2)


def _mean_difference(
    state: PureState, scenario: TargetScenario, phi: float, cutoff: int, tail_tolerance: Optional[float]
) -> float:
    padded = pad_modes(apply_present(state, scenario, cutoff, tail_tolerance).state, [1, 1])
    return expectation(padded, _difference_observable(phi)).real


def sensitivity_and_snr(
    state: PureState,
    scenario: TargetScenario,
    config: Optional[ReceiverConfig] = None,
    family: Optional[str] = None,
    cutoff: Optional[int] = None,
    tail_tolerance: Optional[float] = None,
) -> ReceiverStats:
    """
    Error-propagation sensitivity and SNR at the physical reflectivity

    dM/deta is a central difference at eta with step fd_step * max(1, eta/1e-3),
    refined with half the step and checked for Richardson consistency.

    Raises:
        ConfigurationException: For a TMSV input or a non-positive reflectivity
        SensitivityUndefinedException: If dM/deta or the M variance vanishes
    """
    config = config or ReceiverConfig()
    if family == "tmsv":
        raise ConfigurationException(
            "the photon-number-difference receiver is not defined for TMSV inputs: <b^dag c> vanishes identically"
        )
    if scenario.eta <= 0:
        raise ConfigurationException("sensitivity needs a positive reflectivity")
    phi = resolve_combiner_phase(config, scenario)
    cutoff = thermal_cutoff_for(scenario.n_b, tail_tolerance) if cutoff is None else cutoff

    present = apply_present(state, scenario, cutoff, tail_tolerance)
    m, var_m = receiver_stats(present, config, phi)
    absent = apply_absent(state, scenario.model_copy(update={"present": False}), cutoff, tail_tolerance)
    n0, var0 = receiver_stats(absent, config, phi)

    step = config.fd_step * max(1.0, scenario.eta / 1e-3)
    if scenario.eta - step <= -1 or scenario.eta + step >= 1:
        raise ConfigurationException("derivative stencil leaves the admissible reflectivity range")

    def central(h: float) -> float:
        plus = _mean_difference(state, scenario.at(scenario.eta + h), phi, cutoff, tail_tolerance)
        minus = _mean_difference(state, scenario.at(scenario.eta - h), phi, cutoff, tail_tolerance)
        return (plus - minus) / (2 * h)

    coarse, fine = central(step), central(step / 2)
    dm = (4 * fine - coarse) / 3
    residual = abs(fine - coarse) / 3
    if residual > get_settings().richardson_tolerance * max(abs(dm), 1e-12) and residual > 1e-12:
        logger.warning(f"dM/deta Richardson residual {residual:.2e} at eta={scenario.eta}, n_b={scenario.n_b}")

    sigma1, sigma0 = math.sqrt(var_m), math.sqrt(var0)
    partial = {"m": m, "var_m": var_m, "dm_deta": dm, "n0_mean": n0, "sigma0": sigma0, "varphi_combiner": phi}
    if abs(dm) < 1e-14:
        raise SensitivityUndefinedException(
            f"dM/deta = {dm:.3e} vanishes at n_b={scenario.n_b}; sensitivity undefined", partial
        )
    if var_m <= 0:
        raise SensitivityUndefinedException("M variance vanishes; SNR undefined", partial)

    stats = ReceiverStats(
        m=m,
        var_m=var_m,
        dm_deta=dm,
        delta_eta=sigma1 / abs(dm),
        snr=abs(m) / sigma1,
        snr_e=abs(m - n0) / (sigma0 + sigma1),
        n1_mean=m,
        n0_mean=n0,
        sigma1=sigma1,
        sigma0=sigma0,
        varphi_combiner=phi,
    )
    logger.debug(f"receiver n_b={scenario.n_b}: m={m:.6e} var={var_m:.6e} snr={stats.snr:.6e}")
    return stats

def _input_moments(state: PureState) -> tuple[complex, complex, float, float]:
    """<a^dag c>, <a^dag^2 c^2>, <n_a (2 n_c + 1)> and <n_c> of the (a, c) input"""
    padded = pad_modes(state, [2, 2])
    a_dag, c = create(0), annihilate(1)
    cross = expectation(padded, [(1.0, (a_dag, c))])
    double = expectation(padded, [(1.0, (a_dag, a_dag, c, c))])
    weighted = expectation(padded, [(2.0, (number(0), number(1))), (1.0, (number(0),))]).real
    idler = expectation(padded, number(1)).real
    return cross, double, weighted, idler


def receiver_stats_closed_form(
    state: PureState, scenario: TargetScenario, config: Optional[ReceiverConfig] = None
) -> ReceiverStats:
    """
    sensitivity_and_snr from the input moments alone, with an untruncated thermal background

    For the present target
        M     = -2 eta Re(e^{i(varphi - phi)} <a^dag c>)
        <M^2> = 2 eta^2 Re(e^{2i(varphi - phi)} <a^dag^2 c^2>)
                + (1 - eta^2) n_b <2 n_c + 1> + eta^2 <n_a (2 n_c + 1)> + <n_c>
    and the absent target is the eta = 0 member. M is linear in eta, so dM/deta is exact.

    Raises:
        ConfigurationException: For a non-positive reflectivity
        SensitivityUndefinedException: If dM/deta or the M variance vanishes
    """
    config = config or ReceiverConfig()
    if scenario.eta <= 0:
        raise ConfigurationException("sensitivity needs a positive reflectivity")
    phi = resolve_combiner_phase(config, scenario)
    eta, n_b = scenario.eta, scenario.n_b
    cross, double, weighted, idler = _input_moments(state)
    rotation = np.exp(1j * (scenario.varphi - phi))

    dm = -2 * float((rotation * cross).real)
    m = eta * dm
    background = n_b * (2 * idler + 1) + idler
    second = (
        2 * eta ** 2 * float((rotation ** 2 * double).real)
        + (1 - eta ** 2) * n_b * (2 * idler + 1)
        + eta ** 2 * weighted
        + idler
    )
    var_m = max(0.0, second - m ** 2)
    sigma1, sigma0 = math.sqrt(var_m), math.sqrt(background)
    partial = {"m": m, "var_m": var_m, "dm_deta": dm, "n0_mean": 0.0, "sigma0": sigma0, "varphi_combiner": phi}
    if abs(dm) < 1e-14:
        raise SensitivityUndefinedException(
            f"dM/deta = {dm:.3e} vanishes at n_b={n_b}; sensitivity undefined", partial
        )
    if var_m <= 0:
        raise SensitivityUndefinedException("M variance vanishes; SNR undefined", partial)
    return ReceiverStats(
        m=m,
        var_m=var_m,
        dm_deta=dm,
        delta_eta=sigma1 / abs(dm),
        snr=abs(m) / sigma1,
        snr_e=abs(m) / (sigma0 + sigma1),
        n1_mean=m,
        n0_mean=0.0,
        sigma1=sigma1,
        sigma0=sigma0,
        varphi_combiner=phi,
    )



def error_exponent(stats: ReceiverStats) -> float:
    """R_nG = (n1 - n0)^2 / (sigma0 + sigma1)^2"""
    denom = stats.sigma0 + stats.sigma1
    if denom <= 0:
        raise SensitivityUndefinedException("sigma0 + sigma1 vanishes; error exponent undefined", stats)
    return (stats.n1_mean - stats.n0_mean) ** 2 / denom ** 2


def gaussian_error_exponent(stats: ReceiverStats) -> float:
    return error_exponent(stats) / 2
