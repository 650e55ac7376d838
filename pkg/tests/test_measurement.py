import math

import pytest

from app.core.exceptions import ConfigurationException, SensitivityUndefinedException
from app.schemas.scenario import ReceiverConfig, TargetScenario
from app.schemas.states import EnergyBudget, NPhotonEntangledState
from app.services.measurement import (
    error_exponent,
    gaussian_error_exponent,
    receiver_stats,
    receiver_stats_closed_form,
    resolve_combiner_phase,
    sensitivity_and_snr,
)
from app.services.state_library import build_coherent_pair, build_nphoton, build_tmsv_for_budget
from app.services.target_channel import apply_present


def test_combiner_phase_resolution():
    scenario = TargetScenario(eta=1e-3, varphi=1.2)
    assert resolve_combiner_phase(ReceiverConfig(), scenario) == pytest.approx(1.2 - math.pi)
    assert resolve_combiner_phase(ReceiverConfig(varphi_combiner=0.3), scenario) == 0.3


def test_receiver_rejects_tmsv_and_zero_reflectivity():
    tmsv = build_tmsv_for_budget(EnergyBudget(total_mean_photons=2.0))
    with pytest.raises(ConfigurationException):
        sensitivity_and_snr(tmsv, TargetScenario(eta=1e-3), family="tmsv")
    pair = build_coherent_pair(EnergyBudget(total_mean_photons=2.0))
    with pytest.raises(ConfigurationException):
        sensitivity_and_snr(pair, TargetScenario(eta=0.0))


def test_coherent_pair_receiver_statistics():
    eta = 1e-3
    state = build_coherent_pair(EnergyBudget(total_mean_photons=4.0))
    stats = sensitivity_and_snr(state, TargetScenario(eta=eta, n_b=0.5), family="coherent-pair")
    # phase-matched mean is 2 eta |alpha|^2
    assert stats.m == pytest.approx(2 * eta * 2.0, rel=1e-6)
    assert stats.m == pytest.approx(eta * stats.dm_deta, rel=1e-6)
    assert abs(stats.n0_mean) <= 1e-12
    assert stats.eq6_residual < 1e-9
    assert stats.snr_e < stats.snr
    assert stats.delta_eta == pytest.approx(stats.sigma1 / abs(stats.dm_deta))


def test_coherent_pair_degrades_with_background():
    state = build_coherent_pair(EnergyBudget(total_mean_photons=4.0, signal_only=True))
    rows = [sensitivity_and_snr(state, TargetScenario(eta=1e-3, n_b=n_b)) for n_b in (0.0, 0.5, 1.0, 2.0)]
    for earlier, later in zip(rows, rows[1:]):
        assert later.snr < earlier.snr
        assert later.delta_eta > earlier.delta_eta


def test_combiner_path_matches_observable():
    """Explicit 50:50 combiner and the closed-form observable give the same moments"""
    state = build_nphoton(NPhotonEntangledState(N=1, coeffs=[0.6, 0.8]))
    output = apply_present(state, TargetScenario(eta=1e-3, n_b=0.3))
    phi = 0.4
    m_obs, var_obs = receiver_stats(output, ReceiverConfig(), phi)
    m_comb, var_comb = receiver_stats(output, ReceiverConfig(path="combiner"), phi)
    assert m_comb == pytest.approx(m_obs, abs=1e-12)
    assert var_comb == pytest.approx(var_obs, rel=1e-9)


def test_nphoton_mean_from_adjacent_coefficients():
    eta = 1e-3
    state = build_nphoton(NPhotonEntangledState(N=1, coeffs=[0.6, 0.8]))
    stats = sensitivity_and_snr(state, TargetScenario(eta=eta, n_b=0.2))
    assert stats.m == pytest.approx(2 * eta * 0.48, rel=1e-6)


def test_vanishing_derivative_is_reported():
    """Zero slope of <M> makes the sensitivity undefined, partial stats are kept"""
    state = build_nphoton(NPhotonEntangledState(N=1, coeffs=[1.0, 0.0]))
    with pytest.raises(SensitivityUndefinedException) as err:
        sensitivity_and_snr(state, TargetScenario(eta=1e-3, n_b=0.5))
    assert err.value.partial["m"] == pytest.approx(0.0, abs=1e-14)
    assert err.value.partial["var_m"] > 0


def test_error_exponents():
    state = build_coherent_pair(EnergyBudget(total_mean_photons=4.0))
    stats = sensitivity_and_snr(state, TargetScenario(eta=1e-3, n_b=1.0))
    assert error_exponent(stats) == pytest.approx(stats.snr_e ** 2)
    assert gaussian_error_exponent(stats) == pytest.approx(stats.snr_e ** 2 / 2)


def test_closed_form_moments_match_channel():
    states = {
        "coherent-pair": build_coherent_pair(EnergyBudget(total_mean_photons=2.0)),
        "nphoton": build_nphoton(NPhotonEntangledState(N=2, coeffs=[0.6, 0.48, 0.64])),
    }
    for family, state in states.items():
        for n_b, phase in ((0.5, None), (1.0, 0.0), (2.0, math.pi / 2)):
            scenario = TargetScenario(eta=1e-3, varphi=0.7, n_b=n_b)
            config = ReceiverConfig(varphi_combiner=phase)
            full = sensitivity_and_snr(state, scenario, config, family=family)
            closed = receiver_stats_closed_form(state, scenario, config)
            for name in ("m", "var_m", "dm_deta", "snr", "snr_e", "sigma0"):
                assert getattr(closed, name) == pytest.approx(getattr(full, name), rel=1e-7), (family, n_b, name)


def test_fixed_state_snr_falls_with_background():
    """M does not depend on n_b while the variance grows with it"""
    state = build_nphoton(NPhotonEntangledState(N=2, coeffs=[0.6, 0.48, 0.64]))
    grid = (0.0, 0.25, 0.5, 1.0, 3.0)
    snrs = [receiver_stats_closed_form(state, TargetScenario(eta=1e-3, n_b=n_b)).snr for n_b in grid]
    assert all(b < a for a, b in zip(snrs, snrs[1:])), snrs
