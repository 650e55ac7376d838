import math

import numpy as np
import pytest

from app.core.exceptions import ConfigurationException
from app.schemas.scenario import TargetScenario
from app.schemas.states import EnergyBudget, NPhotonEntangledState
from app.services.fock_core import (
    MixedState,
    ProductState,
    as_dense,
    expectation,
    number,
    partial_trace,
    trace_distance,
)
from app.services.state_library import build_coherent_pair, build_nphoton, build_tmsv_for_budget
from app.services.target_channel import (
    apply_absent,
    apply_channel,
    apply_present,
    conserved_charge,
    present_output_blocks,
    reference_output,
    renyi2_mutual_info,
    thermal_cutoff_for,
)


def _nphoton(coeffs):
    return build_nphoton(NPhotonEntangledState(N=len(coeffs) - 1, coeffs=coeffs))


def test_renyi2_small_on_receiver_grid():
    assert renyi2_mutual_info(1e-3, 0.0) == 0.0
    for n_b in np.linspace(0, 3, 13):
        assert renyi2_mutual_info(1e-3, n_b) < 1e-5, f"n_b={n_b}"
    assert renyi2_mutual_info(0.5, 3.0) > 1e-2


def test_present_output_is_normalized():
    state = _nphoton([0.6, 0.0, 0.8])
    output = apply_present(state, TargetScenario(eta=0.05, n_b=0.5))
    assert isinstance(output.state, MixedState)
    assert output.mode_dims == (3 + thermal_cutoff_for(0.5), 3)
    assert abs(output.state.trace() + output.thermal_tail_report - 1) <= 1e-12
    output.state.validate()


def test_present_mean_photon_split():
    """Returned mode carries eta^2 of the signal and 1 - eta^2 of the background"""
    eta, n_b = 0.1, 0.7
    state = _nphoton([0.6, 0.0, 0.8])
    output = apply_present(state, TargetScenario(eta=eta, n_b=n_b))
    returned = expectation(output.state, number(0)).real
    expected = eta ** 2 * 2 * 0.36 + (1 - eta ** 2) * n_b
    assert abs(returned - expected) <= 1e-7, f"<n_b,out> = {returned}, expected {expected}"


def test_zero_reflectivity_matches_reference():
    state = _nphoton([0.5, 0.5, math.sqrt(0.5)])
    present = apply_present(state, TargetScenario(eta=0.0, n_b=0.4))
    reference = reference_output(state, 0.4)
    assert trace_distance(present.state, reference.state) <= 1e-12


def test_absent_keeps_idler_marginal():
    """Without a target the idler is untouched and the return is pure background"""
    state = _nphoton([0.6, 0.0, 0.8])
    output = apply_absent(state, TargetScenario(eta=1e-3, n_b=1.0, present=False))
    assert isinstance(output.state, ProductState)
    idler = partial_trace(output.state, [1])
    assert np.allclose(as_dense(idler).operator, partial_trace(state, [1]).operator)
    assert expectation(output.state, number(0)).real == pytest.approx(1.0, abs=1e-8)


def test_product_input_stays_factorized():
    state = build_coherent_pair(EnergyBudget(total_mean_photons=2.0))
    output = apply_present(state, TargetScenario(eta=1e-3, n_b=0.5))
    assert isinstance(output.state, ProductState)
    assert output.state.factors[1].mode_dims == (state.mode_dims[1],)


def test_channel_dispatch_and_flag():
    state = _nphoton([1.0, 0.0])
    absent = TargetScenario(eta=1e-3, n_b=0.2, present=False)
    assert isinstance(apply_channel(state, absent).state, ProductState)
    with pytest.raises(ConfigurationException):
        apply_present(state, absent)


def test_oversized_entangled_output_is_refused():
    tmsv = build_tmsv_for_budget(EnergyBudget(total_mean_photons=4.0))
    with pytest.raises(ConfigurationException, match="max_dense_dim"):
        apply_present(tmsv, TargetScenario(eta=1e-3, n_b=1.0))


def test_full_reflection_returns_the_signal_photon():
    output = apply_present(_nphoton([1.0, 0.0]), TargetScenario(eta=1.0, n_b=0.0))
    assert expectation(output.state, number(0)).real == pytest.approx(1.0, abs=1e-12)


def test_returned_flux_for_fock_signal():
    eta, n_b = 1e-3, 1.0
    output = apply_present(_nphoton([1.0, 0.0, 0.0, 0.0, 0.0]), TargetScenario(eta=eta, n_b=n_b))
    returned = expectation(output.state, number(0)).real
    expected = eta ** 2 * 4 + (1 - eta ** 2) * n_b
    assert abs(returned - expected) <= 1e-9, f"<n> = {returned}, expected {expected}"


def test_present_keeps_idler_marginal():
    state = _nphoton([0.6, 0.0, 0.8])
    for eta, n_b in ((1e-3, 1.0), (0.3, 0.5)):
        output = apply_present(state, TargetScenario(eta=eta, n_b=n_b))
        idler = partial_trace(output.state, [1]).operator
        expected = partial_trace(state, [1]).operator
        assert np.max(np.abs(idler - expected)) <= 1e-10, f"eta={eta}, n_b={n_b}"


def test_conserved_charge_signs():
    assert conserved_charge(build_tmsv_for_budget(EnergyBudget(total_mean_photons=1.0))) == -1
    assert conserved_charge(_nphoton([0.6, 0.0, 0.8])) == 1
    assert conserved_charge(build_coherent_pair(EnergyBudget(total_mean_photons=1.0))) is None


def test_block_output_reassembles_dense_output():
    scenario = TargetScenario(eta=0.2, varphi=0.4, n_b=0.5)
    for state in (_nphoton([0.6, 0.0, 0.8]), build_tmsv_for_budget(EnergyBudget(total_mean_photons=0.5))):
        blocks = present_output_blocks(state, scenario)
        dense = apply_present(state, scenario)
        assert blocks.mode_dims == dense.mode_dims
        assert np.max(np.abs(blocks.to_dense() - dense.state.operator)) <= 1e-12
        assert blocks.tail_mass == pytest.approx(dense.thermal_tail_report)


def test_block_output_needs_a_charge():
    with pytest.raises(ConfigurationException):
        present_output_blocks(build_coherent_pair(EnergyBudget(total_mean_photons=1.0)), TargetScenario(eta=0.1, n_b=1.0))
