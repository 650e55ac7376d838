import math

import numpy as np
import pytest

from app.core.config import Settings
from app.core.exceptions import ConfigurationException
from app.schemas.results import DerivativeMode, IndexOrdering, QfiMethod
from app.schemas.scenario import TargetScenario
from app.schemas.states import CoherentSqueezedParams, EnergyBudget, NPhotonEntangledState
from app.services import qfi_engine
from app.services.fock_core import MixedState, fock_state, tensor_product
from app.services.qfi_engine import (
    drho_first_order,
    finite_difference_blocks,
    nphoton_qfi_value,
    qfi_at_scenario,
    qfi_coherent_analytic,
    qfi_loss_scenario,
    qfi_mixed_spectral,
    qfi_nphoton_analytic,
    qfi_phase_mzi,
    qfi_pure_reflectivity,
    resolve_index_convention,
)
from app.services.state_library import (
    build_coherent_pair,
    build_coherent_squeezed,
    build_nphoton,
    build_tmsv_for_budget,
    random_pure_state,
)
from app.services.target_channel import present_output_blocks


def _relative(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def test_interferometer_equivalence_random_states():
    """Reflectivity QFI equals the phase QFI of the equivalent interferometer"""
    rng = np.random.default_rng(11)
    for i in range(8):
        state = random_pure_state((4, 4), rng)
        mzi = qfi_phase_mzi(state).value
        pure = qfi_pure_reflectivity(state).value
        assert _relative(mzi, pure) <= 1e-7, f"state {i}: phase {mzi} vs reflectivity {pure}"


def test_coherent_closed_form_matches_generator_variance():
    for alpha, r, varphi in ((1.0, 0.0, math.pi / 2), (0.8 + 0.3j, 0.5, 1.1), (1.2j, 0.3, 0.2)):
        params = CoherentSqueezedParams(alpha=alpha, r=r, varphi=varphi)
        state = build_coherent_squeezed(params)
        analytic = qfi_coherent_analytic(params, state.factors[1])
        exact = qfi_pure_reflectivity(state, varphi)
        assert analytic.method == QfiMethod.COHERENT_ANALYTIC_EQ4
        assert _relative(analytic.value, exact.value) <= 1e-7, f"alpha={alpha} r={r}: {analytic.value} vs {exact.value}"


def test_coherent_vacuum_port_gives_four_alpha_squared():
    params = CoherentSqueezedParams(alpha=math.sqrt(2))
    state = build_coherent_squeezed(params)
    assert qfi_pure_reflectivity(state).value == pytest.approx(8.0, rel=1e-8)


def test_squeezing_along_aligned_axis_helps():
    vacuum = CoherentSqueezedParams(alpha=1.0, r=0.0)
    squeezed = CoherentSqueezedParams(alpha=1.0, r=0.5)
    assert qfi_pure_reflectivity(build_coherent_squeezed(squeezed)).value > qfi_pure_reflectivity(
        build_coherent_squeezed(vacuum)
    ).value


def test_nphoton_closed_form_limits():
    end = [0.0, 0.0, 0.0, 0.0, 1.0]
    assert nphoton_qfi_value(end, 0.0, IndexOrdering.STATE) == pytest.approx(16.0)
    assert nphoton_qfi_value(end[::-1], 0.0, IndexOrdering.SIGNAL) == pytest.approx(16.0)
    assert nphoton_qfi_value([1.0, 0.0], 0.0, IndexOrdering.STATE) == 0.0
    with pytest.raises(ConfigurationException):
        qfi_nphoton_analytic([0.5, 0.5], 1.0)


def test_nphoton_closed_form_decreases_with_background():
    coeffs = np.array([0.5, 0.4, 0.3, 0.2, 0.1])
    coeffs /= np.linalg.norm(coeffs)
    values = [nphoton_qfi_value(coeffs, n_b) for n_b in np.linspace(0, 5, 11)]
    assert all(b < a for a, b in zip(values, values[1:])), f"not decreasing: {values}"


def test_nphoton_closed_form_matches_spectral():
    rng = np.random.default_rng(2)
    for N in (1, 2, 3):
        for n_b in (0.0, 0.5, 1.0):
            coeffs = rng.uniform(0.1, 1.0, size=N + 1)
            coeffs /= np.linalg.norm(coeffs)
            state = build_nphoton(NPhotonEntangledState(N=N, coeffs=list(coeffs)))
            spectral = qfi_at_scenario(state, n_b).value
            analytic = nphoton_qfi_value(coeffs, n_b)
            assert _relative(spectral, analytic) <= 1e-6, f"N={N} n_b={n_b}: {spectral} vs {analytic}"


def test_index_convention_is_cached():
    first = resolve_index_convention()
    assert first in (IndexOrdering.STATE, IndexOrdering.SIGNAL)
    assert resolve_index_convention() is first


def test_channel_anchors_at_zero_background():
    """At n_b = 0 TMSV and the coherent pair both reach QFI 8 for energy 4"""
    budget = EnergyBudget(total_mean_photons=4.0)
    tmsv = qfi_at_scenario(build_tmsv_for_budget(budget), 0.0)
    coherent = qfi_at_scenario(build_coherent_pair(budget), 0.0)
    assert tmsv.derivative_mode == DerivativeMode.FIRST_ORDER
    assert tmsv.value == pytest.approx(8.0, rel=1e-4)
    assert coherent.value == pytest.approx(8.0, rel=1e-4)


def test_first_order_derivative_is_traceless_hermitian():
    state = build_nphoton(NPhotonEntangledState(N=2, coeffs=[0.6, 0.0, 0.8]))
    drho = drho_first_order(state, 0.5)
    dense = drho.to_dense()
    assert np.allclose(dense, dense.conj().T, atol=1e-12)
    assert abs(np.trace(dense)) <= 1e-12


def test_finite_difference_agrees_at_zero_reflectivity():
    state = build_nphoton(NPhotonEntangledState(N=1, coeffs=[0.6, 0.8]))
    first = qfi_at_scenario(state, 0.5).value
    fd = qfi_at_scenario(state, 0.5, DerivativeMode.FINITE_DIFFERENCE)
    assert fd.derivative_mode == DerivativeMode.FINITE_DIFFERENCE
    assert _relative(first, fd.value) <= 1e-5, f"first-order {first} vs finite-difference {fd.value}"


def test_first_order_only_defined_at_zero():
    """The commutator derivative is an eta -> 0 expansion and must refuse eta > 0"""
    state = build_nphoton(NPhotonEntangledState(N=1, coeffs=[0.6, 0.8]))
    with pytest.raises(ConfigurationException):
        qfi_at_scenario(state, 0.5, eta0=1e-3)


def test_loss_scenario_fock_inputs():
    for N in (1, 2):
        state = tensor_product(fock_state(N, N), fock_state(0, N))
        assert qfi_loss_scenario(state).value == pytest.approx(4 * N, rel=1e-6)


def test_loss_scenario_ignores_idler_correlations():
    """Entangled and product inputs with the same signal marginal give the same loss QFI"""
    entangled = build_nphoton(NPhotonEntangledState(N=2, coeffs=[math.sqrt(0.5), 0.0, math.sqrt(0.5)]))
    product = tensor_product(fock_state(1, 2), fock_state(1, 2))
    assert qfi_loss_scenario(entangled).value == pytest.approx(qfi_loss_scenario(product).value, rel=1e-7)


def test_spectral_rejects_mismatched_shapes():
    state = build_nphoton(NPhotonEntangledState(N=1, coeffs=[0.6, 0.8]))
    drho = drho_first_order(state, 0.0)
    with pytest.raises(ConfigurationException):
        qfi_mixed_spectral(MixedState((3,), np.eye(3) / 3), drho)


def test_block_path_matches_dense_finite_difference(monkeypatch):
    """TMSV and N-photon outputs are block diagonal, so the blockwise QFI equals the dense one"""
    states = [
        build_tmsv_for_budget(EnergyBudget(total_mean_photons=0.5)),
        build_nphoton(NPhotonEntangledState(N=2, coeffs=[0.8, 0.36, 0.48])),
    ]
    dense = [qfi_at_scenario(s, 0.5, DerivativeMode.FINITE_DIFFERENCE).value for s in states]
    monkeypatch.setattr(qfi_engine, "get_settings", lambda: Settings(max_dense_dim=10))
    for state, expected in zip(states, dense):
        blocked = qfi_at_scenario(state, 0.5, DerivativeMode.FINITE_DIFFERENCE)
        assert _relative(blocked.value, expected) <= 1e-9


def test_block_finite_difference_agrees_with_first_order():
    state = build_tmsv_for_budget(EnergyBudget(total_mean_photons=0.5))
    scenario = TargetScenario(eta=0.0, n_b=1.0)
    rho0 = present_output_blocks(state, scenario)
    drho = finite_difference_blocks(state, scenario).drho
    first = qfi_at_scenario(state, 1.0).value
    assert _relative(qfi_mixed_spectral(rho0, drho).value, first) <= 1e-5


def test_single_photon_phase_qfi():
    state = tensor_product(fock_state(1, 2), fock_state(0, 2))
    assert qfi_phase_mzi(state).value == pytest.approx(4.0, rel=1e-6)
    assert qfi_pure_reflectivity(state).value == pytest.approx(4.0, rel=1e-6)
