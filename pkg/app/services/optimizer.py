"""
N-Photon Coefficient Optimizer

Maximizes either the closed-form N-photon QFI or the receiver SNR over
normalized nonnegative coefficient vectors. The unit sphere is parametrized
by hyperspherical angles, so the search is unconstrained; Nelder-Mead runs
from deterministic seeded starts and the best restart wins.

Each closed-form restart is polished with bounded L-BFGS-B on the photon
probabilities, which lands exactly on the boundary when an amplitude is
optimally zero. Receiver restarts search the closed-form receiver moments
and only the winner is re-evaluated through the full channel.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from app.core.config import get_settings
from app.core.exceptions import ConfigurationException, SensitivityUndefinedException
from app.schemas.results import IndexOrdering, Objective, OptimizationProblem, Optimum, TrendRow
from app.schemas.scenario import ReceiverConfig, TargetScenario
from app.services.measurement import receiver_stats_closed_form, sensitivity_and_snr
from app.services.qfi_engine import nphoton_qfi_value, resolve_index_convention
from app.services.state_library import build_nphoton, nphoton_from_coeffs, signal_idler_means
from app.services.sweep_runner import SweepRunner

logger = logging.getLogger(__name__)

COEFF_FLOOR = 1e-6


def hyperspherical_coeffs(angles: Sequence[float]) -> np.ndarray:
    """|u| for u_k = cos(t_k) prod_{j<k} sin(t_j), the last entry being the full sine product"""
    angles = np.asarray(angles, dtype=float)
    u = np.ones(len(angles) + 1)
    for k, t in enumerate(angles):
        u[k] *= math.cos(t)
        u[k + 1:] *= math.sin(t)
    return np.abs(u)


@dataclass
class RestartResult:
    index: int
    coeffs: np.ndarray
    value: float
    success: bool


def _qfi_objective(problem: OptimizationProblem) -> Callable[[np.ndarray], float]:
    def evaluate(coeffs: np.ndarray) -> float:
        return nphoton_qfi_value(coeffs, problem.n_b)
    return evaluate


def _snr_objective(problem: OptimizationProblem, closed_form: bool) -> Callable[[np.ndarray], float]:
    scenario = TargetScenario(eta=problem.eta, n_b=problem.n_b)
    config = ReceiverConfig(varphi_combiner=problem.varphi_combiner)

    def evaluate(coeffs: np.ndarray) -> float:
        state = build_nphoton(nphoton_from_coeffs(coeffs))
        try:
            if closed_form:
                return receiver_stats_closed_form(state, scenario, config).snr
            return sensitivity_and_snr(state, scenario, config).snr
        except SensitivityUndefinedException:
            return 0.0
    return evaluate


def objective_function(problem: OptimizationProblem, screening: bool = False) -> Callable[[np.ndarray], float]:
    """Objective of a coefficient vector (to be maximized); screening uses the closed-form receiver"""
    if problem.objective == Objective.QFI_EQ5:
        return _qfi_objective(problem)
    if problem.objective == Objective.RECEIVER_SNR:
        return _snr_objective(problem, closed_form=screening)
    raise ConfigurationException(f"unknown objective {problem.objective}")


def _local_search(
    objective: Callable[[np.ndarray], float], start: np.ndarray, tol: float, maxiter: int
) -> tuple[np.ndarray, float, bool]:
    result = minimize(
        lambda angles: -objective(hyperspherical_coeffs(angles)),
        start,
        method="Nelder-Mead",
        options=dict(xatol=tol, fatol=tol * 1e-2, maxiter=maxiter, maxfev=maxiter * 2, adaptive=True),
    )
    return hyperspherical_coeffs(result.x), -float(result.fun), bool(result.success)


def _qfi_terms(probs: np.ndarray, n_b: float) -> tuple[float, np.ndarray]:
    """
    sum_k (k+1) p_k q_k / (p_k + q_k x) and its gradient, with p_k = A_k^2,
    q_k = A_{k+1}^2 and x = n_b/(1+n_b). The sum is degree-1 homogeneous.
    """
    x = n_b / (1 + n_b)
    value = 0.0
    grad = np.zeros_like(probs)
    for k in range(len(probs) - 1):
        p, q = probs[k], probs[k + 1]
        denom = p + q * x
        if denom <= 0:
            if x == 0:
                value += (k + 1) * q
                grad[k + 1] += k + 1
            continue
        value += (k + 1) * p * q / denom
        grad[k] += (k + 1) * q * q * x / denom ** 2
        grad[k + 1] += (k + 1) * p * p / denom ** 2
    return value, grad


def polish_qfi(coeffs: np.ndarray, n_b: float, ordering: Optional[IndexOrdering] = None) -> np.ndarray:
    """
    Bounded L-BFGS-B on the probabilities p = coeffs^2, maximizing the closed-form
    sum over sum(p). Amplitudes below COEFF_FLOOR of the largest are set to zero.
    """
    ordering = resolve_index_convention() if ordering is None else ordering
    amps = np.asarray(coeffs, dtype=float)
    if ordering == IndexOrdering.SIGNAL:
        amps = amps[::-1]

    def negative(probs: np.ndarray) -> tuple[float, np.ndarray]:
        total = float(np.sum(probs))
        if total <= 0:
            return 0.0, -np.ones_like(probs)
        value, grad = _qfi_terms(probs, n_b)
        return -value / total, -(grad * total - value) / total ** 2

    result = minimize(
        negative,
        amps ** 2,
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, 1.0)] * len(amps),
        options=dict(ftol=1e-15, gtol=1e-12, maxiter=5000),
    )
    polished = np.sqrt(np.clip(result.x, 0.0, None))
    polished[polished < COEFF_FLOOR * polished.max()] = 0.0
    polished /= np.linalg.norm(polished)
    return polished[::-1] if ordering == IndexOrdering.SIGNAL else polished


def optimize(problem: OptimizationProblem, jobs: Optional[int] = None) -> Optimum:
    """
    Multi-start maximization over the unit sphere of nonnegative coefficients

    Args:
        problem: Photon number, background, objective, restarts and seed
        jobs: Concurrent restarts (defaults to the configured job count)

    Returns:
        Optimum whose objective_value is the re-evaluated objective at coeffs
    """
    jobs = get_settings().jobs if jobs is None else jobs
    receiver = problem.objective == Objective.RECEIVER_SNR
    objective = objective_function(problem, screening=receiver)
    maxiter = 2000 if receiver else 20000
    tol = max(problem.tol, 1e-8) if receiver else problem.tol

    def restart(index: int) -> RestartResult:
        rng = np.random.default_rng([problem.seed, index])
        start = rng.uniform(0.0, math.pi / 2, size=problem.N)
        coeffs, value, success = _local_search(objective, start, tol, maxiter)
        if not receiver:
            polished = polish_qfi(coeffs, problem.n_b)
            polished_value = objective(polished)
            if polished_value >= value - 1e-12 * abs(value):
                coeffs, value = polished, polished_value
        return RestartResult(index, coeffs, value, success)

    runner = SweepRunner(max_concurrent=jobs, label=f"optimize N={problem.N} n_b={problem.n_b}")
    results = runner.run(restart, range(problem.restarts))

    best = results[0]
    for r in results[1:]:
        if r.value > best.value:
            best = r
    values = [r.value for r in results]
    spread = max(values) - min(values)

    coeffs = best.coeffs / np.linalg.norm(best.coeffs)
    if receiver:
        value = float(objective_function(problem)(coeffs))
        if abs(value - best.value) > 1e-6 * abs(value):
            logger.warning(
                f"receiver SNR {value:.8g} through the channel differs from the closed form {best.value:.8g}"
            )
    else:
        value = float(objective(coeffs))
    converged = best.success and spread <= 1e-4 * abs(value)
    if not converged:
        logger.warning(
            f"optimizer N={problem.N} n_b={problem.n_b} {problem.objective.value}: "
            f"restart spread {spread:.3e} (best {value:.8g}), success={best.success}"
        )
    else:
        logger.info(f"optimizer N={problem.N} n_b={problem.n_b}: {value:.10g}")
    return Optimum(
        coeffs=[float(c) for c in coeffs],
        objective_value=value,
        converged=converged,
        restart_spread=spread,
        restarts=problem.restarts,
    )


def noise_trend_report(
    N: int,
    n_b_grid: Sequence[float],
    objective: Objective = Objective.QFI_EQ5,
    seed: int = 0,
    restarts: Optional[int] = None,
    jobs: Optional[int] = None,
    eta: float = 1e-3,
) -> list[TrendRow]:
    """Optimum per background level with the signal and idler photon shares"""
    restarts = get_settings().optimizer_restarts if restarts is None else restarts
    jobs = get_settings().jobs if jobs is None else jobs

    def point(n_b: float) -> TrendRow:
        problem = OptimizationProblem(N=N, n_b=n_b, objective=objective, restarts=restarts, seed=seed, eta=eta)
        best = optimize(problem, jobs=1)
        signal, idler = signal_idler_means(best.coeffs)
        return TrendRow(
            n_b=n_b, coeffs=best.coeffs, objective_value=best.objective_value, signal_mean=signal, idler_mean=idler
        )

    return SweepRunner(max_concurrent=jobs, label=f"trend N={N}").run(point, sorted(n_b_grid))
