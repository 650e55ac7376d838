"""
Truncated Fock-Space Linear Algebra

Immutable states over a tensor product of truncated bosonic modes, mode
operators, exact number-conserving beam splitters, phase shifts, partial
traces and expectation values. A mode of dimension d holds photon numbers
0..d-1 (cutoff = d - 1).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache, cached_property
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from app.core.config import get_settings
from app.core.exceptions import (
    ConfigurationException,
    NumericalToleranceException,
    TruncationException,
)

logger = logging.getLogger(__name__)

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _tolerance(tail_tolerance: Optional[float]) -> float:
    return get_settings().tail_tolerance if tail_tolerance is None else tail_tolerance


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PureState:
    """Amplitude tensor of shape mode_dims"""
    mode_dims: tuple[int, ...]
    amplitudes: np.ndarray
    tail_mass: float = 0.0
    factors: Optional[tuple["PureState", ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "mode_dims", tuple(int(d) for d in self.mode_dims))
        amps = _frozen(self.amplitudes)
        if amps.shape != self.mode_dims:
            raise ConfigurationException(
                f"amplitude shape {amps.shape} does not match mode dims {self.mode_dims}"
            )
        if not np.all(np.isfinite(amps)):
            raise NumericalToleranceException("non-finite amplitudes")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)

    def norm_squared(self) -> float:
        return float(np.vdot(self.vector, self.vector).real)


@dataclass(frozen=True, eq=False)
class MixedState:
    """Density operator over the tensor-product basis (row-major in mode order)"""
    mode_dims: tuple[int, ...]
    operator: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode_dims", tuple(int(d) for d in self.mode_dims))
        op = np.array(self.operator, dtype=complex)
        dim = int(np.prod(self.mode_dims))
        if op.shape != (dim, dim):
            raise ConfigurationException(f"operator shape {op.shape} does not match dims {self.mode_dims}")
        if not np.all(np.isfinite(op)):
            raise NumericalToleranceException("non-finite density operator")
        scale = max(1.0, float(np.max(np.abs(op)))) if op.size else 1.0
        asym = float(np.max(np.abs(op - op.conj().T))) if op.size else 0.0
        if asym > 1e-12 * scale:
            raise NumericalToleranceException(f"density operator not Hermitian (deviation {asym:.2e})")
        op = 0.5 * (op + op.conj().T)
        op.setflags(write=False)
        object.__setattr__(self, "operator", op)

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.mode_dims))

    def trace(self) -> float:
        return float(np.trace(self.operator).real)

    def tensor(self) -> np.ndarray:
        return self.operator.reshape(self.mode_dims + self.mode_dims)

    def probabilities(self) -> np.ndarray:
        return np.real(np.diagonal(self.operator)).reshape(self.mode_dims)

    def validate(self, tail_tolerance: Optional[float] = None) -> None:
        """Check positivity and trace bounds (eigendecomposition, so not done on construction)"""
        tol = _tolerance(tail_tolerance)
        evals = np.linalg.eigvalsh(self.operator)
        if evals.size and evals[0] < -1e-10:
            raise NumericalToleranceException(f"negative eigenvalue {evals[0]:.3e}")
        tr = self.trace()
        if not (1.0 - tol - self.tail_mass <= tr <= 1.0 + 1e-12):
            raise TruncationException(f"trace {tr!r} outside admissible range", 1.0 - tr, tol)


@dataclass(frozen=True, eq=False)
class ProductState:
    """Tensor product of mixed factors, densified only on demand"""
    factors: tuple[MixedState, ...]

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return tuple(d for f in self.factors for d in f.mode_dims)

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.mode_dims))

    @property
    def tail_mass(self) -> float:
        return float(sum(f.tail_mass for f in self.factors))

    def trace(self) -> float:
        return float(np.prod([f.trace() for f in self.factors]))

    def locate(self, mode: int) -> tuple[int, int]:
        """Map a global mode index onto (factor index, local mode index)"""
        offset = 0
        for idx, f in enumerate(self.factors):
            if mode < offset + f.n_modes:
                return idx, mode - offset
            offset += f.n_modes
        raise ConfigurationException(f"mode {mode} out of range for {self.n_modes} modes")

    @cached_property
    def dense(self) -> MixedState:
        if self.dim > get_settings().max_dense_dim:
            raise ConfigurationException(
                f"refusing to densify a {self.dim}-dimensional product state (max_dense_dim)"
            )
        op = np.ones((1, 1), dtype=complex)
        for f in self.factors:
            op = np.kron(op, f.operator)
        return MixedState(self.mode_dims, op, self.tail_mass)

    def to_mixed(self) -> MixedState:
        return self.dense


DensityState = Union[MixedState, ProductState]
AnyState = Union[PureState, MixedState, ProductState]


@dataclass(frozen=True, eq=False)
class KronSum:
    """Operator sum_i left_i (x) right_i on a bipartite space"""
    terms: tuple[tuple[np.ndarray, np.ndarray], ...]

    @property
    def left_dim(self) -> int:
        return self.terms[0][0].shape[0]

    @property
    def right_dim(self) -> int:
        return self.terms[0][1].shape[0]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.left_dim * self.right_dim,) * 2, dtype=complex)
        for left, right in self.terms:
            out += np.kron(left, right)
        return out

    def trace(self) -> complex:
        return complex(sum(np.trace(l) * np.trace(r) for l, r in self.terms))

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        mat = vec.reshape(self.left_dim, self.right_dim)
        out = sum(left @ mat @ right.T for left, right in self.terms)
        return out.reshape(-1)

    def hermiticity_defect(self, rng: Optional[np.random.Generator] = None) -> float:
        """|<u|D v> - conj(<v|D u>)| on random probes, without densifying"""
        rng = np.random.default_rng(7) if rng is None else rng
        size = self.left_dim * self.right_dim
        u = rng.normal(size=size) + 1j * rng.normal(size=size)
        v = rng.normal(size=size) + 1j * rng.normal(size=size)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        return float(abs(np.vdot(u, self.matvec(v)) - np.conj(np.vdot(v, self.matvec(u)))))


# ---------------------------------------------------------------------------
# Mode operators
# ---------------------------------------------------------------------------

class OperatorKind(str, Enum):
    ANNIHILATE = "annihilate"
    CREATE = "create"
    NUMBER = "number"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class ModeOperator:
    """Single-mode operator; quadrature X_angle = (b e^{-i angle} + b^dag e^{i angle}) / sqrt 2"""
    kind: OperatorKind
    mode_index: int
    angle: float = 0.0

    @property
    def raises(self) -> int:
        return 1 if self.kind in (OperatorKind.CREATE, OperatorKind.QUADRATURE) else 0

    def matrix(self, dim: int) -> np.ndarray:
        lower = annihilation_matrix(dim)
        if self.kind == OperatorKind.ANNIHILATE:
            return lower
        if self.kind == OperatorKind.CREATE:
            return lower.T.copy()
        if self.kind == OperatorKind.NUMBER:
            return np.diag(np.arange(dim, dtype=complex))
        return (lower * np.exp(-1j * self.angle) + lower.T * np.exp(1j * self.angle)) / math.sqrt(2)


def annihilate(mode: int) -> ModeOperator:
    return ModeOperator(OperatorKind.ANNIHILATE, mode)


def create(mode: int) -> ModeOperator:
    return ModeOperator(OperatorKind.CREATE, mode)


def number(mode: int) -> ModeOperator:
    return ModeOperator(OperatorKind.NUMBER, mode)


def quadrature(mode: int, angle: float = 0.0) -> ModeOperator:
    return ModeOperator(OperatorKind.QUADRATURE, mode, angle)


def annihilation_matrix(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


Monomial = tuple[ModeOperator, ...]
Polynomial = list[tuple[complex, Monomial]]
OperatorLike = Union[ModeOperator, Sequence[ModeOperator], Polynomial]


def _as_polynomial(op: OperatorLike) -> Polynomial:
    if isinstance(op, ModeOperator):
        return [(1.0, (op,))]
    op = list(op)
    if op and isinstance(op[0], ModeOperator):
        return [(1.0, tuple(op))]
    return [(complex(c), tuple(m)) for c, m in op]


def apply_mode_matrix(tensor: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    moved = np.tensordot(matrix, tensor, axes=([1], [axis]))
    return np.moveaxis(moved, 0, axis)


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

def _check_tail(tail: float, tol: float, what: str) -> float:
    tail = max(0.0, float(tail))
    if tail > tol:
        raise TruncationException(f"{what}: truncated tail mass {tail:.3e} exceeds tolerance {tol:.1e}", tail, tol)
    return tail


def coherent_cutoff(alpha: complex) -> int:
    return int(math.ceil(4 * abs(alpha) ** 2 + 25))


def squeezed_cutoff(r: float, tail_tolerance: Optional[float] = None) -> int:
    """Cutoff keeping |2k> up to the K with tanh^(2(K+1)) cosh(r) below the tolerance"""
    tol = _tolerance(tail_tolerance)
    t = math.tanh(abs(r))
    if t == 0:
        return 1
    pairs = int(math.ceil(math.log(tol / math.cosh(r)) / (2 * math.log(t))))
    return max(1, 2 * pairs + 1)


def thermal_cutoff(n_mean: float, tail_tolerance: Optional[float] = None) -> int:
    """
    Smallest cutoff whose truncated tail carries less than the tolerance in both
    probability and mean photon number: x^(cutoff+1) (cutoff + 1 + n) <= tol
    with x = n/(1+n).
    """
    tol = _tolerance(tail_tolerance)
    if n_mean <= 0:
        return 1
    ratio = math.log((1 + n_mean) / n_mean)
    cutoff = max(1, int(math.ceil(math.log(1 / tol) / ratio)) - 1)
    while math.exp(-(cutoff + 1) * ratio) * (cutoff + 1 + n_mean) > tol:
        cutoff += 1
    return cutoff


def fock_state(n: int, cutoff: int) -> PureState:
    if not 0 <= n <= cutoff:
        raise ConfigurationException(f"Fock state |{n}> does not fit cutoff {cutoff}")
    amps = np.zeros(cutoff + 1, dtype=complex)
    amps[n] = 1.0
    return PureState((cutoff + 1,), amps)


def coherent_state(alpha: complex, cutoff: int, tail_tolerance: Optional[float] = None) -> PureState:
    """c_n = e^{-|alpha|^2/2} alpha^n / sqrt(n!), not renormalized"""
    tol = _tolerance(tail_tolerance)
    if abs(alpha) ** 2 > cutoff / 4:
        logger.warning(f"coherent |alpha|^2={abs(alpha) ** 2:.3g} above cutoff/4 for cutoff {cutoff}")
    n = np.arange(cutoff + 1)
    if alpha == 0:
        amps = (n == 0).astype(complex)
    else:
        log_mag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
        amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    tail = _check_tail(1.0 - float(np.sum(np.abs(amps) ** 2)), tol, "coherent state")
    return PureState((cutoff + 1,), amps, tail)


def squeezed_vacuum(r: float, phase: float, cutoff: int, tail_tolerance: Optional[float] = None) -> PureState:
    """S(r e^{i phase})|0>; quadrature variance is e^{2r}/2 along angle (phase + pi)/2"""
    tol = _tolerance(tail_tolerance)
    amps = np.zeros(cutoff + 1, dtype=complex)
    k = np.arange(cutoff // 2 + 1)
    if r == 0:
        amps[0] = 1.0
    else:
        t = math.tanh(abs(r))
        log_mag = k * math.log(t) + 0.5 * gammaln(2 * k + 1) - k * math.log(2) - gammaln(k + 1)
        sign = -np.exp(1j * phase) * np.sign(r)
        amps[2 * k] = sign ** k * np.exp(log_mag) / math.sqrt(math.cosh(r))
    tail = _check_tail(1.0 - float(np.sum(np.abs(amps) ** 2)), tol, "squeezed vacuum")
    return PureState((cutoff + 1,), amps, tail)


def thermal_state(n_mean: float, cutoff: int, tail_tolerance: Optional[float] = None) -> MixedState:
    """Diagonal p_n = n^n / (1+n)^(n+1), truncated at cutoff and not renormalized"""
    tol = _tolerance(tail_tolerance)
    if n_mean < 0:
        raise ConfigurationException("thermal mean photon number must be nonnegative")
    n = np.arange(cutoff + 1)
    if n_mean == 0:
        probs = (n == 0).astype(float)
        tail = 0.0
    else:
        x = n_mean / (1 + n_mean)
        probs = (1 - x) * x ** n
        tail = x ** (cutoff + 1)
    tail = _check_tail(tail, tol, f"thermal state n_mean={n_mean}")
    return MixedState((cutoff + 1,), np.diag(probs), tail)


def tmsv_state(r: float, cutoff: int, tail_tolerance: Optional[float] = None) -> PureState:
    """sum_n tanh^n(r)/cosh(r) |n, n>"""
    tol = _tolerance(tail_tolerance)
    t = math.tanh(r)
    tail = _check_tail(t ** (2 * (cutoff + 1)), tol, f"TMSV r={r}")
    amps = np.diag(t ** np.arange(cutoff + 1) / math.cosh(r)).astype(complex)
    return PureState((cutoff + 1, cutoff + 1), amps, tail)


def tensor_product(*states: AnyState) -> AnyState:
    """Kronecker product; pure inputs stay pure and remember their factors"""
    if not states:
        raise ConfigurationException("tensor_product needs at least one state")
    if all(isinstance(s, PureState) for s in states):
        amps = states[0].amplitudes
        factors: list[PureState] = []
        for s in states:
            factors.extend(s.factors or (s,))
        for s in states[1:]:
            amps = np.multiply.outer(amps, s.amplitudes)
        dims = tuple(d for s in states for d in s.mode_dims)
        return PureState(dims, amps, sum(s.tail_mass for s in states), tuple(factors))
    mixed: list[MixedState] = []
    for s in states:
        if isinstance(s, ProductState):
            mixed.extend(s.factors)
        elif isinstance(s, PureState):
            mixed.extend(to_density(f) for f in (s.factors or (s,)))
        else:
            mixed.append(s)
    return ProductState(tuple(mixed))


def to_density(state: AnyState) -> DensityState:
    if isinstance(state, PureState):
        v = state.vector
        return MixedState(state.mode_dims, np.outer(v, v.conj()), state.tail_mass)
    return state


def as_dense(state: AnyState) -> MixedState:
    state = to_density(state)
    return state.to_mixed() if isinstance(state, ProductState) else state


def pad_modes(state: AnyState, extra: Union[int, Sequence[int]]) -> AnyState:
    """Embed into larger cutoffs with zero amplitude on the new levels"""
    extra = [extra] * state.n_modes if isinstance(extra, int) else list(extra)
    if len(extra) != state.n_modes or any(e < 0 for e in extra):
        raise ConfigurationException("pad_modes needs one nonnegative extent per mode")
    new_dims = tuple(d + e for d, e in zip(state.mode_dims, extra))
    if isinstance(state, PureState):
        amps = np.zeros(new_dims, dtype=complex)
        amps[tuple(slice(0, d) for d in state.mode_dims)] = state.amplitudes
        factors = None
        if state.factors is not None and len(state.factors) == state.n_modes:
            factors = tuple(pad_modes(f, [e]) for f, e in zip(state.factors, extra))
        return PureState(new_dims, amps, state.tail_mass, factors)
    if isinstance(state, ProductState):
        out, offset = [], 0
        for f in state.factors:
            out.append(pad_modes(f, extra[offset:offset + f.n_modes]))
            offset += f.n_modes
        return ProductState(tuple(out))
    op = np.zeros(new_dims + new_dims, dtype=complex)
    window = tuple(slice(0, d) for d in state.mode_dims)
    op[window + window] = state.tensor()
    size = int(np.prod(new_dims))
    return MixedState(new_dims, op.reshape(size, size), state.tail_mass)


# ---------------------------------------------------------------------------
# Unitaries
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8192)
def beam_splitter_block(total: int, theta: float, varphi: float) -> np.ndarray:
    """exp[(theta/2)(a^dag b e^{i varphi} - a b^dag e^{-i varphi})] on the total-photon block.

    Basis index k means |k, total-k>.
    """
    k = np.arange(total)
    amp = np.sqrt((k + 1) * (total - k))
    gen = np.zeros((total + 1, total + 1), dtype=complex)
    gen[k + 1, k] = 0.5 * theta * np.exp(1j * varphi) * amp
    gen[k, k + 1] = -0.5 * theta * np.exp(-1j * varphi) * amp
    block = expm(gen)
    block.setflags(write=False)
    return block


def beam_splitter_tensor(
    tensor: np.ndarray, axis_i: int, axis_j: int, theta: float, varphi: float, conjugate: bool = False
) -> np.ndarray:
    moved = np.moveaxis(tensor, (axis_i, axis_j), (0, 1))
    d_i, d_j = moved.shape[:2]
    flat = moved.reshape(d_i, d_j, -1)
    out = np.zeros_like(flat)
    for total in range(d_i + d_j - 1):
        ks = np.arange(max(0, total - d_j + 1), min(total, d_i - 1) + 1)
        src = flat[ks, total - ks, :]
        if not src.any():
            continue
        block = beam_splitter_block(total, float(theta), float(varphi))
        sub = block[np.ix_(ks, ks)]
        out[ks, total - ks, :] = (sub.conj() if conjugate else sub) @ src
    return np.moveaxis(out.reshape(moved.shape), (0, 1), (axis_i, axis_j))


def _check_pair(state: AnyState, modes: tuple[int, int]) -> tuple[int, int]:
    i, j = modes
    if i == j:
        raise ConfigurationException("beam splitter needs two distinct modes")
    if not (0 <= i < state.n_modes and 0 <= j < state.n_modes):
        raise ConfigurationException(f"modes {modes} out of range for {state.n_modes}-mode state")
    return i, j


def beam_splitter(state: AnyState, modes: tuple[int, int], theta: float, varphi: float) -> AnyState:
    """Apply B(theta, varphi) exactly per total-photon-number block of modes (i, j).

    Amplitude pushed beyond the cutoffs is dropped and added to tail_mass.
    """
    i, j = _check_pair(state, modes)
    if theta == 0:
        return state
    if isinstance(state, PureState):
        amps = beam_splitter_tensor(state.amplitudes, i, j, theta, varphi)
        after = float(np.sum(np.abs(amps) ** 2))
        leak = max(0.0, state.norm_squared() - after)
        return PureState(state.mode_dims, amps, state.tail_mass + leak)
    if isinstance(state, ProductState):
        fi, li = state.locate(i)
        fj, lj = state.locate(j)
        if fi == fj:
            factors = list(state.factors)
            factors[fi] = beam_splitter(factors[fi], (li, lj), theta, varphi)
            return ProductState(tuple(factors))
        state = state.to_mixed()
    n = state.n_modes
    t = beam_splitter_tensor(state.tensor(), i, j, theta, varphi)
    t = beam_splitter_tensor(t, n + i, n + j, theta, varphi, conjugate=True)
    op = t.reshape(state.dim, state.dim)
    leak = max(0.0, state.trace() - float(np.trace(op).real))
    return MixedState(state.mode_dims, op, state.tail_mass + leak)


def phase_shift(state: AnyState, mode: int, phi: float) -> AnyState:
    """Apply e^{i phi n} on one mode"""
    if not 0 <= mode < state.n_modes:
        raise ConfigurationException(f"mode {mode} out of range")
    dim = state.mode_dims[mode]
    diag = np.diag(np.exp(1j * phi * np.arange(dim)))
    if isinstance(state, PureState):
        return PureState(state.mode_dims, apply_mode_matrix(state.amplitudes, diag, mode), state.tail_mass)
    if isinstance(state, ProductState):
        f, local = state.locate(mode)
        factors = list(state.factors)
        factors[f] = phase_shift(factors[f], local, phi)
        return ProductState(tuple(factors))
    t = apply_mode_matrix(state.tensor(), diag, mode)
    t = apply_mode_matrix(t, diag.conj(), state.n_modes + mode)
    return MixedState(state.mode_dims, t.reshape(state.dim, state.dim), state.tail_mass)


# ---------------------------------------------------------------------------
# Reductions and expectations
# ---------------------------------------------------------------------------

def partial_trace(state: AnyState, keep: Sequence[int]) -> DensityState:
    """Reduce onto the kept modes (returned in ascending mode order)"""
    keep = sorted(set(keep))
    if not keep or any(not 0 <= k < state.n_modes for k in keep):
        raise ConfigurationException(f"invalid keep set {keep} for {state.n_modes} modes")
    kept_dims = tuple(state.mode_dims[k] for k in keep)
    size = int(np.prod(kept_dims))
    if isinstance(state, PureState):
        rest = [ax for ax in range(state.n_modes) if ax not in keep]
        mat = np.transpose(state.amplitudes, keep + rest).reshape(size, -1)
        return MixedState(kept_dims, mat @ mat.conj().T, state.tail_mass)
    if isinstance(state, ProductState):
        reduced, offset = [], 0
        for f in state.factors:
            local = [k - offset for k in keep if offset <= k < offset + f.n_modes]
            if local:
                reduced.append(f if len(local) == f.n_modes else partial_trace(f, local))
            offset += f.n_modes
        return reduced[0] if len(reduced) == 1 else ProductState(tuple(reduced))
    n = state.n_modes
    ket = list(_LETTERS[:n])
    bra = [ket[m] if m not in keep else _LETTERS[n + m] for m in range(n)]
    out = "".join(ket[k] for k in keep) + "".join(bra[k] for k in keep)
    reduced = np.einsum("".join(ket) + "".join(bra) + "->" + out, state.tensor())
    return MixedState(kept_dims, reduced.reshape(size, size), state.tail_mass)


def mode_populations(state: AnyState, mode: int) -> np.ndarray:
    """Photon-number distribution of one mode"""
    if isinstance(state, PureState):
        probs = np.abs(state.amplitudes) ** 2
        axes = tuple(ax for ax in range(state.n_modes) if ax != mode)
        return probs.sum(axis=axes)
    if isinstance(state, ProductState):
        f, local = state.locate(mode)
        return mode_populations(state.factors[f], local)
    probs = state.probabilities()
    axes = tuple(ax for ax in range(state.n_modes) if ax != mode)
    return probs.sum(axis=axes)


def total_photon_probability(state: AnyState, total: int, modes: Optional[Sequence[int]] = None) -> float:
    """Expectation of the projector onto total photon number `total` across `modes`"""
    modes = list(range(state.n_modes)) if modes is None else list(modes)
    probs = np.abs(state.amplitudes) ** 2 if isinstance(state, PureState) else as_dense(state).probabilities()
    grids = np.indices(state.mode_dims)
    counts = sum(grids[m] for m in modes)
    return float(probs[counts == total].sum())


def _check_ladder_leakage(state: AnyState, monomial: Monomial, tol: float) -> None:
    raises: dict[int, int] = {}
    for op in monomial:
        raises[op.mode_index] = raises.get(op.mode_index, 0) + op.raises
    for mode, r in raises.items():
        if r == 0:
            continue
        pops = mode_populations(state, mode)
        edge = float(pops[max(0, len(pops) - r):].sum())
        if edge > tol:
            raise TruncationException(
                f"operator ladder on mode {mode} reaches the cutoff (edge population {edge:.2e})", edge, tol
            )


def _monomial_pure(state: PureState, monomial: Monomial) -> complex:
    v = state.amplitudes
    for op in reversed(monomial):
        v = apply_mode_matrix(v, op.matrix(state.mode_dims[op.mode_index]), op.mode_index)
    return complex(np.vdot(state.amplitudes.reshape(-1), v.reshape(-1)))


def _monomial_mixed(state: MixedState, monomial: Monomial) -> complex:
    t = state.tensor()
    for op in reversed(monomial):
        t = apply_mode_matrix(t, op.matrix(state.mode_dims[op.mode_index]), op.mode_index)
    return complex(np.trace(t.reshape(state.dim, state.dim)))


def _monomial_product(state: ProductState, monomial: Monomial) -> complex:
    grouped: dict[int, list[ModeOperator]] = {}
    for op in monomial:
        f, local = state.locate(op.mode_index)
        grouped.setdefault(f, []).append(ModeOperator(op.kind, local, op.angle))
    value = complex(np.prod([f.trace() for i, f in enumerate(state.factors) if i not in grouped]))
    for f, ops in grouped.items():
        value *= _monomial_mixed(state.factors[f], tuple(ops))
    return value


def expectation(state: AnyState, operator: OperatorLike, tail_tolerance: Optional[float] = None) -> complex:
    """<O> for a polynomial of mode operators (monomials act right to left as written)"""
    tol = _tolerance(tail_tolerance)
    total = 0j
    for coeff, monomial in _as_polynomial(operator):
        if any(not 0 <= op.mode_index < state.n_modes for op in monomial):
            raise ConfigurationException("operator mode index out of range")
        _check_ladder_leakage(state, monomial, tol)
        if isinstance(state, PureState):
            total += coeff * _monomial_pure(state, monomial)
        elif isinstance(state, ProductState):
            total += coeff * _monomial_product(state, monomial)
        else:
            total += coeff * _monomial_mixed(state, monomial)
    return total


def trace_distance(rho: AnyState, sigma: AnyState) -> float:
    a, b = as_dense(rho), as_dense(sigma)
    if a.mode_dims != b.mode_dims:
        raise ConfigurationException("trace distance needs matching mode dims")
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(a.operator - b.operator))))


def fidelity(psi: PureState, phi: PureState) -> float:
    if psi.mode_dims != phi.mode_dims:
        raise ConfigurationException("fidelity needs matching mode dims")
    return float(abs(np.vdot(psi.vector, phi.vector)) ** 2)
