"""Finite-dimensional pure states, projectors and density matrices.

The single-photon space is four dimensional with the fixed basis order

    0: horizontal in path r     1: vertical in path r
    2: horizontal in path s     3: vertical in path s

States compare equal up to a global phase (``|<a|b>|^2 == 1``); no phase
convention is imposed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

NORM_TOL = 1e-9
MATRIX_TOL = 1e-12
EIG_TOL = 1e-10
PROB_EPS = 1e-12
MAX_DIM = 4096
PSD_CHECK_MAX_DIM = 256

# basis indices
R_H, R_V, S_H, S_V = range(4)


class QStateError(ValueError):
    """Invalid construction or incompatible operands."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.setflags(write=False)
    return a


def _check_same_dim(a: int, b: int) -> None:
    if a != b:
        raise QStateError(f"dimension mismatch: {a} != {b}")


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state. Build with :func:`make_state`."""

    amps: np.ndarray

    @property
    def dim(self) -> int:
        return self.amps.shape[0]

    def __len__(self) -> int:
        return self.dim

    def __repr__(self) -> str:
        body = ", ".join(f"{z.real:+.4f}{z.imag:+.4f}j" for z in self.amps[:8])
        more = ", ..." if self.dim > 8 else ""
        return f"StateVector([{body}{more}])"

    def equiv(self, other: "StateVector", tol: float = NORM_TOL) -> bool:
        """Equality up to global phase."""
        return self.dim == other.dim and abs(abs(inner(self, other)) ** 2 - 1.0) <= tol

    def with_phase(self, phase: complex) -> "StateVector":
        if abs(abs(phase) - 1.0) > NORM_TOL:
            raise QStateError("phase must have unit modulus")
        return StateVector(_frozen(self.amps * phase))

    def outer(self) -> np.ndarray:
        return np.outer(self.amps, self.amps.conj())


def make_state(amps: Iterable[complex]) -> StateVector:
    """Return the normalized state with the given (unnormalized) amplitudes."""
    a = np.asarray(list(amps) if not isinstance(amps, np.ndarray) else amps, dtype=np.complex128)
    if a.ndim != 1 or a.size == 0:
        raise QStateError("amplitudes must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(a)):
        raise QStateError("amplitudes must be finite")
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise QStateError("cannot normalize the zero vector")
    return StateVector(_frozen(a / norm))


def basis_state(index: int, dim: int = 4) -> StateVector:
    a = np.zeros(dim, dtype=np.complex128)
    a[index] = 1.0
    return StateVector(_frozen(a))


def inner(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    _check_same_dim(a.dim, b.dim)
    return complex(np.vdot(a.amps, b.amps))


@dataclass(frozen=True, eq=False)
class Projector:
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise QStateError("projector must be square")
        if not np.allclose(m, m.conj().T, rtol=0, atol=MATRIX_TOL):
            raise QStateError("projector must be Hermitian")
        if not np.allclose(m @ m, m, rtol=0, atol=MATRIX_TOL):
            raise QStateError("projector must be idempotent")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def complement(self) -> "Projector":
        return Projector(_frozen(np.eye(self.dim) - self.matrix))


def projector_onto(state: StateVector) -> Projector:
    return Projector(_frozen(state.outer()))


@lru_cache(maxsize=None)
def projector_pa() -> Projector:
    """Analyzer at 0 degrees on path s: projects onto horizontal in s."""
    return projector_onto(basis_state(S_H))


@lru_cache(maxsize=None)
def projector_pc() -> Projector:
    """Analyzer at 45 degrees on path s: projects onto (|H>_s + |V>_s)/sqrt2."""
    return projector_onto(make_state([0, 0, 1, 1]))


def _clamp_prob(p: float) -> float:
    if p < PROB_EPS:
        return 0.0
    if p > 1.0 - PROB_EPS:
        return 1.0
    return p


def born_probability(p: Projector, psi: StateVector) -> float:
    _check_same_dim(p.dim, psi.dim)
    return _clamp_prob(float(np.vdot(psi.amps, p.matrix @ psi.amps).real))


class Result(enum.Enum):
    POSITIVE = "positive"
    NULL = "null"


@dataclass(frozen=True)
class MeasurementOutcome:
    result: Result
    post_state: StateVector

    @property
    def positive(self) -> bool:
        return self.result is Result.POSITIVE


def measure(p: Projector, psi: StateVector, rng: np.random.Generator) -> MeasurementOutcome:
    """Sample {P, 1-P} on ``psi``; branches below 1e-12 are never taken."""
    _check_same_dim(p.dim, psi.dim)
    positive, _, post = _kernels.measure_rows(
        psi.amps[None, :], np.zeros(1, dtype=np.intp), p.matrix[None, :, :], np.array([rng.random()])
    )
    result = Result.POSITIVE if positive[0] else Result.NULL
    return MeasurementOutcome(result, StateVector(_frozen(post[0])))


@dataclass(frozen=True)
class TestOutcome:
    passed: bool
    post_state: StateVector

    __test__ = False  # not a pytest class


def expected_state_test(expected: StateVector, psi: StateVector, rng: np.random.Generator) -> TestOutcome:
    """Binary test of whether ``psi`` is ``expected``.

    Passes with probability ``|<expected|psi>|^2``.
    """
    _check_same_dim(expected.dim, psi.dim)
    passed, _, post = _kernels.test_rows(expected.amps[None, :], psi.amps[None, :], np.array([rng.random()]))
    return TestOutcome(bool(passed[0]), StateVector(_frozen(post[0])))


def pass_probability(expected: StateVector, psi: StateVector) -> float:
    return _clamp_prob(abs(inner(expected, psi)) ** 2)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise QStateError("density matrix must be square")
        if not np.all(np.isfinite(m)):
            raise QStateError("density matrix entries must be finite")
        if not np.allclose(m, m.conj().T, rtol=0, atol=MATRIX_TOL):
            raise QStateError("density matrix must be Hermitian")
        if abs(np.trace(m) - 1.0) > MATRIX_TOL:
            raise QStateError(f"density matrix trace is {np.trace(m).real!r}, not 1")
        # above this size callers build matrices that are positive by construction
        if self.dim <= PSD_CHECK_MAX_DIM and not self.is_positive():
            raise QStateError("density matrix has a negative eigenvalue")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return _herm_eigvals(self.matrix)

    def is_positive(self) -> bool:
        return bool(self.eigenvalues().min() >= -EIG_TOL)

    def allclose(self, other: "DensityMatrix", atol: float = MATRIX_TOL) -> bool:
        return self.dim == other.dim and bool(np.allclose(self.matrix, other.matrix, rtol=0, atol=atol))


def density_matrix(matrix: np.ndarray) -> DensityMatrix:
    return DensityMatrix(_frozen(matrix))


def pure_density(state: StateVector) -> DensityMatrix:
    return DensityMatrix(_frozen(state.outer()))


def mix(states: Sequence[tuple[StateVector, float]]) -> DensityMatrix:
    """Weighted mixture ``sum_i w_i |psi_i><psi_i|``."""
    if not states:
        raise QStateError("mixture needs at least one state")
    weights = np.array([w for _, w in states], dtype=float)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise QStateError("weights must be finite and non-negative")
    if abs(weights.sum() - 1.0) > MATRIX_TOL:
        raise QStateError(f"weights sum to {weights.sum()!r}, not 1")
    dim = states[0][0].dim
    for s, _ in states:
        _check_same_dim(dim, s.dim)
    vecs = np.stack([s.amps for s, _ in states], axis=1)
    m = (vecs * weights) @ vecs.conj().T
    return DensityMatrix(_frozen(m))


def _herm_eigvals(m: np.ndarray) -> np.ndarray:
    # real symmetric input takes the cheaper solver
    if not np.any(m.imag):
        return np.linalg.eigvalsh(np.ascontiguousarray(m.real))
    return np.linalg.eigvalsh(m)


def trace_distance_matrix(diff: np.ndarray) -> float:
    """Half the trace norm of a Hermitian matrix."""
    return float(0.5 * np.abs(_herm_eigvals(diff)).sum())


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    _check_same_dim(rho.dim, sigma.dim)
    return min(1.0, max(0.0, trace_distance_matrix(rho.matrix - sigma.matrix)))


def helstrom_success(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Optimal probability of telling two equiprobable states apart."""
    return 0.5 * (1.0 + trace_distance(rho, sigma))


def _check_power_of_four(d: int) -> None:
    if d < 1 or (d & (d - 1)) or (d.bit_length() - 1) % 2:
        raise QStateError(f"dimension {d} is not a power of 4")


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product, first factor major."""
    _check_power_of_four(a.dim)
    _check_power_of_four(b.dim)
    if a.dim * b.dim > MAX_DIM:
        raise QStateError(f"tensor dimension {a.dim * b.dim} exceeds {MAX_DIM}")
    return StateVector(_frozen(np.kron(a.amps, b.amps)))


def tensor_density(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    _check_power_of_four(a.dim)
    _check_power_of_four(b.dim)
    if a.dim * b.dim > MAX_DIM:
        raise QStateError(f"tensor dimension {a.dim * b.dim} exceeds {MAX_DIM}")
    return DensityMatrix(_frozen(np.kron(a.matrix, b.matrix)))


def tensor_power(state: StateVector, k: int) -> StateVector:
    if k < 1:
        raise QStateError("tensor power needs k >= 1")
    out = state
    for _ in range(k - 1):
        out = tensor(out, state)
    return out

