"""Dense linear algebra for states of up to three time-bin qubits.

Basis convention: |t1> is index 0, |t2> is index 1, and multi-qubit kets are
Kronecker products with qubit A as the most significant index (order A, B, C).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

MAX_QUBITS = 3
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
NORM_TOL = 1e-12


class StateError(ValueError):
    """Raised when an array violates a state invariant."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def _n_qubits_for(dim: int) -> int:
    n = int(round(np.log2(dim))) if dim > 0 else -1
    if n < 1 or 2**n != dim:
        raise StateError(f"dimension {dim} is not a power of two >= 2")
    if n > MAX_QUBITS:
        raise StateError(f"{n} qubits requested; at most {MAX_QUBITS} are supported")
    return n


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state of 1-3 qubits. Amplitudes are stored read-only."""

    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        amps = _frozen(np.ravel(self.amplitudes))
        object.__setattr__(self, "amplitudes", amps)
        if amps.size != 2**self.n_qubits or _n_qubits_for(amps.size) != self.n_qubits:
            raise StateError(
                f"{amps.size} amplitudes do not match n_qubits={self.n_qubits}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise StateError(f"state is not normalized (norm^2 = {norm!r})")

    @classmethod
    def from_amplitudes(cls, amplitudes: Iterable[complex]) -> "StateVector":
        """Build a state from raw amplitudes, normalizing them."""
        amps = np.asarray(list(np.ravel(amplitudes)), dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise StateError("cannot normalize the zero vector")
        return cls(amps / norm, _n_qubits_for(amps.size))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.projector(), self.n_qubits)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix on 1-3 qubits.

    Construction validates the invariants and never repairs violations.
    """

    entries: np.ndarray
    n_qubits: int

    def __post_init__(self):
        m = _frozen(self.entries)
        object.__setattr__(self, "entries", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateError(f"density matrix must be square, got shape {m.shape}")
        if _n_qubits_for(m.shape[0]) != self.n_qubits:
            raise StateError(f"shape {m.shape} does not match n_qubits={self.n_qubits}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise StateError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateError(f"density matrix trace is {tr!r}, expected 1")
        lam_min = np.linalg.eigvalsh(m)[0]
        if lam_min < -PSD_TOL:
            raise StateError(f"density matrix has negative eigenvalue {lam_min:.3e}")

    @classmethod
    def from_array(cls, entries) -> "DensityMatrix":
        m = np.asarray(entries, dtype=complex)
        return cls(m, _n_qubits_for(m.shape[0]))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(np.eye(d) / d, n_qubits)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


Operand = Union[StateVector, DensityMatrix]
MatrixLike = Union[DensityMatrix, np.ndarray]


def as_matrix(m: MatrixLike) -> np.ndarray:
    if isinstance(m, DensityMatrix):
        return m.entries
    if isinstance(m, StateVector):
        return m.projector()
    return np.asarray(m, dtype=complex)


@dataclass(frozen=True, eq=False)
class PauliOperator:
    label: str
    matrix: np.ndarray


I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
for _m in (I2, X, Y, Z):
    _m.flags.writeable = False

PAULIS = {
    label: PauliOperator(label, m) for label, m in zip("IXYZ", (I2, X, Y, Z))
}


def pauli_string(labels: str) -> np.ndarray:
    """Kronecker product of Paulis, e.g. ``pauli_string("XYY")``."""
    return reduce(np.kron, (PAULIS[c].matrix for c in labels))


_S = 1 / np.sqrt(2)
SINGLE_QUBIT_KETS = {
    "T1": np.array([1, 0], dtype=complex),
    "T2": np.array([0, 1], dtype=complex),
    "PLUS": np.array([_S, _S], dtype=complex),
    "MINUS": np.array([_S, -_S], dtype=complex),
    "RIGHT": np.array([_S, 1j * _S], dtype=complex),
    "LEFT": np.array([_S, -1j * _S], dtype=complex),
}
for _k in SINGLE_QUBIT_KETS.values():
    _k.flags.writeable = False


def ket(*labels: str) -> StateVector:
    """Product ket from single-qubit labels, e.g. ``ket("T1", "PLUS")``."""
    return StateVector(reduce(np.kron, (SINGLE_QUBIT_KETS[l] for l in labels)), len(labels))


def equatorial_ket(phase: float) -> np.ndarray:
    """(|t1> + e^{i phase}|t2>)/sqrt(2), the state a UMZI at ``phase`` projects onto."""
    return np.array([_S, _S * np.exp(1j * phase)], dtype=complex)


def bell_phi_plus() -> StateVector:
    return StateVector(np.array([1, 0, 0, 1]) * _S, 2)


def ghz_state(sign: int = -1) -> StateVector:
    """(|t1t1t1> + sign |t2t2t2>)/sqrt(2); the default carries the minus sign."""
    amps = np.zeros(8, dtype=complex)
    amps[0] = _S
    amps[7] = sign * _S
    return StateVector(amps, 3)


def tensor(a: Operand, b: Operand) -> Operand:
    """Kronecker product with ``a`` on the more significant qubits."""
    if type(a) is not type(b):
        raise TypeError("tensor operands must both be StateVector or DensityMatrix")
    n = a.n_qubits + b.n_qubits
    if n > MAX_QUBITS:
        raise StateError(f"tensor product would have {n} qubits (max {MAX_QUBITS})")
    if isinstance(a, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes), n)
    return DensityMatrix(np.kron(a.entries, b.entries), n)


def _check_hermitian(m: np.ndarray, what: str = "matrix") -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be square, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        raise ValueError(f"{what} is not Hermitian")


def expectation(rho: MatrixLike, observable: np.ndarray) -> float:
    """tr(rho O) for Hermitian O."""
    r = as_matrix(rho)
    o = np.asarray(observable, dtype=complex)
    if o.shape != r.shape:
        raise ValueError(f"observable shape {o.shape} does not match state {r.shape}")
    _check_hermitian(o, "observable")
    val = np.einsum("ij,ji->", r, o)
    if abs(val.imag) > PSD_TOL:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def _qubit_tensor(m: np.ndarray) -> tuple[np.ndarray, int]:
    n = _n_qubits_for(m.shape[0])
    return m.reshape((2,) * (2 * n)), n


def partial_transpose(rho: MatrixLike, subsystem: int) -> np.ndarray:
    """Transpose the indices of one qubit (0 = A). The result may be non-PSD."""
    m = as_matrix(rho)
    t, n = _qubit_tensor(m)
    if not 0 <= subsystem < n:
        raise IndexError(f"subsystem {subsystem} out of range for {n} qubits")
    axes = list(range(2 * n))
    axes[subsystem], axes[n + subsystem] = axes[n + subsystem], axes[subsystem]
    return t.transpose(axes).reshape(m.shape).copy()


def partial_trace(rho: MatrixLike, keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on the qubits in ``keep`` (kept in ascending order)."""
    m = as_matrix(rho)
    t, n = _qubit_tensor(m)
    keep = sorted(set(keep))
    if not keep:
        raise ValueError("keep must name at least one qubit")
    if keep[0] < 0 or keep[-1] >= n:
        raise IndexError(f"keep={keep} out of range for {n} qubits")
    letters = "abcdefghijkl"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for q in range(n):
        if q not in keep:
            col[q] = row[q]
    out = "".join(row[q] for q in keep) + "".join(col[q] for q in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = 2 ** len(keep)
    return DensityMatrix(reduced.reshape(d, d), len(keep))


def eig_hermitian(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching eigenvector columns."""
    m = np.asarray(m, dtype=complex)
    _check_hermitian(m)
    w, v = np.linalg.eigh(m)
    # eigh returns ascending order; reversing keeps ties in a fixed order
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    residual = np.linalg.norm(m - (v * w) @ v.conj().T)
    if residual > 1e-9 * max(1.0, np.linalg.norm(m)):
        raise np.linalg.LinAlgError(f"eigendecomposition residual {residual:.3e}")
    return w, v


def project_psd(m: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues to zero and renormalize the trace to one."""
    w, v = eig_hermitian((m + m.conj().T) / 2)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise ValueError("matrix has no positive spectral weight")
    out = (v * (w / w.sum())) @ v.conj().T
    return (out + out.conj().T) / 2


def random_pure_state(n_qubits: int, rng: np.random.Generator) -> StateVector:
    z = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return StateVector.from_amplitudes(z)


def random_density_matrix(
    n_qubits: int, rng: np.random.Generator, rank: int | None = None
) -> DensityMatrix:
    """Ginibre-ensemble mixed state; full rank unless ``rank`` is given."""
    d = 2**n_qubits
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    m = g @ g.conj().T
    m = m / np.trace(m).real
    return DensityMatrix((m + m.conj().T) / 2, n_qubits)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
