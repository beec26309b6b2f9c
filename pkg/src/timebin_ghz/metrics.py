"""Figures of merit for reconstructed states and interference data."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .quantum import (
    MatrixLike,
    StateVector,
    X,
    Y,
    as_matrix,
    eig_hermitian,
    expectation,
    ghz_state,
    partial_transpose,
    pauli_string,
)

NEGATIVE_EIGEN_THRESHOLD = -1e-12
MERMIN_TERMS = ("XYY", "YXY", "YYX", "XXX")
MERMIN_SIGNS = (1, 1, 1, -1)
LOCAL_REALISM_BOUND = 2.0


def fidelity(rho: MatrixLike, target: StateVector) -> float:
    """<psi|rho|psi> for a pure target."""
    m = as_matrix(rho)
    psi = target.amplitudes
    if m.shape != (psi.size, psi.size):
        raise ValueError(f"state shape {m.shape} does not match target dimension {psi.size}")
    val = np.vdot(psi, m @ psi)
    if abs(val.imag) > 1e-10:
        raise ValueError("fidelity has a non-negligible imaginary part")
    return float(val.real)


def purity_and_entropies(rho: MatrixLike) -> tuple[float, float, float]:
    """(tr rho^2, d/(d-1) (1 - tr rho^2), von Neumann entropy in bits)."""
    m = as_matrix(rho)
    d = m.shape[0]
    purity = float(np.einsum("ij,ji->", m, m).real)
    linear = d / (d - 1) * (1.0 - purity)
    lam = np.clip(eig_hermitian(m)[0], 0.0, None)
    lam = lam[lam > 0]
    vn = float(-np.sum(lam * np.log2(lam)))
    return purity, linear, max(vn, 0.0)


def bipartite_negativity(rho: MatrixLike, subsystem: int) -> float:
    """-2 times the sum of negative eigenvalues of the partial transpose on one qubit."""
    lam = eig_hermitian(partial_transpose(rho, subsystem))[0]
    return float(-2.0 * lam[lam < NEGATIVE_EIGEN_THRESHOLD].sum())


def tripartite_negativity(rho: MatrixLike) -> float:
    """Geometric mean of the A|BC, B|AC and C|AB negativities."""
    m = as_matrix(rho)
    if m.shape != (8, 8):
        raise ValueError("tripartite negativity needs a 3-qubit state")
    parts = [bipartite_negativity(m, q) for q in range(3)]
    if min(parts) <= 0.0:
        return 0.0
    return float(np.prod(parts) ** (1 / 3))


def witness_expectation(rho: MatrixLike) -> float:
    """tr(W rho) with W = I/2 - |GHZ><GHZ|; negative values certify GHZ-class entanglement."""
    return 0.5 - fidelity(rho, ghz_state())


_MERMIN_OPS = {t: pauli_string(t) for t in MERMIN_TERMS}


def mermin_expectation(rho: MatrixLike) -> tuple[float, tuple[float, float, float, float]]:
    """<XYY> + <YXY> + <YYX> - <XXX> and the four joint expectations in that order."""
    terms = tuple(expectation(rho, _MERMIN_OPS[t]) for t in MERMIN_TERMS)
    return float(sum(s * v for s, v in zip(MERMIN_SIGNS, terms))), terms


def mermin_from_joint(terms: Sequence[float]) -> float:
    return float(sum(s * v for s, v in zip(MERMIN_SIGNS, terms)))


def _analyzer(phi: float) -> np.ndarray:
    # +1 eigenstate is (|t1> + e^{i phi}|t2>)/sqrt(2)
    return math.cos(phi) * X + math.sin(phi) * Y


def correlator(rho: MatrixLike, phi_1: float, phi_2: float) -> float:
    return expectation(rho, np.kron(_analyzer(phi_1), _analyzer(phi_2)))


def chsh_value(rho: MatrixLike, angles: Sequence[float]) -> float:
    """E(a,b) + E(a,b') + E(a',b) - E(a',b') for equatorial analyzers.

    ``angles`` is (a, a', b, b') in radians.
    """
    m = as_matrix(rho)
    if m.shape != (4, 4):
        raise ValueError("CHSH needs a 2-qubit state")
    a, a2, b, b2 = angles
    return (
        correlator(m, a, b)
        + correlator(m, a, b2)
        + correlator(m, a2, b)
        - correlator(m, a2, b2)
    )


def optimal_chsh(rho: MatrixLike) -> tuple[float, tuple[float, float, float, float]]:
    """Largest CHSH value over equatorial analyzer phases, with the phases.

    Uses the singular values of the in-plane correlation block: the maximum is
    2 sqrt(s1^2 + s2^2).
    """
    m = as_matrix(rho)
    paulis = (X, Y)
    corr = np.array([[expectation(m, np.kron(p, q)) for q in paulis] for p in paulis])
    u, s, vt = np.linalg.svd(corr)
    theta = math.atan2(s[1], s[0])
    a_vec, a2_vec = u[:, 0], u[:, 1]
    # Bob's unit vectors: b +/- b' point along v1 and v2
    b_plus = math.cos(theta) * vt[0]
    b_minus = math.sin(theta) * vt[1]
    b_vec, b2_vec = b_plus + b_minus, b_plus - b_minus
    angles = tuple(float(math.atan2(v[1], v[0])) for v in (a_vec, a2_vec, b_vec, b2_vec))
    return chsh_value(m, angles), angles


def fit_visibility(phases: Sequence[float], normalized_counts: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit of (1 + V cos(phi + phi0))/2 with V in [0, 1].

    Returns (V, phi0, rms residual). A flat fringe gives V = 0 and phi0 = 0.
    """
    phi = np.asarray(phases, dtype=float)
    c = np.asarray(normalized_counts, dtype=float)
    if phi.shape != c.shape or phi.size < 4:
        raise ValueError("need at least 4 (phase, count) samples")
    if np.ptp(phi) <= math.pi:
        raise ValueError("phase samples must span more than pi")
    a = np.column_stack([np.cos(phi), np.sin(phi)])
    if np.linalg.matrix_rank(a) < 2:
        raise ValueError("phase samples do not determine a fringe")
    (alpha, beta), *_ = np.linalg.lstsq(a, c - 0.5, rcond=None)
    vis = 2.0 * math.hypot(alpha, beta)
    offset = math.atan2(-beta, alpha) if vis > 1e-12 else 0.0
    if 1.0 < vis <= 1.0 + 1e-9:
        vis = 1.0  # rounding above a perfect fringe
    elif vis > 1.0:
        res = least_squares(
            lambda p: 0.5 * (1 + p[0] * np.cos(phi + p[1])) - c,
            x0=[1.0, offset],
            bounds=([0.0, -np.inf], [1.0, np.inf]),
        )
        if not res.success:
            raise RuntimeError(f"visibility fit failed: {res.message}")
        vis, offset = float(res.x[0]), float(res.x[1])
    elif vis <= 1e-12:
        vis = 0.0
    model = 0.5 * (1 + vis * np.cos(phi + offset))
    rms = float(np.sqrt(np.mean((model - c) ** 2)))
    offset = float((offset + math.pi) % (2 * math.pi) - math.pi)
    return float(vis), offset, rms


@dataclass
class MetricReport:
    fidelity: float
    purity: float
    linear_entropy: float
    von_neumann_entropy: float
    tripartite_negativity: float
    witness_expectation: float
    mermin: float
    mermin_terms: tuple[float, float, float, float]
    sigma: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_state(cls, rho: MatrixLike) -> "MetricReport":
        purity, linear, vn = purity_and_entropies(rho)
        mermin, terms = mermin_expectation(rho)
        return cls(
            fidelity=fidelity(rho, ghz_state()),
            purity=purity,
            linear_entropy=linear,
            von_neumann_entropy=vn,
            tripartite_negativity=tripartite_negativity(rho),
            witness_expectation=witness_expectation(rho),
            mermin=mermin,
            mermin_terms=terms,
        )

    @property
    def mermin_violation_sigmas(self) -> float | None:
        """How many bootstrap standard deviations |<M>| sits above 2."""
        s = self.sigma.get("mermin")
        if not s:
            return None
        return (abs(self.mermin) - LOCAL_REALISM_BOUND) / s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mermin_terms"] = list(self.mermin_terms)
        d["mermin_violation_sigmas"] = self.mermin_violation_sigmas
        return d


# metrics the bootstrap can attach a sigma to
SCALAR_METRICS = {
    "fidelity": lambda r: fidelity(r, ghz_state()),
    "purity": lambda r: purity_and_entropies(r)[0],
    "linear_entropy": lambda r: purity_and_entropies(r)[1],
    "von_neumann_entropy": lambda r: purity_and_entropies(r)[2],
    "tripartite_negativity": tripartite_negativity,
    "witness_expectation": witness_expectation,
    "mermin": lambda r: mermin_expectation(r)[0],
}
