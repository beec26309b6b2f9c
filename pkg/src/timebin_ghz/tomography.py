"""Measurement campaign, count simulation and density-matrix reconstruction."""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .photonic import ExperimentConfig
from .quantum import (
    SINGLE_QUBIT_KETS,
    DensityMatrix,
    MatrixLike,
    as_matrix,
    pauli_string,
    project_psd,
)

TOMOGRAPHY_LABELS = ("T1", "T2", "PLUS", "RIGHT")
ALL_LABELS = ("T1", "T2", "PLUS", "MINUS", "RIGHT", "LEFT")
# projectors seen by Charlie's first output; their complements go to the second detector
CHARLIE_FIRST_OUTPUT = {"T1", "PLUS", "RIGHT"}
COMPLEMENT = {"T1": "T2", "T2": "T1", "PLUS": "MINUS", "MINUS": "PLUS", "RIGHT": "LEFT", "LEFT": "RIGHT"}
PROB_SLACK = 1e-9


class TomographyError(ValueError):
    """Records cannot support a reconstruction (missing, duplicated or empty data)."""


class MLEConvergenceError(RuntimeError):
    """Iteration cap reached; ``best`` holds the last iterate as an MLEResult."""

    def __init__(self, message: str, best: "MLEResult", resample_index: int | None = None):
        super().__init__(message)
        self.best = best
        self.resample_index = resample_index


@dataclass(frozen=True)
class MeasurementSetting:
    labels: tuple[str, str, str]
    setting_id: int

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) != 3:
            raise ValueError("a setting names one projector per qubit (A, B, C)")
        for l in labels:
            if l not in ALL_LABELS:
                raise ValueError(f"unknown basis label {l!r}")
        if self.setting_id < 0:
            raise ValueError("setting_id must be >= 0")

    @property
    def ket(self) -> np.ndarray:
        return reduce(np.kron, (SINGLE_QUBIT_KETS[l] for l in self.labels))

    @property
    def projectors(self) -> tuple[np.ndarray, ...]:
        return tuple(np.outer(SINGLE_QUBIT_KETS[l], SINGLE_QUBIT_KETS[l].conj()) for l in self.labels)

    def projector(self) -> np.ndarray:
        k = self.ket
        return np.outer(k, k.conj())


@dataclass(frozen=True)
class CountRecord:
    setting_id: int
    counts: int
    integration_pulses: int

    def __post_init__(self):
        if self.integration_pulses <= 0:
            raise ValueError("integration_pulses must be positive")
        if not 0 <= self.counts <= self.integration_pulses:
            raise ValueError(
                f"counts {self.counts} outside [0, {self.integration_pulses}] for setting {self.setting_id}"
            )


def settings_64() -> list[MeasurementSetting]:
    """All of {T1, T2, PLUS, RIGHT}^3, lexicographic in (A, B, C)."""
    return [
        MeasurementSetting(labels, i)
        for i, labels in enumerate(itertools.product(TOMOGRAPHY_LABELS, repeat=3))
    ]


_PAULI_EIGEN = {"X": ("PLUS", "MINUS"), "Y": ("RIGHT", "LEFT"), "Z": ("T1", "T2")}


def joint_settings(observable: str, first_id: int = 0) -> list[tuple[MeasurementSetting, int]]:
    """The eight projectors of a joint Pauli measurement with their outcome signs.

    ``joint_settings("XYY")`` pairs (PLUS, RIGHT, RIGHT) with +1,
    (MINUS, RIGHT, RIGHT) with -1, and so on.
    """
    out = []
    for k, outcome in enumerate(itertools.product((0, 1), repeat=3)):
        labels = tuple(_PAULI_EIGEN[p][o] for p, o in zip(observable, outcome))
        out.append((MeasurementSetting(labels, first_id + k), (-1) ** sum(outcome)))
    return out


def born_probability(rho: MatrixLike, setting: MeasurementSetting) -> float:
    """tr(rho Pi_A (x) Pi_B (x) Pi_C)."""
    m = as_matrix(rho)
    if m.shape != (8, 8):
        raise ValueError(f"expected a 3-qubit state, got shape {m.shape}")
    k = setting.ket
    p = float(np.vdot(k, m @ k).real)
    if p < -PROB_SLACK or p > 1 + PROB_SLACK:
        raise ValueError(f"Born probability {p} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def _setting_efficiencies(setting: MeasurementSetting, config: ExperimentConfig) -> tuple[float, float, float]:
    eta_c = config.eta_C1 if setting.labels[2] in CHARLIE_FIRST_OUTPUT else config.eta_C2
    return config.eta_A, config.eta_B, eta_c


def efficiency_weights(
    settings: Sequence[MeasurementSetting], config: ExperimentConfig, correct: bool = True
) -> np.ndarray:
    """Product of the three detector efficiencies used by each setting.

    With ``correct=False`` every setting gets the mean product, which keeps the
    overall detection scale but ignores the imbalance between detectors.
    """
    w = np.array([np.prod(_setting_efficiencies(s, config)) for s in settings])
    return w if correct else np.full_like(w, w.mean())


def click_probability(rho: MatrixLike, setting: MeasurementSetting, config: ExperimentConfig) -> float:
    """Probability that all three gated detectors fire in one trial.

    Detector j fires from its photon with probability eta_j when the photon
    passes the projector, and independently from a dark count with probability
    dark_rate / rep_rate. Accidentals are part of the signal and never removed.
    """
    m = as_matrix(rho)
    etas = _setting_efficiencies(setting, config)
    dark = config.dark_probability
    total = 0.0
    for passed in itertools.product((1, 0), repeat=3):
        labels = [l if x else COMPLEMENT[l] for l, x in zip(setting.labels, passed)]
        k = reduce(np.kron, (SINGLE_QUBIT_KETS[l] for l in labels))
        p = float(np.vdot(k, m @ k).real)
        fire = np.prod([dark + eta * x * (1 - dark) for eta, x in zip(etas, passed)])
        total += max(p, 0.0) * fire
    return min(total, 1.0)


def simulate_counts(
    rho: MatrixLike,
    settings: Sequence[MeasurementSetting],
    pulses_per_setting: int,
    config: ExperimentConfig,
    seed,
) -> list[CountRecord]:
    """Binomial counts per setting with detector efficiencies and dark counts."""
    if pulses_per_setting < 1:
        raise ValueError("pulses_per_setting must be >= 1")
    p = np.array([click_probability(rho, s, config) for s in settings])
    counts = np.random.default_rng(seed).binomial(pulses_per_setting, p)
    return [CountRecord(s.setting_id, int(c), int(pulses_per_setting)) for s, c in zip(settings, counts)]


def expected_records(
    rho: MatrixLike, settings: Sequence[MeasurementSetting], pulses_per_setting: int
) -> list[CountRecord]:
    """Noise-free counts rounded to integers (ideal detectors)."""
    return [
        CountRecord(s.setting_id, int(round(born_probability(rho, s) * pulses_per_setting)), pulses_per_setting)
        for s in settings
    ]


def _align(records: Sequence[CountRecord], settings: Sequence[MeasurementSetting]):
    by_id: dict[int, CountRecord] = {}
    for r in records:
        if r.setting_id in by_id:
            raise TomographyError(f"duplicate record for setting {r.setting_id}")
        by_id[r.setting_id] = r
    ids = [s.setting_id for s in settings]
    if len(set(ids)) != len(ids):
        raise TomographyError("duplicate setting_id in settings")
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise TomographyError(f"no counts for settings {missing}")
    counts = np.array([by_id[i].counts for i in ids], dtype=float)
    pulses = np.array([by_id[i].integration_pulses for i in ids], dtype=float)
    if counts.sum() == 0:
        raise TomographyError("total counts are zero")
    return counts, pulses


# --- linear inversion -------------------------------------------------------

_PAULI_LABELS = ["".join(p) for p in itertools.product("IXYZ", repeat=3)]
_PAULI_BASIS = np.array([pauli_string(p) for p in _PAULI_LABELS])


def _design_matrix(settings: Sequence[MeasurementSetting]) -> np.ndarray:
    kets = np.array([s.ket for s in settings])
    # tr(P_k |psi><psi|) / 8 is real for Hermitian P_k
    return np.einsum("si,kij,sj->sk", kets.conj(), _PAULI_BASIS, kets).real / 8


@dataclass(frozen=True)
class LinearInversionResult:
    matrix: np.ndarray  # Hermitian, unit trace, possibly not PSD
    residual: float
    min_eigenvalue: float

    @property
    def is_physical(self) -> bool:
        return self.min_eigenvalue >= -1e-9


def linear_inversion_frequencies(
    frequencies, settings: Sequence[MeasurementSetting], weights=None
) -> LinearInversionResult:
    f = np.asarray(frequencies, dtype=float)
    if weights is not None:
        f = f / np.asarray(weights, dtype=float)
    a = _design_matrix(settings)
    sv = np.linalg.svd(a, compute_uv=False)
    if a.shape[0] < 64 or sv[-1] < 1e-10 * sv[0]:
        raise TomographyError("design matrix is singular: settings are not tomographically complete")
    coeffs, *_ = np.linalg.lstsq(a, f, rcond=None)
    if abs(coeffs[0]) < 1e-15:
        raise TomographyError("reconstructed trace vanishes")
    coeffs = coeffs / coeffs[0]
    m = np.einsum("k,kij->ij", coeffs, _PAULI_BASIS) / 8
    m = (m + m.conj().T) / 2
    residual = float(np.linalg.norm(a @ coeffs - f))
    return LinearInversionResult(m, residual, float(np.linalg.eigvalsh(m)[0]))


def linear_inversion(
    records: Sequence[CountRecord], settings: Sequence[MeasurementSetting], weights=None
) -> LinearInversionResult:
    """Invert the Born map on per-pulse frequencies; the result is renormalized to unit trace."""
    counts, pulses = _align(records, settings)
    return linear_inversion_frequencies(counts / pulses, settings, weights)


# --- maximum likelihood -----------------------------------------------------

@dataclass(frozen=True)
class MLEOptions:
    """Stopping rules for the likelihood ascent.

    The fit stops when the projected gradient falls below ``gtol`` or when the
    binomial deviance (in count units) drops by less than ``tol`` times its
    current value over the last ``window`` iterations. The second rule matters
    for rank-deficient optima, which the T^dagger T map approaches too slowly
    to ever meet ``gtol``; on exact data the deviance goes to zero and only the
    gradient rule applies.
    """

    tol: float = 1e-5
    max_iter: int = 5000
    gtol: float = 1e-11
    window: int = 100


@dataclass(frozen=True)
class MLEResult:
    rho: DensityMatrix
    log_likelihood: float
    iterations: int
    history: tuple[float, ...] = field(repr=False)
    fitted_probabilities: np.ndarray = field(repr=False)


_DIM = 8
_TRIL = np.tril_indices(_DIM, -1)
_N_PARAMS = _DIM * _DIM


def _unpack(x: np.ndarray) -> np.ndarray:
    t = np.zeros((_DIM, _DIM), dtype=complex)
    t[np.diag_indices(_DIM)] = x[:_DIM]
    n_off = len(_TRIL[0])
    t[_TRIL] = x[_DIM : _DIM + n_off] + 1j * x[_DIM + n_off :]
    return t


def _pack(t: np.ndarray) -> np.ndarray:
    off = t[_TRIL]
    return np.concatenate([np.diag(t).real, off.real, off.imag])


def _lower_factor(rho: np.ndarray) -> np.ndarray:
    """Lower-triangular T with T^dagger T = rho (rho positive definite)."""
    j = np.eye(_DIM)[::-1]
    u = j @ np.linalg.cholesky(j @ rho @ j) @ j  # upper triangular, u u^dagger = rho
    return u.conj().T


def _log_likelihood(p, f, n):
    p = np.clip(p, _P_LO, _P_HI)
    return float(np.sum(n * (f * np.log(p) + (1 - f) * np.log1p(-p))))


_DEVIANCE_FLOOR = 1e-12
_P_LO = 1e-100
_P_HI = 1 - 1e-15


def _deviance_exact(p, f):
    # f log(f/p) + (1-f) log((1-f)/(1-p)) via log1p, accurate for p close to f
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(f > 0, -f * np.log1p((p - f) / np.where(f > 0, f, 1)), 0.0)
        b = np.where(f < 1, -(1 - f) * np.log1p((f - p) / np.where(f < 1, 1 - f, 1)), 0.0)
    return a + b


def _deviance(p, f):
    """Per-setting binomial deviance and its derivative in p.

    Outside [_P_LO, _P_HI] the deviance continues as a quadratic so that line
    searches never see inf or nan.
    """
    pc = np.clip(p, _P_LO, _P_HI)
    d = _deviance_exact(pc, f)
    d1 = -f / pc + (1 - f) / (1 - pc)
    d2 = f / pc**2 + (1 - f) / (1 - pc) ** 2
    dp = p - pc
    return d + d1 * dp + 0.5 * d2 * dp**2, d1 + d2 * dp


def mle_from_frequencies(
    frequencies,
    settings: Sequence[MeasurementSetting],
    pulses=1.0,
    options: MLEOptions | None = None,
    weights=None,
) -> MLEResult:
    """Binomial maximum likelihood over rho = T^dagger T / tr(T^dagger T).

    T is lower triangular with a real diagonal (64 real parameters). The model
    probability for setting s is ``w_s * <psi_s|rho|psi_s>``. The fit starts
    from the PSD-projected linear-inversion estimate.
    """
    options = options or MLEOptions()
    f = np.asarray(frequencies, dtype=float)
    n = np.broadcast_to(np.asarray(pulses, dtype=float), f.shape).copy()
    w = np.ones_like(f) if weights is None else np.asarray(weights, dtype=float)
    if np.any(f < 0) or np.any(f > 1):
        raise TomographyError("frequencies must lie in [0, 1]")
    if np.any(w <= 0) or np.any(w > 1):
        raise TomographyError("efficiency weights must lie in (0, 1]")
    if f.sum() == 0:
        raise TomographyError("total counts are zero")
    kets = np.ascontiguousarray(np.array([s.ket for s in settings]))
    n_total = n.sum()

    lin = linear_inversion_frequencies(f, settings, w)
    rho0 = 0.99 * project_psd(lin.matrix) + 0.01 * np.eye(_DIM) / _DIM
    x0 = _pack(_lower_factor(rho0))

    def probabilities(x):
        t = _unpack(x)
        m = t.conj().T @ t
        tau = np.trace(m).real
        return t, tau, _kernels.quadratic_forms(m, kets)

    def objective(x):
        t, tau, q = probabilities(x)
        dev, slope = _deviance(w * q / tau, f)
        g = n * w * slope
        r = _kernels.weighted_outer_sum(g, kets)
        grad_t = 2 * t @ (r / tau - (np.dot(g, q) / tau**2) * np.eye(_DIM))
        return float(np.dot(n, dev)) / n_total, _pack(grad_t) / n_total

    history: list[float] = []
    deviance: list[float] = []

    def record(x):
        _, tau, q = probabilities(x)
        p = w * q / tau
        history.append(_log_likelihood(p, f, n))
        deviance.append(float(np.dot(n, _deviance(p, f)[0])))
        if len(deviance) > options.window:
            gain = deviance[-1 - options.window] - deviance[-1]
            if gain <= options.tol * deviance[-1] + _DEVIANCE_FLOOR:
                raise StopIteration

    record(x0)
    res = minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"maxiter": options.max_iter, "ftol": 0.0, "gtol": options.gtol, "maxcor": 20},
    )
    t = _unpack(res.x)
    m = t.conj().T @ t
    m = m / np.trace(m).real
    m = (m + m.conj().T) / 2
    fitted = w * _kernels.quadratic_forms(m, kets)
    result = MLEResult(
        rho=DensityMatrix(m, 3),
        log_likelihood=_log_likelihood(fitted, f, n),
        iterations=int(res.nit),
        history=tuple(history),
        fitted_probabilities=fitted,
    )
    if res.nit >= options.max_iter and not res.success:
        raise MLEConvergenceError(f"MLE did not converge in {options.max_iter} iterations", result)
    return result


def mle_reconstruct(
    records: Sequence[CountRecord],
    settings: Sequence[MeasurementSetting],
    options: MLEOptions | None = None,
    weights=None,
) -> MLEResult:
    """Maximum-likelihood density matrix from coincidence counts.

    Pass ``weights=efficiency_weights(settings, config)`` to correct for the
    detector-efficiency imbalance; without weights all detectors are treated
    as equally efficient.
    """
    counts, pulses = _align(records, settings)
    return mle_from_frequencies(counts / pulses, settings, pulses, options, weights)


# --- bootstrap --------------------------------------------------------------

def bootstrap_errors(
    records: Sequence[CountRecord],
    settings: Sequence[MeasurementSetting],
    n_resamples: int = 200,
    seed: int = 0,
    metric: Callable[[DensityMatrix], float] | None = None,
    options: MLEOptions | None = None,
    weights=None,
    workers: int = 1,
    fit: MLEResult | None = None,
) -> tuple[float, float]:
    """Parametric bootstrap: redraw counts from the fitted probabilities and refit.

    Resample ``i`` uses ``default_rng(seed + i)``. Returns the mean and sample
    standard deviation of ``metric`` over resamples.
    """
    if n_resamples < 2:
        raise ValueError("n_resamples must be >= 2")
    values = bootstrap_samples(records, settings, n_resamples, seed, [metric or _trace], options, weights, workers, fit)[:, 0]
    return float(np.mean(values)), float(np.std(values, ddof=1))


def _trace(rho: DensityMatrix) -> float:
    return float(np.trace(rho.entries).real)


def bootstrap_samples(
    records: Sequence[CountRecord],
    settings: Sequence[MeasurementSetting],
    n_resamples: int,
    seed: int,
    metrics: Sequence[Callable[[DensityMatrix], float]],
    options: MLEOptions | None = None,
    weights=None,
    workers: int = 1,
    fit: MLEResult | None = None,
) -> np.ndarray:
    """Metric values per resample, shape (n_resamples, len(metrics))."""
    counts, pulses = _align(records, settings)
    if fit is None:
        fit = mle_from_frequencies(counts / pulses, settings, pulses, options, weights)
    p = np.clip(fit.fitted_probabilities, 0.0, 1.0)
    n_int = pulses.astype(np.int64)

    def one(i: int) -> list[float]:
        drawn = np.random.default_rng(seed + i).binomial(n_int, p)
        try:
            res = mle_from_frequencies(drawn / pulses, settings, pulses, options, weights)
        except MLEConvergenceError as exc:
            exc.resample_index = i
            raise
        except TomographyError as exc:
            raise TomographyError(f"resample {i}: {exc}") from exc
        return [m(res.rho) for m in metrics]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(n_resamples)))
    else:
        rows = [one(i) for i in range(n_resamples)]
    return np.array(rows, dtype=float)


# --- joint expectation values from counts -----------------------------------

def joint_expectation(
    records: Sequence[CountRecord],
    signed_settings: Sequence[tuple[MeasurementSetting, int]],
    weights=None,
) -> float:
    """Sum of signed, efficiency-corrected rates over their total."""
    settings = [s for s, _ in signed_settings]
    signs = np.array([sign for _, sign in signed_settings], dtype=float)
    counts, pulses = _align(records, settings)
    rates = counts / pulses
    if weights is not None:
        rates = rates / np.asarray(weights, dtype=float)
    return float(np.dot(signs, rates) / rates.sum())


# --- count files ------------------------------------------------------------

COUNT_HEADER = ["setting_id", "basis_a", "basis_b", "basis_c", "counts", "integration_pulses"]


def write_counts_csv(path, records: Sequence[CountRecord], settings: Sequence[MeasurementSetting]) -> None:
    by_id = {s.setting_id: s for s in settings}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COUNT_HEADER)
        for r in records:
            s = by_id[r.setting_id]
            w.writerow([r.setting_id, *s.labels, r.counts, r.integration_pulses])


def read_counts_csv(path) -> tuple[list[CountRecord], list[MeasurementSetting]]:
    """Parse a count file; unknown labels and duplicate setting ids are rejected."""
    records, settings = [], []
    seen: set[int] = set()
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != COUNT_HEADER:
            raise TomographyError(f"{path}: expected header {','.join(COUNT_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COUNT_HEADER):
                raise TomographyError(f"{path}:{lineno}: expected {len(COUNT_HEADER)} fields")
            sid_s, a, b, c, n_s, pulses_s = (x.strip() for x in row)
            for label in (a, b, c):
                if label not in ALL_LABELS:
                    raise TomographyError(f"{path}:{lineno}: unknown basis label {label!r}")
            try:
                sid, n, pulses = int(sid_s), int(n_s), int(pulses_s)
                rec = CountRecord(sid, n, pulses)
                setting = MeasurementSetting((a, b, c), sid)
            except ValueError as exc:
                raise TomographyError(f"{path}:{lineno}: {exc}") from exc
            if sid in seen:
                raise TomographyError(f"{path}:{lineno}: duplicate setting_id {sid}")
            seen.add(sid)
            records.append(rec)
            settings.append(setting)
    return records, settings
