"""Optical train: sources, time-dependent beam splitter, losses and detectors."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .quantum import DensityMatrix, StateVector, bell_phi_plus, ghz_state

SECONDS_PER_MINUTE = 60.0


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


class NoCoincidenceError(RuntimeError):
    """Post-selection left nothing: no three-fold coincidence is possible or observed."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Source, loss and detector parameters. Defaults are the laboratory values.

    ``mu_wcp`` is not reported for the experiment; the default is a placeholder
    on the scale of the pair flux and is usually fitted or swept.
    """

    mu_pair: float = 0.0082
    mu_wcp: float = 0.0082
    rep_rate: float = 250e6
    eta_A: float = 0.57
    eta_B: float = 0.52
    eta_C1: float = 0.62
    eta_C2: float = 0.46
    dark_rate: float = 40.0
    loss_umzi_db: float = 2.0
    loss_switch_db: float = 3.5
    interference_visibility: float = 0.947
    phase_A: float = 0.0
    phase_B: float = 0.0
    phase_C: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{f.name} must be a finite number, got {v!r}")
        for name in ("eta_A", "eta_B", "eta_C1", "eta_C2", "interference_visibility"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        for name in ("mu_pair", "mu_wcp", "dark_rate", "loss_umzi_db", "loss_switch_db"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.rep_rate <= 0:
            raise ConfigError("rep_rate must be > 0")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    @property
    def dark_probability(self) -> float:
        """Probability of a dark count within one pulse period."""
        return min(1.0, self.dark_rate / self.rep_rate)

    @property
    def eta_C(self) -> float:
        """Charlie's efficiency averaged over his two UMZI outputs."""
        return 0.5 * (self.eta_C1 + self.eta_C2)

    def port_detection(self) -> tuple[float, float, float]:
        """Overall detection probability for a photon reaching A, B and C."""
        t_umzi = db_to_transmittance(self.loss_umzi_db)
        t_switch = db_to_transmittance(self.loss_switch_db)
        return (
            t_switch * t_umzi * self.eta_A,
            t_switch * t_umzi * self.eta_B,
            t_umzi * self.eta_C,
        )


def db_to_transmittance(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class PhaseTemperatureMap:
    """Linear map from PLC base-plate temperature to UMZI phase."""

    slope: float = math.pi / 0.3  # rad per degC
    reference_temp: float = 0.0

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("slope must be positive")

    def phase(self, temperature: float) -> float:
        return self.slope * (temperature - self.reference_temp)

    def temperature(self, phase: float) -> float:
        return self.reference_temp + phase / self.slope


# --- state preparation and the switch ---------------------------------------

def build_initial_state(phase_wcp: float = 0.0) -> StateVector:
    """(|t1> + e^{i phase}|t2>)/sqrt(2) on A' times the pair state on B'C."""
    wcp = np.array([1.0, np.exp(1j * phase_wcp)]) / math.sqrt(2)
    return StateVector(np.kron(wcp, bell_phi_plus().amplitudes), 3)


CROSS_PHASE = 1j


def tdbs_mode_map(state: StateVector) -> dict[tuple, complex]:
    """Push a one-photon-per-input state through the switch.

    Returns amplitudes keyed by ``(bins at A, bins at B, bin of C)`` where each
    port entry is a sorted tuple of time bins (0 = t1, 1 = t2). The early bin
    passes in the bar state, the late bin crosses and picks up a factor i.
    """
    if state.n_qubits != 3:
        raise ValueError("switch input must be a 3-qubit state ordered A', B', C")
    out: dict[tuple, complex] = {}
    for index, amp in enumerate(state.amplitudes):
        if amp == 0:
            continue
        a, b, c = (index >> 2) & 1, (index >> 1) & 1, index & 1
        port_a: list[int] = []
        port_b: list[int] = []
        phase = 1.0 + 0j
        # photon from A'
        if a == 0:
            port_a.append(a)
        else:
            port_b.append(a)
            phase *= CROSS_PHASE
        # photon from B'
        if b == 0:
            port_b.append(b)
        else:
            port_a.append(b)
            phase *= CROSS_PHASE
        key = (tuple(sorted(port_a)), tuple(sorted(port_b)), c)
        out[key] = out.get(key, 0) + phase * amp
    return out


def tdbs_postselect(state: StateVector) -> StateVector:
    """Apply the switch and keep the one-photon-per-output-port component."""
    amps = np.zeros(8, dtype=complex)
    for (port_a, port_b, c), amp in tdbs_mode_map(state).items():
        if len(port_a) == 1 and len(port_b) == 1:
            amps[(port_a[0] << 2) | (port_b[0] << 1) | c] += amp
    norm = np.linalg.norm(amps)
    if norm < 1e-15:
        raise NoCoincidenceError("post-selected component has zero norm: no coincidence support")
    return StateVector(amps / norm, 3)


def ideal_ghz_output(phase_wcp: float = 0.0) -> StateVector:
    return tdbs_postselect(build_initial_state(phase_wcp))


# --- two-photon interference ------------------------------------------------

def fringe_probability(phi_B: float, phi_C, visibility: float = 1.0):
    """Normalized coincidence signal (1 + V cos(phi_B + phi_C))/2."""
    return 0.5 * (1.0 + visibility * np.cos(phi_B + np.asarray(phi_C)))


def werner_bell_state(visibility: float) -> DensityMatrix:
    """V |Phi+><Phi+| + (1 - V) I/4."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    return DensityMatrix(
        visibility * bell_phi_plus().projector() + (1 - visibility) * np.eye(4) / 4, 2
    )


BOB_FRINGE_BASES = {"PLUS": 0.0, "RIGHT": math.pi / 2, "MINUS": math.pi, "LEFT": 3 * math.pi / 2}


def fringe_curves(visibility: float, n_points: int = 73) -> list[tuple[str, float, float]]:
    """Rows (Bob basis, Charlie phase, normalized count) for Bob in +, R, -, L."""
    phases = np.linspace(0.0, 2 * math.pi, n_points)
    rows = []
    for label, phi_b in BOB_FRINGE_BASES.items():
        for phi_c, value in zip(phases, fringe_probability(phi_b, phases, visibility)):
            rows.append((label, float(phi_c), float(value)))
    return rows


# --- noise model and rates --------------------------------------------------

def noisy_ghz_model(p_white: float) -> DensityMatrix:
    """p |GHZ><GHZ| + (1 - p) I/8."""
    if not 0.0 <= p_white <= 1.0:
        raise ValueError("p_white must lie in [0, 1]")
    m = p_white * ghz_state().projector() + (1 - p_white) * np.eye(8) / 8
    return DensityMatrix(m, 3)


def p_white_for_fidelity(fidelity: float) -> float:
    """Invert F = p + (1 - p)/8."""
    return (fidelity - 1 / 8) / (7 / 8)


def estimate_threefold_rate(config: ExperimentConfig) -> float:
    """Lowest-order three-fold coincidence rate in counts per minute.

    rate = 60 f mu_pair mu_wcp (1/2) d_A d_B d_C, with d_j the product of the
    switch/UMZI transmittances and detector efficiency on path j. Charlie's
    efficiency is the mean over his two outputs.
    """
    d_a, d_b, d_c = config.port_detection()
    return (
        SECONDS_PER_MINUTE * config.rep_rate * config.mu_pair * config.mu_wcp * 0.5 * d_a * d_b * d_c
    )


def fit_wcp_mean_photon(config: ExperimentConfig, target_per_minute: float = 0.8) -> float:
    """Mean WCP photon number that makes the three-fold rate hit the target."""
    per_unit = estimate_threefold_rate(config.replace(mu_wcp=1.0))
    if per_unit <= 0:
        raise ValueError("rate is identically zero for this configuration")
    return target_per_minute / per_unit


# --- higher-order photon-number Monte Carlo ---------------------------------

@dataclass(frozen=True)
class HigherOrderResult:
    fidelity: float
    stderr: float
    n_threefold: int
    n_ideal: int
    n_samples: int


MC_CHUNK = 1 << 16


def _two_photon_fraction(mu: float) -> float:
    # P(n = 2 | 1 <= n <= 2) for a Poisson source truncated at two photons
    return mu / (2.0 + mu)


def simulate_higher_order_fidelity(
    config: ExperimentConfig,
    n_samples: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = MC_CHUNK,
) -> HigherOrderResult:
    """Fraction of three-fold events that come from one pair plus one WCP photon.

    Each sample is a pulse in which both sources emitted (one or two photons
    each, Poisson weights truncated at two). Photons are routed by time bin
    through the switch, attenuated, and detected by threshold detectors with
    dark counts. The ideal fraction bounds the fidelity from above.

    Chunk ``k`` always draws from child ``k`` of ``SeedSequence(seed)``, so the
    result is bit-identical for any ``workers``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if config.mu_pair == 0 or config.mu_wcp == 0:
        raise NoCoincidenceError("a source is switched off: no three-fold coincidences")
    p2_pair = _two_photon_fraction(config.mu_pair)
    p2_wcp = _two_photon_fraction(config.mu_wcp)
    d_a, d_b, d_c = config.port_detection()
    dark = config.dark_probability

    sizes = [chunk_size] * (n_samples // chunk_size)
    if n_samples % chunk_size:
        sizes.append(n_samples % chunk_size)
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(k: int) -> tuple[int, int]:
        u = np.random.default_rng(children[k]).random((sizes[k], _kernels.MC_COLUMNS))
        return _kernels.tally_events(u, p2_pair, p2_wcp, d_a, d_b, d_c, dark)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tallies = list(pool.map(run, range(len(sizes))))
    else:
        tallies = [run(k) for k in range(len(sizes))]
    n3 = sum(t[0] for t in tallies)
    n_ideal = sum(t[1] for t in tallies)
    if n3 == 0:
        raise NoCoincidenceError(f"no three-fold coincidences in {n_samples} samples")
    frac = n_ideal / n3
    return HigherOrderResult(
        fidelity=frac,
        stderr=math.sqrt(frac * (1 - frac) / n3),
        n_threefold=n3,
        n_ideal=n_ideal,
        n_samples=n_samples,
    )

