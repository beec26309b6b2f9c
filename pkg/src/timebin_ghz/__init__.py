"""Simulation and characterization of a post-selected three-photon time-bin GHZ state."""

from ._kernels import BACKEND
from .metrics import (
    MetricReport,
    chsh_value,
    fidelity,
    fit_visibility,
    mermin_expectation,
    optimal_chsh,
    purity_and_entropies,
    tripartite_negativity,
    witness_expectation,
)
from .photonic import (
    ExperimentConfig,
    PhaseTemperatureMap,
    build_initial_state,
    estimate_threefold_rate,
    fringe_probability,
    noisy_ghz_model,
    simulate_higher_order_fidelity,
    tdbs_postselect,
)
from .quantum import DensityMatrix, StateVector, ghz_state, ket
from .tomography import (
    CountRecord,
    MeasurementSetting,
    bootstrap_errors,
    born_probability,
    linear_inversion,
    mle_reconstruct,
    settings_64,
    simulate_counts,
)

__version__ = "0.1.0"
