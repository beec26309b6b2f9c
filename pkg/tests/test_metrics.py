import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import density_from_seed, seeds
from timebin_ghz.metrics import (
    MetricReport,
    bipartite_negativity,
    chsh_value,
    correlator,
    fidelity,
    fit_visibility,
    mermin_expectation,
    mermin_from_joint,
    optimal_chsh,
    purity_and_entropies,
    tripartite_negativity,
    witness_expectation,
)
from timebin_ghz.photonic import fringe_probability, noisy_ghz_model, werner_bell_state
from timebin_ghz.quantum import (
    DensityMatrix,
    X,
    Y,
    bell_phi_plus,
    ghz_state,
    ket,
    random_density_matrix,
    random_unitary,
    tensor,
)

GHZ = ghz_state()
MIXED = DensityMatrix.maximally_mixed(3)


def brute_expectation(rho, ops):
    """tr(rho A (x) B (x) C) summed element by element."""
    total = 0j
    for i, j in itertools.product(range(8), repeat=2):
        bi = [(i >> (2 - k)) & 1 for k in range(3)]
        bj = [(j >> (2 - k)) & 1 for k in range(3)]
        op = np.prod([ops[k][bj[k], bi[k]] for k in range(3)])
        total += rho[i, j] * op
    return total.real


# --- fidelity and witness ---------------------------------------------------

def test_fidelity_basic():
    assert fidelity(GHZ.density(), GHZ) == pytest.approx(1, abs=1e-15)
    assert fidelity(MIXED, GHZ) == pytest.approx(1 / 8, abs=1e-15)


def test_fidelity_dimension_mismatch():
    with pytest.raises(ValueError):
        fidelity(np.eye(4) / 4, GHZ)


def test_witness_values():
    assert witness_expectation(GHZ.density()) == pytest.approx(-0.5, abs=1e-15)
    assert witness_expectation(MIXED) == pytest.approx(0.375, abs=1e-15)


@given(seeds)
@settings(max_examples=200, deadline=None)
def test_witness_fidelity_identity(seed):
    rho = density_from_seed(seed)
    assert witness_expectation(rho) + fidelity(rho, GHZ) == pytest.approx(0.5, abs=1e-12)


# --- purity and entropies ---------------------------------------------------

def test_entropies_pure():
    p, lin, vn = purity_and_entropies(GHZ.density())
    assert p == pytest.approx(1, abs=1e-12)
    assert lin == pytest.approx(0, abs=1e-12)
    assert vn == pytest.approx(0, abs=1e-12)


def test_entropies_maximally_mixed():
    p, lin, vn = purity_and_entropies(MIXED)
    assert (p, lin) == pytest.approx((1 / 8, 1), abs=1e-15)
    assert vn == pytest.approx(3, abs=1e-12)


@given(seeds)
@settings(max_examples=200, deadline=None)
def test_linear_entropy_convention(seed):
    p, lin, _ = purity_and_entropies(density_from_seed(seed))
    assert lin == (8 / 7) * (1 - p)


def test_linear_entropy_table_value():
    assert round((8 / 7) * (1 - 0.571), 2) == 0.49


def test_von_neumann_is_bits():
    rho = np.diag([0.5, 0.5, 0, 0, 0, 0, 0, 0]).astype(complex)
    assert purity_and_entropies(rho)[2] == pytest.approx(1.0, abs=1e-12)


# --- negativity -------------------------------------------------------------

def test_ghz_bipartite_negativities():
    for q in range(3):
        assert bipartite_negativity(GHZ.density(), q) == pytest.approx(1, abs=1e-12)
    assert tripartite_negativity(GHZ.density()) == pytest.approx(1, abs=1e-9)


def test_negativity_zero_for_ppt():
    assert tripartite_negativity(MIXED) == 0
    assert tripartite_negativity(tensor(ket("T1"), bell_phi_plus()).density()) == 0


def test_negativity_noisy_model_closed_form():
    # PT spectrum of the white-noise GHZ: smallest eigenvalue (1-p)/8 - p/2
    for p in (0.3, 0.672, 0.9):
        expected = max(0.0, -2 * ((1 - p) / 8 - p / 2))
        assert tripartite_negativity(noisy_ghz_model(p)) == pytest.approx(expected, abs=1e-12)
    assert tripartite_negativity(noisy_ghz_model(0.672)) == pytest.approx(0.59, abs=1e-12)


def test_negativity_requires_three_qubits():
    with pytest.raises(ValueError):
        tripartite_negativity(np.eye(4) / 4)


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_negativity_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(3, rng, rank=2).entries
    u = np.kron(np.kron(random_unitary(2, rng), random_unitary(2, rng)), random_unitary(2, rng))
    rotated = u @ rho @ u.conj().T
    assert tripartite_negativity(rotated) == pytest.approx(tripartite_negativity(rho), abs=1e-9)


# --- Mermin -----------------------------------------------------------------

def test_mermin_ghz_against_brute_force():
    value, terms = mermin_expectation(GHZ.density())
    rho = GHZ.projector()
    ops = {"X": X, "Y": Y}
    oracle = tuple(brute_expectation(rho, [ops[c] for c in t]) for t in ("XYY", "YXY", "YYX", "XXX"))
    assert terms == pytest.approx(oracle, abs=1e-12)
    assert terms == pytest.approx((1, 1, 1, -1), abs=1e-12)
    assert value == pytest.approx(4, abs=1e-12)


def test_mermin_maximally_mixed():
    assert mermin_expectation(MIXED)[0] == pytest.approx(0, abs=1e-15)


def test_mermin_from_joint():
    assert mermin_from_joint((1, 1, 1, -1)) == 4


@pytest.mark.parametrize("p", [0, 0.25, 0.5, 0.75, 1])
def test_white_noise_family_closed_forms(p):
    rho = noisy_ghz_model(p)
    m = rho.entries
    ops = {"X": X, "Y": Y}
    brute_m = sum(
        s * brute_expectation(m, [ops[c] for c in t])
        for s, t in zip((1, 1, 1, -1), ("XYY", "YXY", "YYX", "XXX"))
    )
    brute_f = np.vdot(GHZ.amplitudes, m @ GHZ.amplitudes).real
    brute_p = sum(abs(m[i, j]) ** 2 for i in range(8) for j in range(8))
    assert mermin_expectation(rho)[0] == pytest.approx(4 * p, abs=1e-12) == pytest.approx(brute_m, abs=1e-12)
    assert fidelity(rho, GHZ) == pytest.approx(p + (1 - p) / 8, abs=1e-12) == pytest.approx(brute_f, abs=1e-12)
    assert purity_and_entropies(rho)[0] == pytest.approx(p * p + (1 - p * p) / 8, abs=1e-12)
    assert purity_and_entropies(rho)[0] == pytest.approx(brute_p, abs=1e-12)


@given(seeds)
@settings(max_examples=200, deadline=None)
def test_mermin_bounded(seed):
    assert abs(mermin_expectation(density_from_seed(seed))[0]) <= 4 + 1e-12


@given(seeds)
@settings(max_examples=200, deadline=None)
def test_mermin_local_bound_for_product_states(seed):
    rng = np.random.default_rng(seed)
    parts = [random_density_matrix(1, rng) for _ in range(3)]
    rho = tensor(tensor(parts[0], parts[1]), parts[2])
    assert abs(mermin_expectation(rho)[0]) <= 2 + 1e-12


# --- CHSH -------------------------------------------------------------------

def test_chsh_phi_plus_tsirelson():
    value, _ = optimal_chsh(bell_phi_plus().density())
    assert value == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_chsh_phi_plus_textbook_angles():
    # Phi+ correlator for equatorial analyzers is cos(a + b)
    rho = bell_phi_plus().density()
    assert correlator(rho, 0.3, 0.5) == pytest.approx(math.cos(0.8), abs=1e-12)
    angles = (0, math.pi / 2, -math.pi / 4, math.pi / 4)
    assert chsh_value(rho, angles) == pytest.approx(2 * math.sqrt(2), abs=1e-12)


@given(st.lists(st.floats(-math.pi, math.pi), min_size=4, max_size=4))
def test_chsh_product_state_is_local(angles):
    assert abs(chsh_value(ket("T1", "T1").density(), angles)) <= 2 + 1e-12


def test_chsh_werner_visibility():
    value, angles = optimal_chsh(werner_bell_state(0.947))
    assert value == pytest.approx(0.947 * 2 * math.sqrt(2), abs=1e-12)
    assert chsh_value(werner_bell_state(0.947), angles) == pytest.approx(value, abs=1e-12)


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_optimal_chsh_beats_random_angles(seed):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(2, rng)
    best, _ = optimal_chsh(rho)
    for _ in range(20):
        assert abs(chsh_value(rho, rng.uniform(-math.pi, math.pi, 4))) <= best + 1e-9


def test_chsh_requires_two_qubits():
    with pytest.raises(ValueError):
        chsh_value(MIXED, (0, 0, 0, 0))


# --- visibility fit ---------------------------------------------------------

PHASES = np.linspace(0, 2 * math.pi, 37)


def test_fit_unit_visibility():
    v, off, rms = fit_visibility(PHASES, fringe_probability(0, PHASES, 1.0))
    assert v == pytest.approx(1, abs=1e-12)
    assert abs(off) < 1e-12 and rms < 1e-9


def test_fit_lab_visibility():
    v, _, _ = fit_visibility(PHASES, fringe_probability(0, PHASES, 0.947))
    assert abs(v - 0.947) < 1e-6


def test_fit_flat_fringe():
    assert fit_visibility(PHASES, np.full_like(PHASES, 0.5)) == (0.0, 0.0, 0.0)


@given(st.floats(0.05, 1.0), st.floats(-3.0, 3.0))
def test_fit_recovers_offset(vis, phi0):
    v, off, _ = fit_visibility(PHASES, 0.5 * (1 + vis * np.cos(PHASES + phi0)))
    assert v == pytest.approx(vis, abs=1e-9)
    assert math.remainder(off - phi0, 2 * math.pi) == pytest.approx(0, abs=1e-8)


def test_fit_clamps_to_unit_visibility():
    c = 0.5 * (1 + 1.2 * np.cos(PHASES))
    v, _, _ = fit_visibility(PHASES, c)
    assert v == pytest.approx(1.0)


def test_fit_degenerate_inputs():
    with pytest.raises(ValueError):
        fit_visibility([0, 0.1, 0.2], [0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        fit_visibility(np.linspace(0, 2, 10), np.full(10, 0.5))


# --- report -----------------------------------------------------------------

@given(seeds)
@settings(max_examples=100, deadline=None)
def test_report_ranges(seed):
    r = MetricReport.from_state(density_from_seed(seed, rank=1 + seed % 8))
    assert -1e-12 <= r.fidelity <= 1 + 1e-12
    assert -1e-12 <= r.purity <= 1 + 1e-12
    assert -1e-12 <= r.linear_entropy <= 1 + 1e-12
    assert r.tripartite_negativity >= 0
    assert -0.5 - 1e-12 <= r.witness_expectation <= 0.5 + 1e-12


def test_report_violation_sigmas():
    r = MetricReport.from_state(noisy_ghz_model(0.672))
    assert r.mermin_violation_sigmas is None
    r.sigma["mermin"] = 0.05
    assert r.mermin_violation_sigmas == pytest.approx((4 * 0.672 - 2) / 0.05)
    d = r.to_dict()
    assert d["mermin_terms"] == list(r.mermin_terms)
