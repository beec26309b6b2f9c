"""Hot inner loops, compiled with numba when available.

Set ``TIMEBIN_GHZ_DISABLE_JIT=1`` to force the pure-numpy implementations.
Both paths consume identical inputs and return identical results; random
numbers are always drawn by numpy outside the kernels.
"""

import os

import numpy as np

_DISABLE = os.environ.get("TIMEBIN_GHZ_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not _DISABLE
BACKEND = "numba" if USE_NUMBA else "numpy"

JIT_OPTIONS = {"nogil": True, "cache": True, "fastmath": False}

# Column layout of the uniform draws consumed per Monte Carlo sample.
MC_COLUMNS = 15
(
    COL_N_PAIR,
    COL_N_WCP,
    COL_BIN_PAIR1,
    COL_BIN_PAIR2,
    COL_BIN_WCP1,
    COL_BIN_WCP2,
    COL_DET_SIGNAL1,
    COL_DET_SIGNAL2,
    COL_DET_IDLER1,
    COL_DET_IDLER2,
    COL_DET_WCP1,
    COL_DET_WCP2,
    COL_DARK_A,
    COL_DARK_B,
    COL_DARK_C,
) = range(MC_COLUMNS)


# --- quadratic forms over a batch of kets -----------------------------------

def quadratic_forms_numpy(m, kets):
    return np.einsum("si,ij,sj->s", kets.conj(), m, kets).real


def quadratic_forms_loop(m, kets):
    n_s, d = kets.shape
    out = np.empty(n_s)
    for s in range(n_s):
        acc = 0.0 + 0.0j
        for i in range(d):
            row = 0.0 + 0.0j
            for j in range(d):
                row += m[i, j] * kets[s, j]
            acc += np.conj(kets[s, i]) * row
        out[s] = acc.real
    return out


def weighted_outer_sum_numpy(g, kets):
    return np.einsum("s,si,sj->ij", g, kets, kets.conj())


def weighted_outer_sum_loop(g, kets):
    n_s, d = kets.shape
    out = np.zeros((d, d), dtype=np.complex128)
    for s in range(n_s):
        gs = g[s]
        for i in range(d):
            a = gs * kets[s, i]
            for j in range(d):
                out[i, j] += a * np.conj(kets[s, j])
    return out


# --- photon-number Monte Carlo tally ----------------------------------------

def tally_events_numpy(u, p2_pair, p2_wcp, det_a, det_b, det_c, dark):
    """Return (three-fold coincidences, ideal-pattern coincidences)."""
    n_pair = np.where(u[:, COL_N_PAIR] < p2_pair, 2, 1)
    n_wcp = np.where(u[:, COL_N_WCP] < p2_wcp, 2, 1)
    # time bin t2 <=> draw < 1/2; photons in t2 cross the switch
    pair_t2 = u[:, [COL_BIN_PAIR1, COL_BIN_PAIR2]] < 0.5
    wcp_t2 = u[:, [COL_BIN_WCP1, COL_BIN_WCP2]] < 0.5
    pair_present = np.stack([np.ones(len(u), bool), n_pair == 2], axis=1)
    wcp_present = np.stack([np.ones(len(u), bool), n_wcp == 2], axis=1)

    # signal photons enter at B': t1 -> B, t2 -> A; WCP photons enter at A': t1 -> A, t2 -> B
    sig_to_a = pair_present & pair_t2
    sig_to_b = pair_present & ~pair_t2
    wcp_to_a = wcp_present & ~wcp_t2
    wcp_to_b = wcp_present & wcp_t2

    det_sig = u[:, [COL_DET_SIGNAL1, COL_DET_SIGNAL2]]
    det_wcp = u[:, [COL_DET_WCP1, COL_DET_WCP2]]
    det_idl = u[:, [COL_DET_IDLER1, COL_DET_IDLER2]]

    click_a = (
        np.any(sig_to_a & (det_sig < det_a), axis=1)
        | np.any(wcp_to_a & (det_wcp < det_a), axis=1)
        | (u[:, COL_DARK_A] < dark)
    )
    click_b = (
        np.any(sig_to_b & (det_sig < det_b), axis=1)
        | np.any(wcp_to_b & (det_wcp < det_b), axis=1)
        | (u[:, COL_DARK_B] < dark)
    )
    click_c = np.any(pair_present & (det_idl < det_c), axis=1) | (u[:, COL_DARK_C] < dark)
    threefold = click_a & click_b & click_c

    ideal = (n_pair == 1) & (n_wcp == 1) & (pair_t2[:, 0] == wcp_t2[:, 0])
    return int(np.count_nonzero(threefold)), int(np.count_nonzero(threefold & ideal))


def tally_events_loop(u, p2_pair, p2_wcp, det_a, det_b, det_c, dark):
    n3 = 0
    n_ideal = 0
    for k in range(u.shape[0]):
        n_pair = 2 if u[k, COL_N_PAIR] < p2_pair else 1
        n_wcp = 2 if u[k, COL_N_WCP] < p2_wcp else 1
        click_a = u[k, COL_DARK_A] < dark
        click_b = u[k, COL_DARK_B] < dark
        click_c = u[k, COL_DARK_C] < dark
        for p in range(n_pair):
            t2 = u[k, COL_BIN_PAIR1 + p] < 0.5
            det = u[k, COL_DET_SIGNAL1 + p]
            if t2:
                click_a = click_a or det < det_a
            else:
                click_b = click_b or det < det_b
            click_c = click_c or u[k, COL_DET_IDLER1 + p] < det_c
        for w in range(n_wcp):
            t2 = u[k, COL_BIN_WCP1 + w] < 0.5
            det = u[k, COL_DET_WCP1 + w]
            if t2:
                click_b = click_b or det < det_b
            else:
                click_a = click_a or det < det_a
        if click_a and click_b and click_c:
            n3 += 1
            if n_pair == 1 and n_wcp == 1:
                if (u[k, COL_BIN_PAIR1] < 0.5) == (u[k, COL_BIN_WCP1] < 0.5):
                    n_ideal += 1
    return n3, n_ideal


if USE_NUMBA:
    quadratic_forms = numba.njit(**JIT_OPTIONS)(quadratic_forms_loop)
    weighted_outer_sum = numba.njit(**JIT_OPTIONS)(weighted_outer_sum_loop)
    tally_events = numba.njit(**JIT_OPTIONS)(tally_events_loop)
else:
    quadratic_forms = quadratic_forms_numpy
    weighted_outer_sum = weighted_outer_sum_numpy
    tally_events = tally_events_numpy
