"""Density-matrix, report and plot-data files."""

from __future__ import annotations

import csv
import itertools
import json
from pathlib import Path

import numpy as np

from .quantum import DensityMatrix, MatrixLike, as_matrix

QUBIT_ORDER = ["A", "B", "C"]


def basis_labels(n_qubits: int = 3) -> list[str]:
    """'111', '112', ... with 1 = t1 and 2 = t2, in matrix index order."""
    return ["".join(p) for p in itertools.product("12", repeat=n_qubits)]


def write_density_json(path, rho: MatrixLike) -> None:
    m = as_matrix(rho)
    n = int(np.log2(m.shape[0]))
    doc = {
        "n_qubits": n,
        "qubit_order": QUBIT_ORDER[:n],
        "basis": basis_labels(n),
        "real": m.real.tolist(),
        "imag": m.imag.tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def read_density_json(path) -> DensityMatrix:
    doc = json.loads(Path(path).read_text())
    m = np.array(doc["real"], dtype=float) + 1j * np.array(doc["imag"], dtype=float)
    return DensityMatrix(m, int(doc["n_qubits"]))


def emit_density_figure_data(rho: MatrixLike, path) -> None:
    """One row per matrix element: row_label, col_label, real, imag."""
    m = as_matrix(rho)
    labels = basis_labels(int(np.log2(m.shape[0])))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_label", "col_label", "real", "imag"])
        for i, r in enumerate(labels):
            for j, c in enumerate(labels):
                w.writerow([r, c, repr(float(m[i, j].real)), repr(float(m[i, j].imag))])


def read_density_figure_data(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = int(round(np.log2(len(rows)) / 2))
    index = {l: k for k, l in enumerate(basis_labels(n))}
    m = np.zeros((2**n, 2**n), dtype=complex)
    for row in rows:
        m[index[row["row_label"]], index[row["col_label"]]] = float(row["real"]) + 1j * float(row["imag"])
    return m


def write_fringe_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bob_basis", "phase", "normalized_count"])
        for label, phase, value in rows:
            w.writerow([label, repr(phase), repr(value)])


def read_fringe_csv(path) -> list[tuple[str, float, float]]:
    with open(path, newline="") as fh:
        return [(r["bob_basis"], float(r["phase"]), float(r["normalized_count"])) for r in csv.DictReader(fh)]


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
