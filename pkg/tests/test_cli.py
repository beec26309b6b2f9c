import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from timebin_ghz import io
from timebin_ghz.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NONCONVERGENCE,
    PipelineSpec,
    derive_seed,
    main,
    run_pipeline,
)
from timebin_ghz.photonic import ConfigError
from timebin_ghz.tomography import read_counts_csv


def test_seed_streams_are_distinct_and_stable():
    seeds = {derive_seed(7, s) for s in ("counts", "monte_carlo", "bootstrap")}
    assert len(seeds) == 3
    assert derive_seed(7, "counts") == derive_seed(7, "counts")
    assert derive_seed(7, "counts") != derive_seed(8, "counts")


def test_spec_requires_seed_for_stochastic_modes(tmp_path):
    with pytest.raises(ConfigError):
        PipelineSpec(mode="noisy-model", output_dir=tmp_path)
    with pytest.raises(ConfigError):
        PipelineSpec(mode="analyze-counts", output_dir=tmp_path, seed=1)
    with pytest.raises(ConfigError):
        PipelineSpec(mode="bogus", output_dir=tmp_path)
    with pytest.raises(ConfigError):
        PipelineSpec(mode="ideal", output_dir=tmp_path, seed=-1)
    PipelineSpec(mode="ideal", output_dir=tmp_path)


def test_ideal_report(tmp_path):
    report = run_pipeline(PipelineSpec(mode="ideal", output_dir=tmp_path))
    assert report.fidelity == pytest.approx(1, abs=1e-12)
    assert report.mermin == pytest.approx(4, abs=1e-12)
    assert report.tripartite_negativity == pytest.approx(1, abs=1e-9)
    assert report.witness_expectation == pytest.approx(-0.5, abs=1e-12)
    for name in ("counts.csv", "density.json", "density_figure.csv", "report.json", "fringe.csv", "run.json"):
        assert (tmp_path / name).exists()
    run = json.loads((tmp_path / "run.json").read_text())
    amps = np.array(run["amplitudes_real"]) + 1j * np.array(run["amplitudes_imag"])
    assert np.max(np.abs(amps - np.array([1, 0, 0, 0, 0, 0, 0, -1]) / math.sqrt(2))) < 1e-12


def test_emitted_files_reparse(tmp_path):
    run_pipeline(PipelineSpec(mode="ideal", output_dir=tmp_path))
    records, settings = read_counts_csv(tmp_path / "counts.csv")
    assert len(records) == 64
    rho = io.read_density_json(tmp_path / "density.json")
    assert np.allclose(io.read_density_figure_data(tmp_path / "density_figure.csv"), rho.entries, atol=1e-12)
    rows = io.read_fringe_csv(tmp_path / "fringe.csv")
    assert {r[0] for r in rows} == {"PLUS", "RIGHT", "MINUS", "LEFT"}
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["mermin_terms"] == pytest.approx([1, 1, 1, -1])


def test_noisy_model_fidelity(tmp_path):
    report = run_pipeline(PipelineSpec(mode="noisy-model", output_dir=tmp_path, seed=2024, pulses_per_setting=100_000))
    assert abs(report.fidelity - 0.713) <= 0.02


def test_analyze_counts_bit_identical(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    assert main(["report", "--mode", "noisy-model", "--seed", "99", "--pulses", "20000",
                 "--resamples", "3", "--out", str(first)]) == 0
    assert main(["analyze", "--counts", str(first / "counts.csv"), "--seed", "99",
                 "--resamples", "3", "--out", str(second)]) == 0
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    assert (first / "density.json").read_bytes() == (second / "density.json").read_bytes()


def test_reruns_are_bit_reproducible(tmp_path):
    for d in ("a", "b"):
        assert main(["report", "--mode", "noisy-model", "--seed", "5", "--pulses", "5000", "--out", str(tmp_path / d)]) == 0
    for name in ("counts.csv", "density.json", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_monte_carlo_mode(tmp_path):
    assert main(["report", "--mode", "monte-carlo", "--seed", "3", "--mc-samples", "200000",
                 "--pulses", "20000", "--out", str(tmp_path)]) == 0
    run = json.loads((tmp_path / "run.json").read_text())
    assert 0 < run["monte_carlo"]["ideal_fraction"] <= 1
    assert run["p_white"] == pytest.approx(run["monte_carlo"]["ideal_fraction"] * 0.947)
    assert run["fitted_mu_wcp_for_0.8_per_minute"] > 0


def test_simulate_then_tomograph_then_analyze(tmp_path, capsys):
    assert main(["simulate", "--mode", "noisy-model", "--seed", "1", "--pulses", "20000", "--out", str(tmp_path)]) == 0
    assert main(["tomograph", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "density.json").exists()
    assert main(["analyze", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "fidelity" in out and "log-likelihood" in out


def test_exit_code_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"eta_Z": 1}')
    assert main(["report", "--mode", "ideal", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    bad.write_text("{oops")
    assert main(["report", "--mode", "ideal", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["report", "--mode", "noisy-model", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_exit_code_no_coincidences(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"mu_wcp": 0}')
    code = main(["report", "--mode", "monte-carlo", "--seed", "1", "--config", str(cfg),
                 "--mc-samples", "1000", "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG


def test_exit_code_nonconvergence(tmp_path, capsys):
    code = main(["report", "--mode", "noisy-model", "--seed", "1", "--max-iter", "2", "--out", str(tmp_path)])
    assert code == EXIT_NONCONVERGENCE
    assert "did not converge" in capsys.readouterr().err


def test_exit_code_io(tmp_path, capsys):
    assert main(["analyze", "--counts", str(tmp_path / "missing.csv"), "--seed", "1", "--out", str(tmp_path)]) == EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["report", "--mode", "ideal", "--out", str(blocker / "sub")]) == EXIT_IO
    assert "I/O error" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "timebin_ghz", "report", "--mode", "ideal", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert out.returncode == 0
    assert "mermin" in out.stdout
