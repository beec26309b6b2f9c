"""Command-line front end: simulate, tomograph, analyze, report.

Seeds: the user seed ``s`` is expanded as
``SeedSequence(s, spawn_key=(k,)).generate_state(1, uint64)[0]`` with
k = 0 for count simulation, 1 for the photon-number Monte Carlo and 2 for the
bootstrap base seed (resample i then uses base + i).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .metrics import SCALAR_METRICS, MetricReport
from .photonic import (
    ConfigError,
    ExperimentConfig,
    NoCoincidenceError,
    estimate_threefold_rate,
    fit_wcp_mean_photon,
    fringe_curves,
    ideal_ghz_output,
    noisy_ghz_model,
    simulate_higher_order_fidelity,
)
from .quantum import DensityMatrix
from .tomography import (
    MLEConvergenceError,
    MLEOptions,
    TomographyError,
    bootstrap_samples,
    efficiency_weights,
    expected_records,
    linear_inversion,
    mle_reconstruct,
    read_counts_csv,
    settings_64,
    simulate_counts,
    write_counts_csv,
)

log = logging.getLogger("timebin_ghz")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_IO = 4

MODES = ("ideal", "noisy-model", "monte-carlo", "analyze-counts")
STOCHASTIC_MODES = {"noisy-model", "monte-carlo", "analyze-counts"}
STREAMS = {"counts": 0, "monte_carlo": 1, "bootstrap": 2}

COUNTS_FILE = "counts.csv"
STATE_FILE = "state.json"
DENSITY_FILE = "density.json"
FIGURE_FILE = "density_figure.csv"
FRINGE_FILE = "fringe.csv"
REPORT_FILE = "report.json"
RUN_FILE = "run.json"


def derive_seed(seed: int, stream: str) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(STREAMS[stream],))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class PipelineSpec:
    mode: str
    output_dir: Path
    config_path: Path | None = None
    seed: int | None = None
    pulses_per_setting: int = 100_000
    bootstrap_resamples: int = 0
    p_white: float = 0.672
    counts_path: Path | None = None
    mc_samples: int = 1_000_000
    correct_efficiency: bool = True
    workers: int = 1
    max_iter: int = MLEOptions().max_iter

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.mode in STOCHASTIC_MODES and self.seed is None:
            raise ConfigError(f"--seed is required for mode {self.mode}")
        if self.mode == "analyze-counts" and self.counts_path is None:
            raise ConfigError("mode analyze-counts needs --counts")
        if self.pulses_per_setting < 1:
            raise ConfigError("--pulses must be >= 1")
        if self.bootstrap_resamples < 0 or self.bootstrap_resamples == 1:
            raise ConfigError("--resamples must be 0 or >= 2")
        if self.max_iter < 1:
            raise ConfigError("--max-iter must be >= 1")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")

    def load_config(self) -> ExperimentConfig:
        if self.config_path is None:
            return ExperimentConfig()
        return ExperimentConfig.from_json(self.config_path)


def _output_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def reconstruct(records, settings, config: ExperimentConfig, spec: PipelineSpec):
    weights = efficiency_weights(settings, config, spec.correct_efficiency)
    options = MLEOptions(max_iter=spec.max_iter)
    fit = mle_reconstruct(records, settings, options=options, weights=weights)
    report = MetricReport.from_state(fit.rho)
    if spec.bootstrap_resamples:
        names = list(SCALAR_METRICS)
        samples = bootstrap_samples(
            records,
            settings,
            spec.bootstrap_resamples,
            derive_seed(spec.seed, "bootstrap"),
            [SCALAR_METRICS[k] for k in names],
            options=options,
            weights=weights,
            workers=spec.workers,
            fit=fit,
        )
        report.sigma = {k: float(v) for k, v in zip(names, samples.std(axis=0, ddof=1))}
    return fit, report


def simulate_stage(spec: PipelineSpec, config: ExperimentConfig, out: Path) -> tuple[DensityMatrix, dict]:
    """Prepare the true state for the mode and write counts, state and fringe files."""
    settings = settings_64()
    meta: dict = {"mode": spec.mode}
    if spec.mode == "ideal":
        psi = ideal_ghz_output()
        rho = psi.density()
        records = expected_records(rho, settings, spec.pulses_per_setting)
        meta["amplitudes_real"] = psi.amplitudes.real.tolist()
        meta["amplitudes_imag"] = psi.amplitudes.imag.tolist()
    else:
        if spec.mode == "monte-carlo":
            mc = simulate_higher_order_fidelity(
                config, spec.mc_samples, derive_seed(spec.seed, "monte_carlo"), workers=spec.workers
            )
            p_white = mc.fidelity * config.interference_visibility
            meta["monte_carlo"] = {
                "ideal_fraction": mc.fidelity,
                "stderr": mc.stderr,
                "threefold_events": mc.n_threefold,
                "samples": mc.n_samples,
            }
        else:
            p_white = spec.p_white
        meta["p_white"] = p_white
        rho = noisy_ghz_model(p_white)
        records = simulate_counts(
            rho, settings, spec.pulses_per_setting, config, np.random.SeedSequence(derive_seed(spec.seed, "counts"))
        )
    meta["threefold_rate_per_minute"] = estimate_threefold_rate(config)
    meta["fitted_mu_wcp_for_0.8_per_minute"] = fit_wcp_mean_photon(config, 0.8)
    write_counts_csv(out / COUNTS_FILE, records, settings)
    io.write_density_json(out / STATE_FILE, rho)
    io.write_fringe_csv(out / FRINGE_FILE, fringe_curves(config.interference_visibility))
    return rho, meta


def tomograph_stage(spec: PipelineSpec, config: ExperimentConfig, out: Path, counts_path: Path):
    records, settings = read_counts_csv(counts_path)
    fit, report = reconstruct(records, settings, config, spec)
    lin = linear_inversion(records, settings, efficiency_weights(settings, config, spec.correct_efficiency))
    io.write_density_json(out / DENSITY_FILE, fit.rho)
    io.emit_density_figure_data(fit.rho, out / FIGURE_FILE)
    io.write_json(out / REPORT_FILE, report.to_dict())
    tomo = {
        "log_likelihood": fit.log_likelihood,
        "iterations": fit.iterations,
        "linear_inversion_min_eigenvalue": lin.min_eigenvalue,
        "linear_inversion_residual": lin.residual,
    }
    return fit, report, tomo


def run_pipeline(spec: PipelineSpec) -> MetricReport:
    """simulate -> tomograph -> report; writes every artifact into ``spec.output_dir``."""
    config = spec.load_config()
    out = _output_dir(spec.output_dir)
    started = time.perf_counter()
    if spec.mode == "analyze-counts":
        meta = {"mode": spec.mode, "counts": str(spec.counts_path)}
        _, report, meta["tomography"] = tomograph_stage(spec, config, out, spec.counts_path)
    elif spec.mode == "ideal":
        rho, meta = simulate_stage(spec, config, out)
        # exact state; no finite-sample reconstruction
        report = MetricReport.from_state(rho)
        io.write_density_json(out / DENSITY_FILE, rho)
        io.emit_density_figure_data(rho, out / FIGURE_FILE)
        io.write_json(out / REPORT_FILE, report.to_dict())
    else:
        _, meta = simulate_stage(spec, config, out)
        _, report, meta["tomography"] = tomograph_stage(spec, config, out, out / COUNTS_FILE)
    meta["seed"] = spec.seed
    meta["elapsed_s"] = time.perf_counter() - started
    io.write_json(out / RUN_FILE, meta)
    return report


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="ExperimentConfig JSON (defaults to the lab values)")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--pulses", type=int, default=100_000, help="integration pulses per setting")
    common.add_argument("--resamples", type=int, default=0, help="bootstrap resamples (0 disables)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--mode", choices=MODES, default="noisy-model")
    common.add_argument("--p-white", type=float, default=0.672, help="GHZ weight of the white-noise model")
    common.add_argument("--counts", type=Path, help="count CSV to read (tomograph/analyze-counts)")
    common.add_argument("--mc-samples", type=int, default=1_000_000)
    common.add_argument("--no-efficiency-correction", action="store_true")
    common.add_argument("--workers", type=int, default=1, help="threads for bootstrap and Monte Carlo")
    common.add_argument("--max-iter", type=int, default=MLEOptions().max_iter, help="MLE iteration cap")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="timebin-ghz", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="prepare the state and simulate the 64-setting counts")
    sub.add_parser("tomograph", parents=[common], help="maximum-likelihood reconstruction from a count file")
    sub.add_parser("analyze", parents=[common], help="metrics for a reconstructed density matrix")
    sub.add_parser("report", parents=[common], help="run the whole pipeline for --mode")
    return parser


def _spec_from_args(args, **overrides) -> PipelineSpec:
    fields = dict(
        mode=args.mode,
        output_dir=args.out,
        config_path=args.config,
        seed=args.seed,
        pulses_per_setting=args.pulses,
        bootstrap_resamples=args.resamples,
        p_white=args.p_white,
        counts_path=args.counts,
        mc_samples=args.mc_samples,
        correct_efficiency=not args.no_efficiency_correction,
        workers=args.workers,
        max_iter=args.max_iter,
    )
    fields.update(overrides)
    return PipelineSpec(**fields)


def _print_report(report: MetricReport) -> None:
    for key, value in report.to_dict().items():
        if key == "sigma":
            continue
        sigma = report.sigma.get(key)
        suffix = f" +/- {sigma:.4f}" if sigma is not None else ""
        if isinstance(value, list):
            value = "(" + ", ".join(f"{v:+.4f}" for v in value) + ")"
        elif isinstance(value, float):
            value = f"{value:.6f}"
        print(f"{key:>24}: {value}{suffix}")


def _dispatch(args) -> int:
    if args.command == "report":
        _print_report(run_pipeline(_spec_from_args(args)))
        return EXIT_OK

    if args.command == "simulate":
        if args.mode == "analyze-counts":
            raise ConfigError("simulate does not take mode analyze-counts")
        spec = _spec_from_args(args)
        config = spec.load_config()
        out = _output_dir(spec.output_dir)
        rho, meta = simulate_stage(spec, config, out)
        io.write_json(out / RUN_FILE, meta)
        if "amplitudes_real" in meta:
            amps = np.array(meta["amplitudes_real"]) + 1j * np.array(meta["amplitudes_imag"])
            print("post-selected amplitudes:", np.array2string(amps, precision=6))
        _print_report(MetricReport.from_state(rho))
        return EXIT_OK

    if args.command == "tomograph":
        if args.resamples and args.seed is None:
            raise ConfigError("--seed is required when --resamples > 0")
        counts = args.counts or args.out / COUNTS_FILE
        # without resampling the reconstruction draws no random numbers
        seed = 0 if args.seed is None else args.seed
        spec = _spec_from_args(args, mode="analyze-counts", seed=seed, counts_path=counts)
        _, report, tomo = tomograph_stage(spec, spec.load_config(), _output_dir(args.out), counts)
        print(f"log-likelihood {tomo['log_likelihood']:.6f} after {tomo['iterations']} iterations")
        _print_report(report)
        return EXIT_OK

    # analyze: a count file runs the analyze-counts pipeline, otherwise score out/density.json
    if args.counts is not None:
        _print_report(run_pipeline(_spec_from_args(args, mode="analyze-counts")))
        return EXIT_OK
    try:
        rho = io.read_density_json(args.out / DENSITY_FILE)
    except (KeyError, ValueError) as exc:
        raise TomographyError(f"cannot parse {args.out / DENSITY_FILE}: {exc}") from exc
    report = MetricReport.from_state(rho)
    io.write_json(args.out / REPORT_FILE, report.to_dict())
    _print_report(report)
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MLEConvergenceError as exc:
        where = f" (bootstrap resample {exc.resample_index})" if exc.resample_index is not None else ""
        print(f"maximum-likelihood fit did not converge{where}: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except NoCoincidenceError as exc:
        print(f"no coincidences: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TomographyError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
