#!/usr/bin/env python3
"""Compare the numba kernels against their pure-numpy counterparts.

Kernel timings run in-process. The end-to-end timings (one MLE fit, one
Monte Carlo run) start a fresh interpreter per backend, because the backend is
fixed at import time by TIMEBIN_GHZ_DISABLE_JIT.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np
import numba

from timebin_ghz import _kernels as k


def best_of(fn, *args, repeat=5, number=20):
    fn(*args)  # warm-up, includes compilation for jitted functions
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn(*args)
        times.append((time.perf_counter() - t0) / number)
    return min(times)


def kernel_table():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    m = g @ g.conj().T
    kets = np.ascontiguousarray(rng.normal(size=(64, 8)) + 1j * rng.normal(size=(64, 8)))
    w = rng.normal(size=64)
    u = rng.random((1 << 16, k.MC_COLUMNS))
    tally_args = (u, 0.004, 0.004, 0.17, 0.15, 0.34, 1.6e-7)

    cases = [
        ("quadratic_forms (64 kets)", k.quadratic_forms_numpy, k.quadratic_forms_loop, (m, kets), 2000),
        ("weighted_outer_sum (64 kets)", k.weighted_outer_sum_numpy, k.weighted_outer_sum_loop, (w, kets), 2000),
        ("tally_events (65536 samples)", k.tally_events_numpy, k.tally_events_loop, tally_args, 5),
    ]
    print(f"{'kernel':<32}{'numpy':>14}{'numba':>14}{'speedup':>10}")
    for name, np_fn, loop_fn, args, number in cases:
        jit_fn = numba.njit(**k.JIT_OPTIONS)(loop_fn)
        t_np = best_of(np_fn, *args, number=number)
        t_nb = best_of(jit_fn, *args, number=number)
        print(f"{name:<32}{t_np * 1e6:>11.1f} us{t_nb * 1e6:>11.1f} us{t_np / t_nb:>9.1f}x")


END_TO_END = """
import time
from timebin_ghz.photonic import ExperimentConfig, noisy_ghz_model, simulate_higher_order_fidelity
from timebin_ghz.tomography import settings_64, simulate_counts, mle_reconstruct
s = settings_64()
recs = simulate_counts(noisy_ghz_model(0.672), s, 100000, ExperimentConfig(), 1)
mle_reconstruct(recs[:], s)  # warm-up
t0 = time.perf_counter(); fit = mle_reconstruct(recs, s); t_mle = time.perf_counter() - t0
simulate_higher_order_fidelity(ExperimentConfig(), 1000, 1)  # warm-up
t0 = time.perf_counter(); simulate_higher_order_fidelity(ExperimentConfig(), {n}, 1); t_mc = time.perf_counter() - t0
print(t_mle, fit.iterations, t_mc)
"""


def end_to_end(n_samples):
    print()
    print(f"{'backend':<10}{'MLE fit':>12}{'iterations':>12}{'Monte Carlo':>14}")
    for flag, name in (("1", "numpy"), ("0", "numba")):
        env = dict(os.environ, TIMEBIN_GHZ_DISABLE_JIT=flag)
        out = subprocess.run(
            [sys.executable, "-c", END_TO_END.format(n=n_samples)],
            env=env, capture_output=True, text=True, check=True,
        ).stdout.split()
        t_mle, iters, t_mc = float(out[0]), int(out[1]), float(out[2])
        print(f"{name:<10}{t_mle:>10.3f} s{iters:>12d}{t_mc:>12.3f} s")
    print(f"(Monte Carlo over {n_samples} samples)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--mc-samples", type=int, default=2_000_000)
    parser.add_argument("--kernels-only", action="store_true")
    args = parser.parse_args()
    print(f"numba {numba.__version__}, numpy {np.__version__}")
    kernel_table()
    if not args.kernels_only:
        end_to_end(args.mc_samples)


if __name__ == "__main__":
    main()
