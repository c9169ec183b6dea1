"""Compiled vs pure-Python NNLS sweeps, plus one full flexible fit per backend.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Prints a table of median wall times.  The NNLS shapes are the ones the
flexible solver issues on the default synthetic problem (20 x 30 x 20, r=3):
one A update, one B_k update, one D_k update.
"""
import argparse
import statistics
import time

import numpy as np

from flexparafac2 import linalg
from flexparafac2.flexible import run_flexible
from flexparafac2.init import random_init
from flexparafac2.synth import SynthSpec, gen_dataset
from flexparafac2.tensor import SolverConfig


def _problems(rng, r=3):
    out = {}
    for name, rows, inner in (("A update (20 x 3)", 20, 50),
                              ("B_k update (30 x 3)", 30, 50),
                              ("D_k update (1 x 3)", 1, 50),
                              ("wide (2000 x 8)", 2000, 50)):
        rr = 8 if name.startswith("wide") else r
        F = rng.normal(size=(rr + 5, rr))
        gram = F.T @ F
        cross = rng.normal(size=(rows, rr + 5)) @ F
        out[name] = (gram, cross, np.abs(rng.normal(size=(rows, rr))), inner)
    return out


def _time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-full", action="store_true", help="skip the full-solver timing")
    args = ap.parse_args()

    backends = linalg.available_backends()
    previous = linalg.get_backend()
    rng = np.random.default_rng(0)
    problems = _problems(rng)
    print(f"backends: {', '.join(backends)}")
    header = f"{'case':<24}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    try:
        for name, (gram, cross, x0, inner) in problems.items():
            row = []
            for b in backends:
                linalg.set_backend(b)
                row.append(_time(lambda: linalg._nnls_raw(gram, cross, x0, inner), args.repeat))
            line = f"{name:<24}" + "".join(f"{t * 1e6:>12.1f}us" for t in row)
            if len(row) == 2:
                line += f"{row[1] / row[0]:>9.1f}x"
            print(line)

        if not args.no_full:
            tensor, _ = gen_dataset(SynthSpec(sigma=1e-3, seed=0))
            config = SolverConfig(rank=3, max_iter=200)
            init = random_init(tensor, 3, 0)
            row = []
            for b in backends:
                linalg.set_backend(b)
                row.append(_time(lambda: run_flexible(tensor, config, init), 3))
            line = f"{'flexible, 200 iters':<24}" + "".join(f"{t:>13.2f}s" for t in row)
            if len(row) == 2:
                line += f"{row[1] / row[0]:>9.1f}x"
            print(line)
    finally:
        linalg.set_backend(previous)


if __name__ == "__main__":
    main()
