"""Monte Carlo comparison of the flexible and classic solvers on synthetic data.

For every ``(sigma, replicate)`` a dataset is drawn with seed
``base_seed + replicate`` and both solvers run from the same
``inits_per_run`` random starts.  The best start is the one with the lowest
relative fit; the single-init error is the one from start 0.
"""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classic import run_classic
from .flexible import run_flexible
from .init import random_init
from .metrics import relative_B_error, relative_fit
from .synth import SynthSpec, gen_dataset
from .tensor import SolverConfig

__all__ = [
    "SOLVERS",
    "DETAIL_COLUMNS",
    "SUMMARY_COLUMNS",
    "BenchmarkGrid",
    "InitResult",
    "best_of_inits",
    "run_replicate",
    "run_benchmark",
    "summarize",
    "write_detail_csv",
    "write_summary_csv",
]

SOLVERS = {"classic": run_classic, "flexible": run_flexible}
INIT_KEY = 1  # spawn-key branch for initializations, disjoint from data streams

DETAIL_COLUMNS = ["sigma", "replicate", "solver", "best_error", "single_init_error",
                  "best_fit", "iterations", "seconds"]
SUMMARY_COLUMNS = ["sigma", "solver", "metric", "mean", "median", "q20", "q80", "count"]
DEFAULT_SIGMAS = (5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5)


@dataclass(frozen=True)
class BenchmarkGrid:
    sigmas: tuple = DEFAULT_SIGMAS
    replicates: int = 50
    inits_per_run: int = 5
    solvers: tuple = ("classic", "flexible")
    base_seed: int = 0
    spec: SynthSpec = field(default_factory=SynthSpec)
    config: SolverConfig = field(default_factory=lambda: SolverConfig(rank=3))

    def __post_init__(self):
        if not self.sigmas or any(not s > 0 for s in self.sigmas):
            raise ValueError("sigmas must be a nonempty list of positive values")
        if self.replicates < 1 or self.inits_per_run < 1:
            raise ValueError("replicates and inits_per_run must be >= 1")
        unknown = set(self.solvers) - set(SOLVERS)
        if unknown or not self.solvers:
            raise ValueError(f"unknown solvers: {sorted(unknown)}")
        if self.config.rank != self.spec.rank:
            raise ValueError("solver rank must equal the synthetic rank")


@dataclass
class InitResult:
    init: int
    factors: object
    report: object
    fit: float


def best_of_inits(tensor, config: SolverConfig, solver: str, n_inits: int, seed: int):
    """Run ``solver`` from ``n_inits`` seeded starts.

    Start ``i`` is drawn from ``(seed, INIT_KEY, i)``, so different solvers
    given the same seed see identical starting factors.  Returns
    ``(best, results)`` where ``best`` has the lowest relative fit (ties go to
    the earlier start).
    """
    run = SOLVERS[solver]
    results = []
    for i in range(n_inits):
        init = random_init(tensor, config.rank, seed, INIT_KEY, i)
        factors, report = run(tensor, config, init)
        results.append(InitResult(i, factors, report, relative_fit(tensor, factors)))
    best = min(results, key=lambda res: (res.fit, res.init))
    return best, results


def run_replicate(grid: BenchmarkGrid, sigma: float, replicate: int) -> list[dict]:
    seed = grid.base_seed + replicate
    tensor, truth = gen_dataset(replace(grid.spec, sigma=sigma, seed=seed))
    rows = []
    for solver in grid.solvers:
        t0 = time.perf_counter()
        best, results = best_of_inits(tensor, grid.config, solver, grid.inits_per_run, seed)
        rows.append({
            "sigma": float(sigma),
            "replicate": int(replicate),
            "solver": solver,
            "best_error": relative_B_error(best.factors, truth),
            "single_init_error": relative_B_error(results[0].factors, truth),
            "best_fit": best.fit,
            "iterations": best.report.iterations,
            "seconds": time.perf_counter() - t0,
        })
    return rows


def available_processors() -> int:
    if hasattr(os, "sched_getaffinity"):
        return len(os.sched_getaffinity(0))
    return os.cpu_count() or 1


def _task(args):
    return run_replicate(*args)


def _sort_key(row):
    return (-row["sigma"], row["replicate"], row["solver"])


def run_benchmark(grid: BenchmarkGrid, jobs: int | None = None, progress=None) -> list[dict]:
    """All detail rows, sorted by (sigma descending, replicate, solver).

    Replicates run in up to ``jobs`` worker processes (default: available
    processors); ordering of the output does not depend on scheduling.
    """
    tasks = [(grid, s, rep) for s in grid.sigmas for rep in range(grid.replicates)]
    jobs = jobs or available_processors()
    rows = []
    if jobs <= 1:
        for t in tasks:
            rows.extend(_task(t))
            if progress:
                progress(len(rows) // len(grid.solvers), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for chunk in pool.map(_task, tasks):
                rows.extend(chunk)
                if progress:
                    progress(len(rows) // len(grid.solvers), len(tasks))
    return sorted(rows, key=_sort_key)


def summarize(rows: list[dict]) -> list[dict]:
    """Mean, median and 20/80% quantiles per (sigma, solver) for both error variants."""
    groups = {}
    for row in rows:
        groups.setdefault((row["sigma"], row["solver"]), []).append(row)
    out = []
    for (sigma, solver), grp in sorted(groups.items(), key=lambda kv: (-kv[0][0], kv[0][1])):
        for metric in ("best_error", "single_init_error"):
            vals = np.array([g[metric] for g in grp])
            out.append({
                "sigma": sigma,
                "solver": solver,
                "metric": metric,
                "mean": float(vals.mean()),
                "median": float(np.median(vals)),
                "q20": float(np.quantile(vals, 0.2)),
                "q80": float(np.quantile(vals, 0.8)),
                "count": int(vals.size),
            })
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(rows, columns, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def write_detail_csv(rows, path):
    _write_rows(rows, DETAIL_COLUMNS, path)


def write_summary_csv(summary, path):
    _write_rows(summary, SUMMARY_COLUMNS, path)
