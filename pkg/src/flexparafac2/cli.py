"""Command-line interface: ``simulate``, ``decompose`` and ``benchmark``.

Exit codes: 0 success, 1 runtime or solver failure, 2 invalid input or config.
Only explicit flags are read; the environment is never consulted.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .benchmark import (
    DEFAULT_SIGMAS,
    SOLVERS,
    BenchmarkGrid,
    best_of_inits,
    run_benchmark,
    summarize,
    write_detail_csv,
    write_summary_csv,
)
from .metrics import relative_B_error
from .synth import SynthSpec, gen_dataset
from .tensor import Parafac2Error, SolverConfig

EXIT_OK, EXIT_FAILURE, EXIT_INVALID = 0, 1, 2


class InvalidInput(Exception):
    """Bad user input; maps to exit code 2."""


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _float_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_spec_args(p, with_sigma=True):
    p.add_argument("--n", type=_positive_int, default=20, help="rows per slice (default 20)")
    p.add_argument("--m", type=_positive_int, default=30, help="columns per slice (default 30)")
    p.add_argument("--K", type=_positive_int, default=20, help="number of slices (default 20)")
    p.add_argument("--rank", type=_positive_int, default=3)
    if with_sigma:
        p.add_argument("--sigma", type=float, default=0.0, help="noise standard deviation")
    p.add_argument("--shift-step", type=int, default=1)


def _add_solver_args(p):
    p.add_argument("--max-iter", type=_positive_int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8, help="relative objective decrease")
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--mu-growth", type=float, default=1.02)
    p.add_argument("--mu-cap", type=float, default=10.0)
    p.add_argument("--inits", type=_positive_int, default=5, help="random starts (best kept)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flexparafac2",
        description="Nonnegative flexible PARAFAC2, classic PARAFAC2 and a synthetic benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic shifted-PARAFAC dataset (P2RT)")
    p.add_argument("out_path")
    _add_spec_args(p)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--force", action="store_true", help="overwrite existing files")

    p = sub.add_parser("decompose", help="fit a P2RT dataset and write factor CSVs")
    p.add_argument("data_path")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--rank", type=_positive_int, required=True)
    p.add_argument("--solver", choices=sorted(SOLVERS), default="flexible")
    p.add_argument("--seed", type=_seed, default=0)
    _add_solver_args(p)
    p.add_argument("--force", action="store_true", help="overwrite existing output files")

    p = sub.add_parser("benchmark", help="Monte Carlo comparison of the solvers")
    p.add_argument("out_path", help="detail CSV; the summary goes to <stem>.summary.csv")
    p.add_argument("--summary-out", default=None)
    p.add_argument("--sigmas", type=_float_list, default=DEFAULT_SIGMAS)
    p.add_argument("--replicates", type=_positive_int, default=50)
    p.add_argument("--solvers", default="classic,flexible")
    p.add_argument("--base-seed", type=_seed, default=0)
    p.add_argument("--jobs", type=_positive_int, default=None,
                   help="worker processes (default: available processors)")
    _add_spec_args(p, with_sigma=False)
    _add_solver_args(p)
    p.add_argument("--force", action="store_true")
    return parser


def _config(args, rank, seed=0):
    try:
        return SolverConfig(rank=rank, max_iter=args.max_iter, rel_tol=args.tol,
                            snr_db=args.snr_db, mu_growth=args.mu_growth,
                            mu_cap=args.mu_cap, seed=seed)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc


def cmd_simulate(args, out=sys.stdout):
    try:
        spec = SynthSpec(n=args.n, m=args.m, K=args.K, rank=args.rank, sigma=args.sigma,
                         seed=args.seed, shift_step=args.shift_step)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    path = Path(args.out_path)
    tpath = io.truth_path(path)
    for p in (path, tpath):
        if p.exists() and not args.force:
            raise io.RefusedOverwrite(f"{p} exists; use --force to overwrite")
    tensor, truth = gen_dataset(spec)
    io.write_tensor(tensor, path, force=True)
    io.write_truth(truth, tpath, force=True)
    print(f"wrote {path} and {tpath} (seed {spec.seed})", file=out)
    return EXIT_OK


def _write_report_csv(report, solver, K, path):
    header = ["iteration", "objective"]
    if solver == "flexible":
        header += [f"mu_{k + 1}" for k in range(K)]
        header += [f"coupling_{k + 1}" for k in range(K)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, obj in enumerate(report.objective_trace):
            row = [str(i + 1), io.format_float(obj)]
            if solver == "flexible":
                row += [io.format_float(v) for v in report.mu_trace[i]]
                row += [io.format_float(v) for v in report.coupling_trace[i]]
            w.writerow(row)


def _write_residuals_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slice", "fit_residual", "coupling_residual"])
        for k, (f, c) in enumerate(zip(report.fit_residuals, report.coupling_residuals)):
            w.writerow([str(k + 1), io.format_float(f), io.format_float(c)])


def cmd_decompose(args, out=sys.stdout):
    try:
        tensor = io.read_tensor(args.data_path)
    except FileNotFoundError as exc:
        raise InvalidInput(f"cannot read {args.data_path}: {exc.strerror}") from exc
    config = _config(args, args.rank, args.seed)
    if args.rank > min(tensor.slice_widths):
        raise InvalidInput(f"rank {args.rank} exceeds the narrowest slice width "
                           f"{min(tensor.slice_widths)}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = ["A.csv", "C.csv", "Bstar.csv", "report.csv", "residuals.csv", "run.json"]
    names += [f"{p}_{k + 1}.csv" for p in ("B", "P") for k in range(tensor.K)]
    existing = [n for n in names if (out_dir / n).exists()]
    if existing and not args.force:
        raise io.RefusedOverwrite(f"{out_dir} already holds {existing[0]}; use --force")

    t0 = time.perf_counter()
    best, results = best_of_inits(tensor, config, args.solver, args.inits, args.seed)
    wall = time.perf_counter() - t0
    f, report = best.factors, best.report

    io.write_matrix_csv(f.A, out_dir / "A.csv")
    io.write_matrix_csv(f.C, out_dir / "C.csv")
    io.write_matrix_csv(f.Bstar, out_dir / "Bstar.csv")
    for k in range(tensor.K):
        io.write_matrix_csv(f.B[k], out_dir / f"B_{k + 1}.csv")
        io.write_matrix_csv(f.P[k], out_dir / f"P_{k + 1}.csv")
    _write_report_csv(report, args.solver, tensor.K, out_dir / "report.csv")
    _write_residuals_csv(report, out_dir / "residuals.csv")

    meta = {
        "data_path": str(args.data_path),
        "solver": args.solver,
        "config": {
            "rank": config.rank, "max_iter": config.max_iter, "rel_tol": config.rel_tol,
            "snr_db": config.snr_db, "mu_init_factor": config.mu_init_factor,
            "mu_growth": config.mu_growth, "mu_cap": config.mu_cap,
            "nnls_inner_iters": config.nnls_inner_iters, "seed": config.seed,
            "inits": args.inits,
        },
        "best_init": best.init,
        "relative_fit": best.fit,
        "init_fits": [r.fit for r in results],
        "iterations": report.iterations,
        "termination": report.termination.value,
        "wall_seconds": wall,
    }
    tpath = io.truth_path(args.data_path)
    if tpath.exists():
        try:
            meta["relative_B_error"] = relative_B_error(f, io.read_truth(tpath))
        except (io.ParseError, ValueError):
            pass
    with open(out_dir / "run.json", "w", newline="\n") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    print(f"{args.solver}: relative fit {best.fit:.3e} after {report.iterations} iterations "
          f"({report.termination.value}); best of {args.inits} starts", file=out)
    return EXIT_OK


def cmd_benchmark(args, out=sys.stdout):
    solvers = tuple(s.strip() for s in args.solvers.split(",") if s.strip())
    try:
        spec = SynthSpec(n=args.n, m=args.m, K=args.K, rank=args.rank,
                         shift_step=args.shift_step)
        grid = BenchmarkGrid(sigmas=tuple(args.sigmas), replicates=args.replicates,
                             inits_per_run=args.inits, solvers=solvers,
                             base_seed=args.base_seed, spec=spec,
                             config=_config(args, args.rank))
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    path = Path(args.out_path)
    summary_path = Path(args.summary_out) if args.summary_out else path.with_suffix(".summary.csv")
    for p in (path, summary_path):
        if p.exists() and not args.force:
            raise io.RefusedOverwrite(f"{p} exists; use --force to overwrite")

    def progress(done, total):
        print(f"\r{done}/{total} replicates", end="", file=sys.stderr, flush=True)

    rows = run_benchmark(grid, jobs=args.jobs, progress=progress)
    print(file=sys.stderr)
    summary = summarize(rows)
    write_detail_csv(rows, path)
    write_summary_csv(summary, summary_path)
    for s in summary:
        print(f"sigma={s['sigma']:<8g} {s['solver']:<9} {s['metric']:<18} "
              f"mean={s['mean']:.3e} median={s['median']:.3e} "
              f"q20={s['q20']:.3e} q80={s['q80']:.3e}", file=out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "decompose": cmd_decompose, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except (InvalidInput, io.ParseError, io.RefusedOverwrite) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Parafac2Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
