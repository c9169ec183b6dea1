"""Unconstrained PARAFAC2 by alternating least squares.

Each outer iteration solves for every ``P_k`` by Procrustes, projects the
slices onto ``P_k`` and runs one CP-ALS pass on the projected ``n x r x K``
tensor.  No nonnegativity is imposed.
"""
from __future__ import annotations

import time

import numpy as np
import scipy.linalg

from .flexible import _check_ranks
from .linalg import _procrustes, khatri_rao
from .tensor import (
    Parafac2Factors,
    RaggedTensor,
    RunReport,
    ShapeMismatch,
    SolverConfig,
    Termination,
    fit_residuals,
    normalize_columns,
)

__all__ = [
    "update_projection_classic",
    "project_slices",
    "cp_als_pass",
    "cp_fit",
    "parafac2_objective",
    "run_classic",
]

RIDGE = 1e-12
INCREASE_RTOL = 1e-10


def update_projection_classic(M_k, A, c_k, Bstar) -> np.ndarray:
    """``P_k`` minimizing ``||M_k - A diag(c_k) Bstar^T P_k^T||`` over orthonormal columns."""
    return _procrustes(M_k.T @ (A * c_k) @ Bstar.T)[0]


def project_slices(tensor, P) -> np.ndarray:
    """Stack ``M_k P_k`` into an ``(n, r, K)`` array."""
    slices = tensor.slices if isinstance(tensor, RaggedTensor) else tensor
    if len(P) != len(slices):
        raise ShapeMismatch(f"{len(P)} projections for {len(slices)} slices")
    for k, (M, Pk) in enumerate(zip(slices, P)):
        if Pk.shape[0] != M.shape[1]:
            raise ShapeMismatch(f"P[{k}] has {Pk.shape[0]} rows, slice width is {M.shape[1]}")
    return np.stack([M @ Pk for M, Pk in zip(slices, P)], axis=2)


def _ls_solve(gram, cross):
    """Solve ``X gram = cross`` with a small ridge on the normal equations."""
    r = gram.shape[0]
    G = gram + RIDGE * np.trace(gram) / r * np.eye(r)
    try:
        return scipy.linalg.solve(G, cross.T, assume_a="pos", check_finite=False).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return np.linalg.lstsq(G, cross.T, rcond=None)[0].T


def cp_fit(Y, A, Bstar, C) -> float:
    R = Y - np.einsum("ip,jp,kp->ijk", A, Bstar, C)
    return float(np.vdot(R, R))


def cp_als_pass(Y, A, Bstar, C, normalize: bool = True):
    """One least-squares update each of ``A``, ``Bstar`` and ``C``, in that order.

    With ``normalize`` the columns of ``A`` and ``Bstar`` are rescaled to unit
    norm afterwards and the scale is moved into ``C``.
    """
    n, r, K = Y.shape
    Y1 = Y.transpose(0, 2, 1).reshape(n, K * r)   # column k*r + j
    Y2 = Y.transpose(1, 2, 0).reshape(r, K * n)   # column k*n + i
    Y3 = Y.transpose(2, 0, 1).reshape(K, n * r)   # column i*r + j

    A = _ls_solve((C.T @ C) * (Bstar.T @ Bstar), Y1 @ khatri_rao(C, Bstar))
    Bstar = _ls_solve((C.T @ C) * (A.T @ A), Y2 @ khatri_rao(C, A))
    C = _ls_solve((A.T @ A) * (Bstar.T @ Bstar), Y3 @ khatri_rao(A, Bstar))
    if normalize:
        A, a_norms = normalize_columns(A)
        Bstar, b_norms = normalize_columns(Bstar)
        C = C * (a_norms * b_norms)
    return A, Bstar, C


def parafac2_objective(tensor, A, C, P, Bstar) -> float:
    """``sum_k ||M_k - A D_k (P_k Bstar)^T||^2``."""
    total = 0.0
    for k, M in enumerate(tensor):
        R = M - (A * C[k]) @ (P[k] @ Bstar).T
        total += np.vdot(R, R)
    return float(total)


def run_classic(tensor: RaggedTensor, config: SolverConfig, init: Parafac2Factors | None = None,
                callback=None):
    """Fit unconstrained PARAFAC2.

    Only ``A``, ``C`` and ``Bstar`` of ``init`` are used; ``P_k`` is computed
    in the first step.  The returned ``B_k`` are materialized as ``P_k Bstar``,
    so the reported coupling residuals are zero.
    """
    t0 = time.perf_counter()
    r = config.rank
    _check_ranks(tensor, r)
    if init is None:
        from .init import random_init
        init = random_init(tensor, r, config.seed)
    init.check_shapes(tensor)
    A, C, Bstar = init.A.copy(), init.C.copy(), init.Bstar.copy()
    P = [p.copy() for p in init.P]
    report = RunReport()
    prev = None

    for it in range(1, config.max_iter + 1):
        for k, M in enumerate(tensor):
            P[k], deficient = _procrustes(M.T @ (A * C[k]) @ Bstar.T)
            report.rank_deficient_events += deficient
        Y = project_slices(tensor, P)
        A, Bstar, C = cp_als_pass(Y, A, Bstar, C)
        cur = parafac2_objective(tensor, A, C, P, Bstar)

        report.objective_trace.append(cur)
        report.iterations = it
        if callback is not None:
            callback(it, Parafac2Factors(A, C, [Pk @ Bstar for Pk in P], P, Bstar), None)
        if prev is not None:
            if cur > prev * (1 + INCREASE_RTOL):
                report.objective_increases.append((it, False))
            if abs(prev - cur) <= config.rel_tol * prev:
                report.termination = Termination.CONVERGED
                break
        if cur == 0.0:
            report.termination = Termination.CONVERGED
            break
        prev = cur

    factors = Parafac2Factors(A, C, [Pk @ Bstar for Pk in P], P, Bstar)
    report.fit_residuals = fit_residuals(tensor, factors)
    report.coupling_residuals = np.zeros(tensor.K)
    report.wall_seconds = time.perf_counter() - t0
    return factors, report
