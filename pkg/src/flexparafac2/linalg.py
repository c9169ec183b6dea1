"""Numerical kernels: nonnegative least squares, orthogonal Procrustes, Khatri-Rao.

The NNLS sweeps run in a compiled extension when it is importable and fall
back to vectorized NumPy otherwise.  ``set_backend`` switches explicitly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _pykernels
from .tensor import ColumnMismatch, ShapeMismatch

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = [
    "NnlsProblem",
    "RankDeficientWarning",
    "nnls",
    "nnls_objective",
    "procrustes",
    "khatri_rao",
    "available_backends",
    "get_backend",
    "set_backend",
]

STAGNATION_TOL = 1e-10
RANK_DEFICIENT_RTOL = 1e-12

_backend = "compiled" if _ckernels is not None else "python"


def available_backends() -> list[str]:
    return ["compiled", "python"] if _ckernels is not None else ["python"]


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Select the NNLS backend ("compiled" or "python"); returns the previous one."""
    global _backend
    if name not in available_backends():
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    previous, _backend = _backend, name
    return previous


def _sweeps_impl():
    return _ckernels.nnls_sweeps if _backend == "compiled" else _pykernels.nnls_sweeps


class RankDeficientWarning(RuntimeWarning):
    """Procrustes target is rank deficient; the maximizer is not unique."""


@dataclass
class NnlsProblem:
    """Normal-equations form of ``min_{X >= 0} ||T - X F^T||^2``.

    ``gram`` is ``F^T F`` (r, r); ``cross`` is ``T F`` (q, r), one row per
    independent row problem; ``x0`` (q, r) is the nonnegative warm start.
    """

    gram: np.ndarray
    cross: np.ndarray
    x0: np.ndarray | None = None

    def __post_init__(self):
        self.gram = np.ascontiguousarray(self.gram, dtype=np.float64)
        self.cross = np.ascontiguousarray(np.atleast_2d(self.cross), dtype=np.float64)
        r = self.gram.shape[0]
        if self.gram.shape != (r, r) or self.cross.shape[1] != r:
            raise ShapeMismatch(
                f"gram {self.gram.shape} and cross {self.cross.shape} are inconsistent"
            )
        if not np.allclose(self.gram, self.gram.T, rtol=0, atol=1e-10 * max(1.0, np.abs(self.gram).max())):
            raise ValueError("gram must be symmetric")
        if self.x0 is None:
            self.x0 = np.zeros_like(self.cross)
        else:
            self.x0 = np.ascontiguousarray(self.x0, dtype=np.float64)
            if self.x0.shape != self.cross.shape:
                raise ShapeMismatch(f"x0 has shape {self.x0.shape}, expected {self.cross.shape}")
            if np.any(self.x0 < 0):
                raise ValueError("warm start must be nonnegative")


def nnls_objective(problem: NnlsProblem, X: np.ndarray) -> float:
    """``0.5 * tr(X G X^T) - tr(cross X^T)``."""
    return float(0.5 * np.vdot(X @ problem.gram, X) - np.vdot(problem.cross, X))


def nnls(problem: NnlsProblem, inner_iters: int = 50, on_sweep=None) -> np.ndarray:
    """Solve a row-batched NNLS problem by cyclic coordinate descent.

    Each coordinate step is the exact one-variable minimizer clipped at zero,
    so the objective never increases.  Sweeps stop after ``inner_iters`` or
    when the largest entry change drops below ``1e-10 * (1 + max|X|)``.
    Variables whose gram diagonal is zero are set to 0.

    Parameters
    ----------
    problem : NnlsProblem
    inner_iters : int
        Maximum number of full sweeps over the columns.
    on_sweep : callable, optional
        Called as ``on_sweep(X)`` after each sweep, with the working matrix.

    Returns
    -------
    X : (q, r) ndarray, elementwise nonnegative
    """
    X = np.array(problem.x0, dtype=np.float64, order="C", copy=True)
    if inner_iters < 1:
        raise ValueError("inner_iters must be >= 1")
    hook = (lambda: on_sweep(X)) if on_sweep is not None else None
    _sweeps_impl()(problem.gram, problem.cross, X, int(inner_iters), STAGNATION_TOL, hook)
    return X


def _nnls_raw(gram, cross, x0, inner_iters):
    """Solver-internal NNLS without validation; ``x0`` is copied."""
    X = np.array(x0, dtype=np.float64, order="C", copy=True)
    _sweeps_impl()(
        np.ascontiguousarray(gram), np.ascontiguousarray(cross), X,
        int(inner_iters), STAGNATION_TOL, None,
    )
    return X


def _procrustes(M: np.ndarray) -> tuple[np.ndarray, bool]:
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    r = M.shape[1]
    deficient = bool(s.size == 0 or s[-1] < RANK_DEFICIENT_RTOL * s[0]) if r else False
    return U @ Vt, deficient


def procrustes(M: np.ndarray) -> np.ndarray:
    """Orthonormal-column ``P`` maximizing ``trace(P^T M)``.

    ``P = U V^T`` from the thin SVD of ``M`` (m, r) with ``m >= r``.  A
    :class:`RankDeficientWarning` is emitted when the smallest singular value
    is below ``1e-12`` times the largest; ``P`` is still returned.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        raise ShapeMismatch(f"procrustes needs an (m, r) matrix with m >= r, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("procrustes input must be finite")
    P, deficient = _procrustes(M)
    if deficient:
        warnings.warn("rank-deficient Procrustes target; solution is not unique",
                      RankDeficientWarning, stacklevel=2)
    return P


def khatri_rao(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; row ``i * b + j`` holds ``X[i] * Y[j]``."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ColumnMismatch(f"column counts differ: {X.shape} vs {Y.shape}")
    return (X[:, None, :] * Y[None, :, :]).reshape(-1, X.shape[1])
