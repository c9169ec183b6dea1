"""Ragged third-order tensors and PARAFAC2 factor sets.

A ragged tensor is a list of K slices ``M_k`` of shape ``(n, m_k)`` sharing
the first (spectral) dimension.  The model for slice ``k`` is
``A @ diag(C[k]) @ B_k.T``; ``C`` stacks the diagonals of ``D_k`` in rows.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Parafac2Error",
    "ShapeMismatch",
    "NonFinite",
    "EmptyTensor",
    "ZeroTensor",
    "DegenerateFactor",
    "ColumnMismatch",
    "RaggedTensor",
    "Parafac2Factors",
    "SolverConfig",
    "Termination",
    "RunReport",
    "validate",
    "reconstruct_slice",
    "fit_residuals",
    "normalize_columns",
]


class Parafac2Error(ValueError):
    """Base class for invalid inputs and degenerate problems."""


class ShapeMismatch(Parafac2Error):
    pass


class NonFinite(Parafac2Error):
    pass


class EmptyTensor(Parafac2Error):
    pass


class ZeroTensor(Parafac2Error):
    pass


class DegenerateFactor(Parafac2Error):
    pass


class ColumnMismatch(Parafac2Error):
    pass


class RaggedTensor:
    """K real slices of shape ``(n, m_k)``.

    The slices are copied to read-only float64 arrays and validated on
    construction.  ``total_norm`` is computed once here and cached.
    """

    __slots__ = ("_slices", "_n", "_widths", "_total_norm")

    def __init__(self, slices: Sequence[np.ndarray]):
        slices = [np.array(s, dtype=np.float64, copy=True) for s in slices]
        for s in slices:
            if s.ndim != 2:
                raise ShapeMismatch(f"slices must be 2-D, got shape {s.shape}")
            s.setflags(write=False)
        self._slices = tuple(slices)
        self._n = slices[0].shape[0] if slices else 0
        self._widths = tuple(s.shape[1] for s in slices)
        validate(self)
        self._total_norm = float(np.sqrt(sum(np.vdot(s, s) for s in slices)))

    @property
    def slices(self) -> tuple[np.ndarray, ...]:
        return self._slices

    @property
    def n(self) -> int:
        return self._n

    @property
    def slice_widths(self) -> tuple[int, ...]:
        return self._widths

    @property
    def K(self) -> int:
        return len(self._slices)

    @property
    def total_norm(self) -> float:
        return self._total_norm

    def __len__(self):
        return len(self._slices)

    def __getitem__(self, k):
        return self._slices[k]

    def __iter__(self):
        return iter(self._slices)

    def __repr__(self):
        return f"RaggedTensor(n={self.n}, K={self.K}, widths={list(self._widths)})"

    def scaled(self, factor: float) -> "RaggedTensor":
        return RaggedTensor([s * factor for s in self._slices])

    def equals(self, other: "RaggedTensor") -> bool:
        """Bit-exact equality of shapes and entries."""
        if self.slice_widths != other.slice_widths or self.n != other.n:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self, other))


def validate(tensor) -> None:
    """Raise if ``tensor`` violates a RaggedTensor invariant.

    Accepts a RaggedTensor or any sequence of 2-D arrays.
    """
    slices = list(tensor.slices if isinstance(tensor, RaggedTensor) else tensor)
    if len(slices) == 0:
        raise EmptyTensor("tensor has no slices")
    n = np.shape(slices[0])[0]
    if n == 0:
        raise EmptyTensor("slices have zero rows")
    for k, s in enumerate(slices):
        s = np.asarray(s)
        if s.ndim != 2:
            raise ShapeMismatch(f"slice {k} is not a matrix (shape {s.shape})")
        if s.shape[0] != n:
            raise ShapeMismatch(f"slice {k} has {s.shape[0]} rows, expected {n}")
        if s.shape[1] == 0:
            raise EmptyTensor(f"slice {k} has zero columns")
        if not np.all(np.isfinite(s)):
            raise NonFinite(f"slice {k} contains NaN or Inf")


@dataclass
class Parafac2Factors:
    """PARAFAC2 factors: ``A`` (n, r), ``C`` (K, r), ``B``/``P`` lists of (m_k, r),
    ``Bstar`` (r, r)."""

    A: np.ndarray
    C: np.ndarray
    B: list
    P: list
    Bstar: np.ndarray

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def K(self) -> int:
        return self.C.shape[0]

    def copy(self) -> "Parafac2Factors":
        return Parafac2Factors(
            self.A.copy(),
            self.C.copy(),
            [b.copy() for b in self.B],
            [p.copy() for p in self.P],
            self.Bstar.copy(),
        )

    def check_shapes(self, tensor: RaggedTensor) -> None:
        r = self.rank
        if self.A.shape != (tensor.n, r):
            raise ShapeMismatch(f"A has shape {self.A.shape}, expected {(tensor.n, r)}")
        if self.C.shape != (tensor.K, r):
            raise ShapeMismatch(f"C has shape {self.C.shape}, expected {(tensor.K, r)}")
        if self.Bstar.shape != (r, r):
            raise ShapeMismatch(f"Bstar has shape {self.Bstar.shape}, expected {(r, r)}")
        if len(self.B) != tensor.K or len(self.P) != tensor.K:
            raise ShapeMismatch("B and P must hold one matrix per slice")
        for k, m in enumerate(tensor.slice_widths):
            if self.B[k].shape != (m, r):
                raise ShapeMismatch(f"B[{k}] has shape {self.B[k].shape}, expected {(m, r)}")
            if self.P[k].shape != (m, r):
                raise ShapeMismatch(f"P[{k}] has shape {self.P[k].shape}, expected {(m, r)}")


@dataclass(frozen=True)
class SolverConfig:
    rank: int
    max_iter: int = 1000
    rel_tol: float = 1e-8
    snr_db: float = 20.0
    mu_init_factor: float = 1e-1
    mu_growth: float = 1.02
    mu_cap: float = 10.0
    nnls_inner_iters: int = 50
    seed: int = 0

    def __post_init__(self):
        if int(self.rank) != self.rank or self.rank < 1:
            raise ValueError(f"rank must be a positive integer, got {self.rank}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.mu_growth < 1:
            raise ValueError("mu_growth must be >= 1")
        for name in ("rel_tol", "mu_init_factor", "mu_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.nnls_inner_iters < 1:
            raise ValueError("nnls_inner_iters must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


class Termination(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"


@dataclass
class RunReport:
    objective_trace: list = field(default_factory=list)
    fit_residuals: np.ndarray | None = None
    coupling_residuals: np.ndarray | None = None
    mu_trace: list = field(default_factory=list)
    coupling_trace: list = field(default_factory=list)
    iterations: int = 0
    termination: Termination = Termination.MAX_ITER
    wall_seconds: float = 0.0
    objective_increases: list = field(default_factory=list)
    rank_deficient_events: int = 0
    mu_state: object = None


def reconstruct_slice(factors: Parafac2Factors, k: int) -> np.ndarray:
    """Return ``A @ diag(C[k]) @ B_k.T``."""
    K = factors.C.shape[0]
    if not 0 <= k < K:
        raise IndexError(f"slice index {k} out of range for K={K}")
    return (factors.A * factors.C[k]) @ factors.B[k].T


def fit_residuals(tensor: RaggedTensor, factors: Parafac2Factors) -> np.ndarray:
    """Squared Frobenius norm of ``M_k - A D_k B_k^T`` for every slice."""
    if factors.C.shape[0] != tensor.K or factors.A.shape[0] != tensor.n:
        raise ShapeMismatch("factors do not match the tensor")
    out = np.empty(tensor.K)
    for k, M in enumerate(tensor):
        if factors.B[k].shape[0] != M.shape[1]:
            raise ShapeMismatch(f"B[{k}] does not match slice width {M.shape[1]}")
        R = M - reconstruct_slice(factors, k)
        out[k] = np.vdot(R, R)
    return out


def normalize_columns(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale columns to unit l2 norm.

    Zero columns are returned unchanged with a recorded norm of 0.
    """
    M = np.asarray(M, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->j", M, M))
    safe = np.where(norms > 0, norms, 1.0)
    return M / safe, norms
