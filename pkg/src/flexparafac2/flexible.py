"""Flexibly coupled PARAFAC2 with nonnegativity on every mode.

Minimizes, by alternating nonnegative least squares,

    sum_k ||M_k - A D_k B_k^T||_F^2 + mu_k ||B_k - P_k Bstar||_F^2

over ``A, D_k, B_k >= 0``, orthonormal-column ``P_k`` and ``Bstar``, with unit
columns in ``A`` and ``Bstar``.  The coupling weights ``mu_k`` start small,
are recalibrated once from an assumed SNR after the first sweep, and then
grow geometrically until the slice's relative coupling residual is small or
the cap is reached.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, replace

import numpy as np

from .linalg import _nnls_raw, _procrustes
from .tensor import (
    DegenerateFactor,
    Parafac2Factors,
    RaggedTensor,
    RunReport,
    ShapeMismatch,
    SolverConfig,
    Termination,
    ZeroTensor,
    fit_residuals,
    normalize_columns,
)

__all__ = [
    "MuPhase",
    "MuState",
    "preprocess",
    "init_mu",
    "recalibrate_mu",
    "grow_mu",
    "update_P",
    "update_Bstar",
    "update_A",
    "update_Bk",
    "update_Dk",
    "coupling_residuals",
    "objective",
    "run_flexible",
]

MU_FLOOR = 1e-12
INCREASE_RTOL = 1e-10


class MuPhase(str, enum.Enum):
    INITIAL = "Initial"
    CALIBRATED = "Calibrated"


@dataclass(frozen=True)
class MuState:
    mu: np.ndarray
    phase: MuPhase = MuPhase.INITIAL
    growth: float = 1.02
    cap: float = 10.0

    def __post_init__(self):
        if np.any(np.asarray(self.mu) <= 0):
            raise ValueError("all mu_k must be positive")
        if self.growth < 1:
            raise ValueError("growth must be >= 1")


def _mu_array(mu) -> np.ndarray:
    return np.asarray(mu.mu if isinstance(mu, MuState) else mu, dtype=np.float64)


def preprocess(tensor: RaggedTensor) -> RaggedTensor:
    """Divide every slice by the total l2 norm of the tensor."""
    if tensor.total_norm == 0:
        raise ZeroTensor("cannot normalize an all-zero tensor")
    return tensor.scaled(1.0 / tensor.total_norm)


def init_mu(tensor, factors, config: SolverConfig | None = None) -> MuState:
    """``mu_k = mu_init_factor * fit_k / ||B_k||^2``, floored at 1e-12."""
    config = config or SolverConfig(rank=factors.rank)
    bnorm2 = np.array([np.vdot(B, B) for B in factors.B])
    if np.any(bnorm2 == 0):
        raise DegenerateFactor("some B_k is identically zero")
    mu = config.mu_init_factor * fit_residuals(tensor, factors) / bnorm2
    return MuState(np.maximum(mu, MU_FLOOR), MuPhase.INITIAL, config.mu_growth, config.mu_cap)


def recalibrate_mu(tensor, factors, snr_db: float, state: MuState | None = None,
                   config: SolverConfig | None = None) -> MuState:
    """``mu_k = 10^(-snr_db/10) * fit_k / ||B_k - P_k Bstar||^2``.

    Slices with zero coupling residual get ``mu_cap``.
    """
    if state is not None:
        growth, cap = state.growth, state.cap
    else:
        config = config or SolverConfig(rank=factors.rank)
        growth, cap = config.mu_growth, config.mu_cap
    fit = fit_residuals(tensor, factors)
    coup = coupling_residuals(factors)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(coup > 0, 10.0 ** (-snr_db / 10.0) * fit / coup, cap)
    return MuState(np.maximum(mu, MU_FLOOR), MuPhase.CALIBRATED, growth, cap)


def grow_mu(state: MuState, mask=None) -> MuState:
    """Multiply every ``mu_k <= cap`` (and selected by ``mask``) by the growth factor."""
    if state.phase is not MuPhase.CALIBRATED:
        raise ValueError("mu can only grow after calibration")
    grow = state.mu <= state.cap
    if mask is not None:
        grow &= np.asarray(mask, dtype=bool)
    return replace(state, mu=np.where(grow, state.mu * state.growth, state.mu))


def update_P(B_k: np.ndarray, Bstar: np.ndarray) -> np.ndarray:
    """Orthonormal-column ``P_k`` minimizing ``||B_k - P_k Bstar||``."""
    if B_k.shape[0] < B_k.shape[1]:
        raise ShapeMismatch(f"slice width {B_k.shape[0]} is smaller than rank {B_k.shape[1]}")
    return _procrustes(B_k @ Bstar.T)[0]


def update_Bstar(P, B, mu, normalize: bool = True) -> np.ndarray:
    """mu-weighted average of ``P_k^T B_k``, column-normalized by default."""
    w = _mu_array(mu)
    if not w.sum() > 0:
        raise ValueError("sum of mu must be positive")
    acc = np.zeros((P[0].shape[1], B[0].shape[1]))
    for wk, Pk, Bk in zip(w, P, B):
        acc += wk * (Pk.T @ Bk)
    acc /= w.sum()
    return normalize_columns(acc)[0] if normalize else acc


def update_A(tensor, factors, inner_iters: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """NNLS update of ``A`` from all slices, then column normalization.

    Returns ``(A, C)`` where the removed column norms are multiplied into
    the columns of ``C``.
    """
    r = factors.rank
    gram = np.zeros((r, r))
    cross = np.zeros((tensor.n, r))
    for k, M in enumerate(tensor):
        Bc = factors.B[k] * factors.C[k]
        gram += Bc.T @ Bc
        cross += M @ Bc
    A = _nnls_raw(gram, cross, factors.A, inner_iters)
    A, norms = normalize_columns(A)
    return A, factors.C * norms


def update_Bk(M_k, A, c_k, P_k, Bstar, mu_k, B0=None, inner_iters: int = 50) -> np.ndarray:
    """NNLS update of ``B_k`` for the data term plus ``mu_k`` times the coupling term."""
    if not mu_k > 0:
        raise ValueError("mu_k must be positive")
    Ac = A * c_k
    gram = Ac.T @ Ac
    gram.flat[:: gram.shape[0] + 1] += mu_k
    cross = M_k.T @ Ac + mu_k * (P_k @ Bstar)
    if B0 is None:
        B0 = np.zeros(cross.shape)
    return _nnls_raw(gram, cross, B0, inner_iters)


def update_Dk(M_k, A, B_k, d0=None, inner_iters: int = 50) -> np.ndarray:
    """NNLS for the diagonal of ``D_k`` (vectorized slice against ``B_k (.) A``)."""
    gram = (B_k.T @ B_k) * (A.T @ A)
    cross = np.einsum("ij,ij->j", A, M_k @ B_k)[None, :]
    if d0 is None:
        d0 = np.zeros(cross.shape)
    return _nnls_raw(gram, cross, np.reshape(d0, (1, -1)), inner_iters)[0]


def coupling_residuals(factors, relative: bool = False) -> np.ndarray:
    """``||B_k - P_k Bstar||^2`` per slice, optionally divided by ``||B_k||^2``."""
    out = np.empty(len(factors.B))
    for k, (Bk, Pk) in enumerate(zip(factors.B, factors.P)):
        R = Bk - Pk @ factors.Bstar
        out[k] = np.vdot(R, R)
        if relative:
            b2 = np.vdot(Bk, Bk)
            out[k] = out[k] / b2 if b2 > 0 else (0.0 if out[k] == 0 else np.inf)
    return out


def objective(tensor, factors, mu) -> float:
    """Data fit plus mu-weighted coupling residuals, summed over slices."""
    return float(fit_residuals(tensor, factors).sum()
                 + np.dot(_mu_array(mu), coupling_residuals(factors)))


def _check_ranks(tensor, rank):
    narrow = [m for m in tensor.slice_widths if m < rank]
    if narrow:
        raise ShapeMismatch(f"rank {rank} exceeds the narrowest slice width {min(narrow)}")


def run_flexible(tensor: RaggedTensor, config: SolverConfig, init: Parafac2Factors | None = None,
                 *, freeze_mu: bool = False, calibrate: bool = True,
                 normalize_bstar: bool = True, callback=None):
    """Fit flexible nonnegative PARAFAC2.

    Parameters
    ----------
    tensor : RaggedTensor
    config : SolverConfig
    init : Parafac2Factors, optional
        Nonnegative starting point on the scale of ``tensor`` (like the
        returned factors); a uniform random start from ``config.seed`` is
        used when omitted.
    freeze_mu : bool
        Disable mu growth (recalibration after the first sweep still runs
        unless ``calibrate`` is False).
    calibrate : bool
        Recalibrate mu from ``config.snr_db`` after the first sweep.
    normalize_bstar : bool
        Column-normalize ``Bstar`` after its update.  Disabling it makes every
        sweep an exact block-coordinate step, so with frozen mu the objective
        is non-increasing.
    callback : callable, optional
        ``callback(iteration, factors, mu_state)`` after every sweep.  The
        factors are the solver's working copy on the normalized data.

    Returns
    -------
    factors : Parafac2Factors
        ``C`` is rescaled so the model fits the original (unnormalized) data.
    report : RunReport
        ``objective_trace`` is measured on the normalized data.
    """
    t0 = time.perf_counter()
    r = config.rank
    _check_ranks(tensor, r)
    data = preprocess(tensor)
    if init is None:
        from .init import random_init
        f = random_init(data, r, config.seed)
    else:
        f = init.copy()
        f.C = f.C / tensor.total_norm
    f.check_shapes(data)
    if np.any(f.A < 0) or np.any(f.C < 0) or any(np.any(B < 0) for B in f.B):
        raise ValueError("initial A, C and B_k must be nonnegative")

    inner = config.nnls_inner_iters
    mu = init_mu(data, f, config)
    threshold = 10.0 ** (-config.snr_db / 10.0)
    coupling_rel = coupling_residuals(f, relative=True)
    report = RunReport()
    prev = None
    K = data.K

    for it in range(1, config.max_iter + 1):
        grew = False
        if it >= 2 and mu.phase is MuPhase.CALIBRATED and not freeze_mu:
            new = grow_mu(mu, mask=coupling_rel > threshold)
            grew = bool(np.any(new.mu != mu.mu))
            mu = new

        for k in range(K):
            P_k, deficient = _procrustes(f.B[k] @ f.Bstar.T)
            f.P[k] = P_k
            report.rank_deficient_events += deficient
        f.Bstar = update_Bstar(f.P, f.B, mu, normalize=normalize_bstar)
        f.A, f.C = update_A(data, f, inner)
        for k, M in enumerate(data):
            f.B[k] = update_Bk(M, f.A, f.C[k], f.P[k], f.Bstar, mu.mu[k], f.B[k], inner)
        for k, M in enumerate(data):
            f.C[k] = update_Dk(M, f.A, f.B[k], f.C[k], inner)

        if it == 1:
            if calibrate:
                mu = recalibrate_mu(data, f, config.snr_db, state=mu)
            else:
                mu = replace(mu, phase=MuPhase.CALIBRATED)

        fit = fit_residuals(data, f)
        coup = coupling_residuals(f)
        cur = float(fit.sum() + np.dot(mu.mu, coup))
        bnorm2 = np.array([np.vdot(B, B) for B in f.B])
        with np.errstate(divide="ignore", invalid="ignore"):
            coupling_rel = np.where(bnorm2 > 0, coup / bnorm2, np.where(coup > 0, np.inf, 0.0))

        report.objective_trace.append(cur)
        report.mu_trace.append(mu.mu.copy())
        report.coupling_trace.append(coupling_rel.copy())
        report.iterations = it
        if callback is not None:
            callback(it, f, mu)

        if prev is not None:
            if cur > prev * (1 + INCREASE_RTOL):
                report.objective_increases.append((it, grew))
            if not grew and abs(prev - cur) <= config.rel_tol * prev:
                report.termination = Termination.CONVERGED
                break
        if cur == 0.0:
            report.termination = Termination.CONVERGED
            break
        prev = cur

    out = f.copy()
    out.C = out.C * tensor.total_norm
    report.fit_residuals = fit_residuals(tensor, out)
    report.coupling_residuals = coupling_residuals(out, relative=True)
    report.mu_state = mu
    report.wall_seconds = time.perf_counter() - t0
    return out, report
