"""Recovery metrics for estimated PARAFAC2 factors."""
from __future__ import annotations

import itertools

import numpy as np

from .tensor import fit_residuals, normalize_columns

__all__ = ["align_columns", "relative_B_error", "relative_fit"]

EXHAUSTIVE_MAX_RANK = 6


def _clip_normalize(mats):
    return [normalize_columns(np.maximum(np.asarray(M, dtype=np.float64), 0.0))[0] for M in mats]


def _as_list(x):
    return [x] if isinstance(x, np.ndarray) and x.ndim == 2 else list(x)


def align_columns(est, truth) -> tuple[int, ...]:
    """Permutation ``perm`` matching estimated to true components.

    ``est[:, perm[p]]`` is paired with ``truth[:, p]``.  Both arguments are a
    matrix or a list of matrices (e.g. all ``B_k``); estimates are clipped at
    zero and every matrix is column-normalized before the columns are
    concatenated across the list.  The permutation maximizes the summed
    cosine similarity (exhaustive for r <= 6, greedy otherwise).
    """
    E = np.vstack(_clip_normalize(_as_list(est)))
    T = np.vstack([normalize_columns(np.asarray(M, dtype=np.float64))[0] for M in _as_list(truth)])
    if E.shape != T.shape:
        raise ValueError(f"shape mismatch: {E.shape} vs {T.shape}")
    En, _ = normalize_columns(E)
    Tn, _ = normalize_columns(T)
    sim = Tn.T @ En  # sim[p, q]: truth p vs estimate q
    r = sim.shape[0]
    if r <= EXHAUSTIVE_MAX_RANK:
        best, best_score = None, -np.inf
        for perm in itertools.permutations(range(r)):
            score = sim[np.arange(r), perm].sum()
            if score > best_score:
                best, best_score = perm, score
        return tuple(int(i) for i in best)
    perm = [-1] * r
    S = sim.copy()
    for _ in range(r):
        p, q = np.unravel_index(np.argmax(S), S.shape)
        perm[p] = int(q)
        S[p, :] = -np.inf
        S[:, q] = -np.inf
    return tuple(perm)


def relative_B_error(est, truth) -> float:
    """Mean over slices of ``||B_k - [B^_k]^+||^2 / ||B_k||^2``.

    ``est`` and ``truth`` may be factor objects (anything with a ``B`` list)
    or plain lists of ``B_k``.  Estimates are clipped at zero, both sides are
    column-normalized, and estimated columns are permuted by
    :func:`align_columns` before comparison.
    """
    est_B = getattr(est, "B", est)
    true_B = getattr(truth, "B", truth)
    perm = list(align_columns(est_B, true_B))
    E = _clip_normalize(est_B)
    errs = []
    for Bh, Bt in zip(E, true_B):
        Bt = normalize_columns(np.asarray(Bt, dtype=np.float64))[0]
        D = Bt - Bh[:, perm]
        errs.append(np.vdot(D, D) / np.vdot(Bt, Bt))
    return float(np.mean(errs))


def relative_fit(tensor, factors) -> float:
    """``sqrt(sum_k fit_k) / ||tensor||``."""
    return float(np.sqrt(fit_residuals(tensor, factors).sum()) / tensor.total_norm)
