"""Random starting points shared by both solvers."""
from __future__ import annotations

import numpy as np

from .synth import make_rng
from .tensor import Parafac2Factors, RaggedTensor, ShapeMismatch, normalize_columns


def zero_padded_identity(m: int, r: int) -> np.ndarray:
    if m < r:
        raise ShapeMismatch(f"slice width {m} is smaller than rank {r}")
    return np.eye(m, r)


def random_init(tensor: RaggedTensor, rank: int, seed, *key: int) -> Parafac2Factors:
    """Uniform [0, 1] draws for ``A``, ``C`` and every ``B_k``.

    ``P_k`` starts at the zero-padded identity and ``Bstar`` is the
    column-normalized mean of ``P_k^T B_k``.  ``A`` and the ``B_k`` are
    column-normalized and ``C`` is rescaled by the least-squares scalar that
    best matches the data, so every start sits at the data's scale.
    """
    from .flexible import update_Bstar  # solver module imports this one

    rng = make_rng(seed, *key)
    r = int(rank)
    A = normalize_columns(rng.uniform(size=(tensor.n, r)))[0]
    C = rng.uniform(size=(tensor.K, r))
    B = [normalize_columns(rng.uniform(size=(m, r)))[0] for m in tensor.slice_widths]
    P = [zero_padded_identity(m, r) for m in tensor.slice_widths]
    Bstar = update_Bstar(P, B, np.ones(tensor.K))

    num = den = 0.0
    for k, M in enumerate(tensor):
        R = (A * C[k]) @ B[k].T
        num += np.vdot(M, R)
        den += np.vdot(R, R)
    if num > 0 and den > 0:
        C *= num / den
    return Parafac2Factors(A, C, B, P, Bstar)
