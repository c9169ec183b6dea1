"""Synthetic shifted-PARAFAC data.

``A`` is clipped Gaussian (sparse, nonnegative), ``C`` is uniform on [0, 1],
both column-normalized.  ``B_1`` is clipped Gaussian and column-normalized;
``B_k`` is ``B_1`` with rows circularly shifted by ``(k - 1) * shift_step``,
which keeps ``B_k^T B_k`` constant across slices.

Randomness comes from NumPy's counter-based Philox bit generator keyed by a
``SeedSequence``: the stream for a given ``(seed, key...)`` is fixed, and
``gen_dataset`` derives independent child keys for each factor and the noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import RaggedTensor, normalize_columns

__all__ = [
    "make_rng",
    "SynthSpec",
    "SynthGroundTruth",
    "gen_A",
    "gen_C",
    "gen_shifted_B",
    "gen_dataset",
    "exact_gramian",
]

# child keys of a dataset seed
_KEY_A, _KEY_C, _KEY_B, _KEY_NOISE = 0, 1, 2, 3


def make_rng(seed, *key: int) -> np.random.Generator:
    """Philox generator for ``seed`` and an optional spawn key path."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
        if key:
            ss = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + key)
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SynthSpec:
    n: int = 20
    m: int = 30
    K: int = 20
    rank: int = 3
    sigma: float = 0.0
    seed: int = 0
    shift_step: int = 1

    def __post_init__(self):
        for name in ("n", "m", "K", "rank"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.m < self.rank:
            raise ValueError(f"m={self.m} must be >= rank={self.rank}")
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass
class SynthGroundTruth:
    A: np.ndarray
    C: np.ndarray
    B: list
    sigma: float
    seed: int


def _clipped_gaussian(rng, rows, r):
    X = np.maximum(rng.standard_normal((rows, r)), 0.0)
    # an all-zero column is not a valid component: redraw it from the same stream
    for p in range(r):
        while not X[:, p].any():
            X[:, p] = np.maximum(rng.standard_normal(rows), 0.0)
    return X


def gen_A(n: int, r: int, seed) -> np.ndarray:
    rng = make_rng(seed)
    return normalize_columns(_clipped_gaussian(rng, n, r))[0]


def gen_C(K: int, r: int, seed, normalize: bool = True) -> np.ndarray:
    C = make_rng(seed).uniform(0.0, 1.0, size=(K, r))
    return normalize_columns(C)[0] if normalize else C


def gen_shifted_B(m: int, r: int, K: int, shift_step: int, seed) -> list[np.ndarray]:
    if m < r:
        raise ValueError(f"m={m} must be >= r={r}")
    B1 = normalize_columns(_clipped_gaussian(make_rng(seed), m, r))[0]
    return [np.roll(B1, k * shift_step, axis=0) for k in range(K)]


def gen_dataset(spec: SynthSpec) -> tuple[RaggedTensor, SynthGroundTruth]:
    """Noisy slices ``A diag(C[k]) B_k^T + sigma * G_k`` and their ground truth."""
    ss = np.random.SeedSequence(spec.seed)
    A = gen_A(spec.n, spec.rank, make_rng(ss, _KEY_A))
    C = gen_C(spec.K, spec.rank, make_rng(ss, _KEY_C))
    B = gen_shifted_B(spec.m, spec.rank, spec.K, spec.shift_step, make_rng(ss, _KEY_B))
    noise_rng = make_rng(ss, _KEY_NOISE)
    slices = []
    for k in range(spec.K):
        M = (A * C[k]) @ B[k].T
        if spec.sigma > 0:
            M = M + spec.sigma * noise_rng.standard_normal(M.shape)
        slices.append(M)
    return RaggedTensor(slices), SynthGroundTruth(A, C, B, float(spec.sigma), int(spec.seed))


def exact_gramian(B: np.ndarray) -> np.ndarray:
    """``B^T B`` with correctly rounded sums (``math.fsum``).

    The result does not depend on row order, so circularly shifted factors
    give bit-identical Gramians; BLAS summation order would not.
    """
    B = np.asarray(B, dtype=np.float64)
    r = B.shape[1]
    G = np.empty((r, r))
    for p in range(r):
        for q in range(p, r):
            G[p, q] = G[q, p] = math.fsum(B[:, p] * B[:, q])
    return G
