import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexparafac2.metrics import align_columns, relative_B_error, relative_fit
from flexparafac2.synth import SynthSpec, gen_dataset
from flexparafac2.tensor import Parafac2Factors


def _truth_B(seed=0, K=4, m=8, r=3):
    _, truth = gen_dataset(SynthSpec(n=5, m=m, K=K, rank=r, seed=seed))
    return truth.B


def test_identity_alignment():
    B = _truth_B()
    assert align_columns(B, B) == (0, 1, 2)


def test_swap_alignment():
    B = _truth_B(1)
    est = [b[:, [1, 0, 2]] for b in B]
    assert align_columns(est, B) == (1, 0, 2)


@pytest.mark.parametrize("seed", range(5))
def test_noisy_permutation_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    B = _truth_B(seed)
    perm = rng.permutation(3)
    est = [b[:, perm] + 1e-3 * rng.normal(size=b.shape) for b in B]
    # oracle: score every permutation by plain summed cosine
    E = np.vstack([np.maximum(e, 0) / np.linalg.norm(np.maximum(e, 0), axis=0) for e in est])
    T = np.vstack(B)
    best = max(itertools.permutations(range(3)),
               key=lambda p: sum(T[:, i] @ E[:, p[i]] / np.linalg.norm(T[:, i]) / np.linalg.norm(E[:, p[i]])
                                 for i in range(3)))
    got = align_columns(est, B)
    assert got == best
    assert [perm[j] for j in got] == [0, 1, 2]


def test_greedy_above_exhaustive_limit():
    rng = np.random.default_rng(3)
    B = [rng.random((20, 8))]
    perm = rng.permutation(8)
    assert list(align_columns([B[0][:, perm]], B)) == list(np.argsort(perm))


def test_error_zero_for_exact():
    B = _truth_B(2)
    assert relative_B_error(B, B) == 0.0


def test_error_invariant_to_permutation_and_scale():
    B = _truth_B(3)
    est = [7.0 * b[:, [2, 0, 1]] for b in B]
    assert relative_B_error(est, B) == pytest.approx(0.0, abs=1e-28)


def test_error_one_for_zero_estimate():
    B = _truth_B(4)
    assert relative_B_error([np.zeros_like(b) for b in B], B) == 1.0


def test_error_accepts_factor_objects():
    _, truth = gen_dataset(SynthSpec(n=5, m=8, K=3, rank=2, seed=5))
    f = Parafac2Factors(truth.A, truth.C, truth.B, [np.eye(8, 2)] * 3, np.eye(2))
    assert relative_B_error(f, truth) == 0.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_error_invariance_property(seed):
    rng = np.random.default_rng(seed)
    B = _truth_B(seed % 1000)
    est = [b + 0.05 * rng.normal(size=b.shape) for b in B]
    base = relative_B_error(est, B)
    perm = rng.permutation(3)
    scale = rng.uniform(0.1, 10.0, size=3)
    moved = [e[:, perm] * scale[perm] for e in est]
    assert base >= 0
    assert relative_B_error(moved, B) == pytest.approx(base, rel=1e-10, abs=1e-14)


def test_negative_entries_are_clipped():
    B = [np.array([[1.0], [0.0]])]
    assert relative_B_error([np.array([[1.0], [-5.0]])], B) == 0.0


class TestRelativeFit:
    def _setup(self, seed=0):
        t, truth = gen_dataset(SynthSpec(n=6, m=5, K=3, rank=2, sigma=0.1, seed=seed))
        f = Parafac2Factors(truth.A, truth.C, truth.B, [np.eye(5, 2)] * 3, np.eye(2))
        return t, truth, f

    def test_exact(self):
        t, truth = gen_dataset(SynthSpec(n=6, m=5, K=3, rank=2, sigma=0.0, seed=1))
        f = Parafac2Factors(truth.A, truth.C, truth.B, [np.eye(5, 2)] * 3, np.eye(2))
        assert relative_fit(t, f) == 0.0

    def test_zero_factors(self):
        t, _, f = self._setup()
        f.C = np.zeros_like(f.C)
        assert relative_fit(t, f) == pytest.approx(1.0, rel=1e-14)

    def test_recomposition(self):
        t, _, f = self._setup(2)
        direct = np.sqrt(sum(np.sum((M - (f.A * f.C[k]) @ f.B[k].T) ** 2) for k, M in enumerate(t)))
        direct /= np.sqrt(sum(np.sum(M ** 2) for M in t))
        assert relative_fit(t, f) == pytest.approx(direct, rel=1e-12)
