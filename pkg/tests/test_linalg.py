import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexparafac2 import linalg
from flexparafac2.linalg import (
    NnlsProblem,
    RankDeficientWarning,
    khatri_rao,
    nnls,
    nnls_objective,
    procrustes,
)
from flexparafac2.tensor import ColumnMismatch

from oracles import gram_schmidt, khatri_rao_index, nnls_active_set_enumeration


class TestNnls:
    def test_identity_design(self, backend):
        X = nnls(NnlsProblem(np.eye(2), [[1.0, 2.0]]))
        np.testing.assert_allclose(X, [[1.0, 2.0]], atol=1e-15)

    def test_clipping(self, backend):
        X = nnls(NnlsProblem(np.eye(2), [[-1.0, 2.0]]))
        np.testing.assert_array_equal(X, [[0.0, 2.0]])

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_enumeration_oracle(self, backend, seed):
        rng = np.random.default_rng(seed)
        F = rng.normal(size=(5, 3))
        b = rng.normal(size=5)
        prob = NnlsProblem(F.T @ F, (b @ F)[None, :])
        X = nnls(prob, inner_iters=5000)
        _, best = nnls_active_set_enumeration(prob.gram, prob.cross[0])
        assert nnls_objective(prob, X) <= best + 1e-8
        assert np.all(X >= 0)

    def test_zero_gram_diagonal_kills_variable(self, backend):
        gram = np.array([[0.0, 0.0], [0.0, 2.0]])
        X = nnls(NnlsProblem(gram, [[5.0, 4.0]], x0=[[3.0, 0.0]]))
        np.testing.assert_array_equal(X, [[0.0, 2.0]])

    def test_warm_start_not_mutated(self, backend):
        x0 = np.array([[0.5, 0.5]])
        nnls(NnlsProblem(np.eye(2), [[1.0, 2.0]], x0=x0))
        np.testing.assert_array_equal(x0, [[0.5, 0.5]])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 6))
    @settings(max_examples=60, deadline=None)
    def test_nonnegative_and_monotone_per_sweep(self, seed, r, q):
        rng = np.random.default_rng(seed)
        F = rng.normal(size=(r + 2, r))
        T = rng.normal(size=(q, r + 2))
        x0 = rng.random((q, r))
        prob = NnlsProblem(F.T @ F, T @ F, x0=x0)
        values = [nnls_objective(prob, x0)]

        def record(X):
            assert np.all(X >= 0)
            values.append(nnls_objective(prob, X))

        X = nnls(prob, inner_iters=30, on_sweep=record)
        assert np.all(X >= 0)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    @pytest.mark.skipif(len(linalg.available_backends()) < 2, reason="extension not built")
    @pytest.mark.parametrize("seed", range(5))
    def test_backends_agree(self, seed):
        rng = np.random.default_rng(seed)
        F = rng.random((8, 3))
        prob = NnlsProblem(F.T @ F, rng.normal(size=(6, 8)) @ F, x0=rng.random((6, 3)))
        previous = linalg.get_backend()
        try:
            out = {}
            for name in ("compiled", "python"):
                linalg.set_backend(name)
                out[name] = nnls(prob, inner_iters=40)
        finally:
            linalg.set_backend(previous)
        np.testing.assert_allclose(out["compiled"], out["python"], rtol=1e-12, atol=1e-14)

    def test_rejects_negative_warm_start(self):
        with pytest.raises(ValueError):
            NnlsProblem(np.eye(2), [[1.0, 1.0]], x0=[[-1.0, 0.0]])

    def test_rejects_asymmetric_gram(self):
        with pytest.raises(ValueError):
            NnlsProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), [[1.0, 1.0]])

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            linalg.set_backend("fortran")


class TestProcrustes:
    def test_identity(self):
        np.testing.assert_allclose(procrustes(np.eye(3)), np.eye(3), atol=1e-15)

    def test_positive_diagonal(self):
        np.testing.assert_allclose(procrustes(np.diag([2.0, 3.0])), np.eye(2), atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_beats_random_orthonormal_candidates(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(4, 2))
        P = procrustes(M)
        best = np.trace(P.T @ M)
        for _ in range(1000):
            Q = gram_schmidt(rng.normal(size=(4, 2)))
            assert best >= np.trace(Q.T @ M) - 1e-10

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(0, 4))
    @settings(max_examples=50, deadline=None)
    def test_orthonormal_columns(self, seed, r, extra):
        M = np.random.default_rng(seed).normal(size=(r + extra, r))
        P = procrustes(M)
        assert np.linalg.norm(P.T @ P - np.eye(r)) <= 1e-10

    @given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1e6))
    @settings(max_examples=50, deadline=None)
    def test_scale_invariant(self, seed, alpha):
        M = np.random.default_rng(seed).normal(size=(5, 3))
        np.testing.assert_allclose(procrustes(alpha * M), procrustes(M), atol=1e-9)

    def test_rank_deficient_warns_but_returns(self):
        M = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        with pytest.warns(RankDeficientWarning):
            P = procrustes(M)
        assert np.linalg.norm(P.T @ P - np.eye(2)) <= 1e-10

    def test_full_rank_does_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            procrustes(np.eye(3, 2))

    def test_needs_tall_matrix(self):
        with pytest.raises(ValueError):
            procrustes(np.ones((2, 3)))


class TestKhatriRao:
    def test_single_column(self):
        np.testing.assert_array_equal(khatri_rao([[1], [2]], [[3], [4]]), [[3], [4], [6], [8]])

    def test_identities(self):
        np.testing.assert_array_equal(khatri_rao(np.eye(2), np.eye(2)),
                                      [[1, 0], [0, 0], [0, 0], [0, 1]])

    @pytest.mark.parametrize("seed", range(3))
    def test_index_formula(self, seed):
        rng = np.random.default_rng(seed)
        X, Y = rng.normal(size=(3, 2)), rng.normal(size=(4, 2))
        np.testing.assert_array_equal(khatri_rao(X, Y), khatri_rao_index(X, Y))

    def test_column_mismatch(self):
        with pytest.raises(ColumnMismatch):
            khatri_rao(np.ones((2, 2)), np.ones((2, 3)))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_rank_not_below_left_factor(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(3, 3))
        X[:, 2] = X[:, 0] + X[:, 1]  # rank 2
        Y = rng.random((4, 3)) + 0.1
        assert np.linalg.matrix_rank(khatri_rao(X, Y), tol=1e-8) >= np.linalg.matrix_rank(X, tol=1e-8)
