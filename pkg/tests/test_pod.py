import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledrom.errors import DegenerateSnapshotsError, DimensionMismatchError
from coupledrom.mesh import build_box_mesh, extract_interface
from coupledrom.pod import PodFactorization, SnapshotSet, pod, zero_interface_rows


def align_signs(A, B):
    """Flip columns of B so each best matches the corresponding column of A."""
    B = B.copy()
    for j in range(B.shape[1]):
        if A[:, j] @ B[:, j] < 0:
            B[:, j] = -B[:, j]
    return B


class TestPod:
    def test_rank_one(self):
        s = np.array([3.0, 0.0, 4.0])
        X = np.tile(s[:, None], (1, 5))
        basis = pod(X, 1e-8)
        assert basis.n == 1
        assert np.allclose(np.abs(basis.V[:, 0]), s / 5.0)

    def test_identity_snapshots(self):
        basis = pod(np.eye(3), 1e-6)
        assert basis.n == 3
        assert np.allclose(basis.singular_values[:3], 1.0)

    def test_matches_dense_svd_oracle(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((50, 20))
        basis = pod(X, 1e-12)
        U, s, _ = np.linalg.svd(X, full_matrices=False)
        assert np.allclose(basis.singular_values[: len(s)], s, atol=1e-10)
        Ua = align_signs(basis.V, U[:, : basis.n])
        assert np.max(np.abs(basis.V - Ua)) <= 1e-10

    def test_gram_path_matches_dense_svd_oracle(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((200, 40))  # tall: Gram-matrix path
        basis = pod(X, 1e-12)
        U, s, _ = np.linalg.svd(X, full_matrices=False)
        assert np.allclose(basis.singular_values[: len(s)], s, atol=1e-10)
        Ua = align_signs(basis.V, U[:, : basis.n])
        assert np.max(np.abs(basis.V - Ua)) <= 1e-10

    @given(seed=st.integers(0, 500), tol_exp=st.integers(1, 8))
    @settings(max_examples=25, deadline=None)
    def test_energy_rule_minimality_and_orthonormality(self, seed, tol_exp):
        rng = np.random.default_rng(seed)
        tol = 10.0**-tol_exp
        # spread spectrum so truncation actually bites
        U, _ = np.linalg.qr(rng.standard_normal((60, 15)))
        s = np.logspace(0, -10, 15)
        X = U * s @ rng.standard_normal((15, 15))
        basis = pod(X, tol)
        s2 = basis.singular_values**2
        total = s2.sum()
        n = basis.n
        assert s2[n:].sum() <= tol**2 * total * (1 + 1e-12)
        if n > 1:
            assert s2[n - 1 :].sum() > tol**2 * total  # n is minimal
        G = basis.V.T @ basis.V
        assert np.max(np.abs(G - np.eye(n))) <= 1e-10

    def test_projection_error_bound(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((80, 12)) * np.logspace(0, -6, 12)
        tol = 1e-3
        basis = pod(X, tol)
        V = basis.V
        tail = (basis.singular_values[basis.n :] ** 2).sum()
        total_err = 0.0
        for j in range(X.shape[1]):
            s = X[:, j]
            err = np.linalg.norm(s - V @ (V.T @ s)) ** 2
            assert err <= tail * (1 + 1e-8) + 1e-14
            total_err += err
        assert total_err <= tail * (1 + 1e-8) + 1e-14
        assert total_err <= tol**2 * (basis.singular_values**2).sum() + 1e-14

    def test_reproducible_and_sign_fixed(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((30, 8))
        a = pod(X.copy(), 1e-6)
        b = pod(X.copy(), 1e-6)
        assert np.array_equal(a.V, b.V)
        for j in range(a.n):
            nz = np.nonzero(a.V[:, j])[0]
            assert a.V[nz[0], j] > 0

    def test_degenerate_snapshots(self):
        with pytest.raises(DegenerateSnapshotsError):
            pod(np.zeros((10, 3)), 1e-6)

    def test_factorization_truncation_consistency(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((40, 10)) * np.logspace(0, -8, 10)
        fact = PodFactorization(X)
        for tol in (1e-1, 1e-3, 1e-6):
            assert np.array_equal(fact.truncate(tol).V, pod(X, tol).V)


class TestZeroInterfaceRows:
    def setup_method(self):
        self.mesh = build_box_mesh((0, 0), (1, 1), (2, 2))
        self.trace = extract_interface(self.mesh, "x+")

    def test_empty_trace_rows_no_change(self):
        X = np.arange(18, dtype=float).reshape(9, 2)
        out = zero_interface_rows(SnapshotSet(matrix=X), np.array([], dtype=int))
        assert np.array_equal(out.matrix, X)

    def test_all_rows_zeroed(self):
        X = np.ones((9, 3))
        out = zero_interface_rows(SnapshotSet(matrix=X), np.arange(9))
        assert not np.any(out.matrix)

    def test_energy_bookkeeping(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((9, 4))
        k = 5
        out = zero_interface_rows(SnapshotSet(matrix=X), np.array([k]))
        before = np.sum(X**2, axis=0)
        after = np.sum(out.matrix**2, axis=0)
        assert np.allclose(before - after, X[k] ** 2)

    def test_trace_rows_zeroed_others_kept(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((self.mesh.n_dofs, 5))
        out = zero_interface_rows(SnapshotSet(matrix=X), self.trace)
        assert not np.any(out.matrix[self.trace.dof_indices])
        others = np.setdiff1d(np.arange(self.mesh.n_dofs), self.trace.dof_indices)
        assert np.array_equal(out.matrix[others], X[others])

    def test_out_of_range_rows(self):
        with pytest.raises(DimensionMismatchError):
            zero_interface_rows(SnapshotSet(matrix=np.ones((4, 2))), np.array([7]))
