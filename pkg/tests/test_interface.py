import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledrom.errors import (
    DegenerateBasisError,
    OversamplingError,
    ProjectionDistanceError,
)
from coupledrom.fem import assemble_stiffness
from coupledrom.interface import (
    apply_deim,
    assemble_reducer,
    build_interface_reducer,
    build_transfer_matrix,
    deim_indices,
    make_deim_basis,
    nearest_dof_map,
    transfer_linear,
)
from coupledrom.mesh import build_box_mesh, extract_interface
from coupledrom.pod import pod


def cube_trace(n, order=1, origin=(0, 0, 0), face="x+"):
    mesh = build_box_mesh(origin, (1, 1, 1), (n, n, n), order=order)
    return mesh, extract_interface(mesh, face)


def greedy_oracle(Phi):
    """Brute-force greedy index selection via dense least squares."""
    picked = [int(np.argmax(np.abs(Phi[:, 0])))]
    for j in range(1, Phi.shape[1]):
        sub = Phi[np.array(picked), :j]
        c, *_ = np.linalg.lstsq(sub, Phi[np.array(picked), j], rcond=None)
        r = Phi[:, j] - Phi[:, :j] @ c
        picked.append(int(np.argmax(np.abs(r))))
    return picked


class TestTransferLinear:
    def test_constant_preserved(self):
        _, tm = cube_trace(4)
        _, ts = cube_trace(3)
        out = transfer_linear(tm, np.full(len(tm), 2.5), ts)
        assert np.allclose(out, 2.5, atol=1e-14)

    def test_conforming_is_bit_identical_permutation(self):
        _, tm = cube_trace(4)
        _, ts = cube_trace(4)
        rng = np.random.default_rng(0)
        vals = rng.standard_normal(len(tm))
        P = build_transfer_matrix(tm, ts)
        assert P.nnz == len(tm)
        assert np.all(P.data == 1.0)
        assert np.array_equal(transfer_linear(tm, vals, ts), vals)

    def test_affine_field_reproduced_exactly(self):
        _, tm = cube_trace(5)
        _, ts = cube_trace(3)

        def affine(c):
            return 0.3 + 1.7 * c[:, 1] - 0.9 * c[:, 2]

        out = transfer_linear(tm, affine(tm.coords), ts)
        assert np.max(np.abs(out - affine(ts.coords))) <= 1e-12

    def test_affine_2d_line_trace(self):
        m2 = build_box_mesh((0, 0), (1, 1), (6, 6))
        s2 = build_box_mesh((1, 0), (1, 1), (4, 4))
        tm = extract_interface(m2, "x+")
        ts = extract_interface(s2, "x-")
        vals = 1.0 + 2.0 * tm.coords[:, 1]
        out = transfer_linear(tm, vals, ts)
        assert np.max(np.abs(out - (1.0 + 2.0 * ts.coords[:, 1]))) <= 1e-12

    def test_out_of_hull_points_snap(self):
        big = build_box_mesh((0, 0, 0), (1, 2, 2), (2, 4, 4))
        small = build_box_mesh((1, 0.5, 0.5), (1, 1, 1), (2, 2, 2))
        tm = extract_interface(small, "x-")  # small face
        ts = extract_interface(big, "x+")  # larger face: some points outside
        out = transfer_linear(tm, np.ones(len(tm)), ts)
        assert np.allclose(out, 1.0, atol=1e-14)  # constants survive snapping

    def test_distance_limit_enforced(self):
        far = build_box_mesh((0, 0, 0), (1, 1, 1), (2, 2, 2))
        off = build_box_mesh((3, 0, 0), (1, 1, 1), (2, 2, 2))
        tm = extract_interface(far, "x+")
        ts = extract_interface(off, "x-")
        with pytest.raises(ProjectionDistanceError):
            transfer_linear(tm, np.ones(len(tm)), ts, max_distance=0.5)


class TestDeimIndices:
    def test_single_basis_vector(self):
        Phi = np.zeros((5, 1))
        Phi[3, 0] = 1.0
        assert deim_indices(Phi).tolist() == [3]

    def test_two_canonical_columns(self):
        Phi = np.eye(4)[:, :2]
        assert deim_indices(Phi).tolist() == [0, 1]

    def test_matches_dense_greedy_oracle(self):
        rng = np.random.default_rng(21)
        Phi, _ = np.linalg.qr(rng.standard_normal((6, 3)))
        assert deim_indices(Phi).tolist() == greedy_oracle(Phi)

    @given(seed=st.integers(0, 400))
    @settings(max_examples=30, deadline=None)
    def test_oracle_agreement_random_orthonormal(self, seed):
        rng = np.random.default_rng(seed)
        Phi, _ = np.linalg.qr(rng.standard_normal((12, 5)))
        idx = deim_indices(Phi)
        assert idx.tolist() == greedy_oracle(Phi)
        assert len(set(idx.tolist())) == 5

    def test_degenerate_basis_reports_step(self):
        Phi = np.zeros((4, 2))
        Phi[0, 0] = 1.0
        Phi[0, 1] = 1.0  # second column interpolated exactly by the first index
        with pytest.raises(DegenerateBasisError) as err:
            deim_indices(Phi)
        assert err.value.step == 2

    @given(seed=st.integers(0, 200))
    @settings(max_examples=20, deadline=None)
    def test_interpolation_property(self, seed):
        rng = np.random.default_rng(seed)
        Phi, _ = np.linalg.qr(rng.standard_normal((20, 6)))
        basis = make_deim_basis(Phi)
        w = Phi @ rng.standard_normal(6)
        rec = basis.reconstruct(w[basis.indices])
        assert np.linalg.norm(rec - w) <= 1e-10 * np.linalg.norm(w)


class TestNearestDofMap:
    def test_coinciding_points_identity(self):
        _, tm = cube_trace(3)
        assert np.array_equal(nearest_dof_map(tm.coords, tm), np.arange(len(tm)))

    def test_line_example(self):
        m = build_box_mesh((0, 0), (1, 1), (4, 4))
        tm = extract_interface(m, "y-")  # nodes at x = 0, .25, .5, .75, 1
        pts = np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
        assert nearest_dof_map(pts, tm).tolist() == [0, 2, 4]

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(3)
        _, tm = cube_trace(6)
        pts = np.column_stack(
            [np.ones(40), rng.uniform(0, 1, 40), rng.uniform(0, 1, 40)]
        )
        got = nearest_dof_map(pts, tm)
        d2 = np.sum((pts[:, None, :] - tm.coords[None, :, :]) ** 2, axis=2)
        assert np.array_equal(got, np.argmin(d2, axis=1))

    def test_tie_breaks_to_smallest_index(self):
        m = build_box_mesh((0, 0), (1, 1), (2, 2))
        tm = extract_interface(m, "y-")  # x = 0, 0.5, 1
        got = nearest_dof_map(np.array([[0.25, 0.0]]), tm)
        assert got.tolist() == [0]


def make_reducer_setup(n_master=4, n_slave=2, n_snap=12, eps=1e-10, order=1):
    master_mesh, tm = cube_trace(n_master, order=order)
    slave_mesh = build_box_mesh((1, 0, 0), (1, 1, 1), (n_slave, n_slave, n_slave))
    ts = extract_interface(slave_mesh, "x-")
    rng = np.random.default_rng(17)
    # smooth synthetic master fields evaluated on the master trace
    fields = []
    for _ in range(n_snap):
        a, b, c = rng.uniform(0.3, 2.0, 3)
        fields.append(
            np.sin(a * tm.coords[:, 1]) * np.cos(b * tm.coords[:, 2]) + c
        )
    P = build_transfer_matrix(tm, ts)
    S_D = np.stack([P @ f for f in fields], axis=1)
    V1 = np.zeros((master_mesh.n_dofs, n_snap))
    V1[tm.dof_indices] = np.stack(fields, axis=1)  # master basis carrying the traces
    q1, _ = np.linalg.qr(V1)
    K2 = assemble_stiffness(slave_mesh, diffusion=1.0)
    V2 = np.linalg.qr(np.random.default_rng(5).standard_normal((slave_mesh.n_dofs, 6)))[0]
    V2[ts.dof_indices] = 0.0
    reducer = build_interface_reducer(
        S_D, eps, tm, ts, q1, V2, slave_operators={"A": K2}
    )
    return reducer, tm, ts, S_D, q1, V2, K2


class TestInterfaceReducer:
    def test_single_snapshot_reconstruction(self):
        _, tm = cube_trace(3)
        slave_mesh = build_box_mesh((1, 0, 0), (1, 1, 1), (2, 2, 2))
        ts = extract_interface(slave_mesh, "x-")
        s = 1.0 + ts.coords[:, 1] * 2.0
        reducer = build_interface_reducer(
            s[:, None], 1e-8, tm, ts, np.eye(len(tm.dof_indices)), None
        )
        assert reducer.m == 1
        w = s[reducer.deim.indices]
        rec = reducer.deim.reconstruct(w)
        assert np.linalg.norm(rec - s) <= 1e-12 * np.linalg.norm(s)

    def test_oversampling_rejected(self):
        _, tm = cube_trace(1)  # 4 master trace DoFs
        slave_mesh = build_box_mesh((1, 0, 0), (1, 1, 1), (3, 3, 3))
        ts = extract_interface(slave_mesh, "x-")
        rng = np.random.default_rng(0)
        S = rng.standard_normal((len(ts), 8))
        with pytest.raises(OversamplingError):
            build_interface_reducer(S, 1e-14, tm, ts, np.eye(len(tm)), None)

    def test_full_deim_on_conforming_grids_reproduces_snapshots(self):
        mesh, tm = cube_trace(3)
        slave_mesh = build_box_mesh((1, 0, 0), (1, 1, 1), (3, 3, 3))
        ts = extract_interface(slave_mesh, "x-")
        rng = np.random.default_rng(1)
        S = rng.standard_normal((len(ts), len(ts)))  # full rank: m = trace size
        V1 = np.zeros((mesh.n_dofs, len(ts)))
        V1[tm.dof_indices] = S  # master carries exactly the snapshot traces
        reducer = build_interface_reducer(S, 1e-14, tm, ts, V1, None)
        assert reducer.m == len(ts)
        for j in range(4):
            coeff = np.zeros(len(ts))
            coeff[j] = 1.0
            # u_n1 = e_j reconstructs column j of the snapshot matrix
            trace, _ = apply_deim(reducer, coeff)
            assert np.linalg.norm(trace - S[:, j]) <= 1e-10 * np.linalg.norm(S[:, j])

    def test_held_out_reconstruction_within_tolerance_budget(self):
        eps = 1e-3
        master_mesh, tm = cube_trace(6)
        slave_mesh = build_box_mesh((1, 0, 0), (1, 1, 1), (3, 3, 3))
        ts = extract_interface(slave_mesh, "x-")
        rng = np.random.default_rng(9)

        def field(alpha, beta):
            return np.exp(-alpha * tm.coords[:, 1]) + beta * tm.coords[:, 2] ** 2

        P = build_transfer_matrix(tm, ts)
        train = np.stack(
            [P @ field(a, b) for a, b in rng.uniform(0.5, 5.0, size=(40, 2))], axis=1
        )
        basis = pod(train, eps)
        deim = make_deim_basis(basis.V)
        rel_errors = []
        for a, b in rng.uniform(0.5, 5.0, size=(10, 2)):
            w = P @ field(a, b)
            rec = deim.reconstruct(w[deim.indices])
            rel_errors.append(np.linalg.norm(rec - w) / np.linalg.norm(w))
        assert max(rel_errors) <= 10 * eps

    def test_apply_deim_zero_input(self):
        reducer, *_ = make_reducer_setup()
        trace, lift = apply_deim(reducer, np.zeros(reducer.full_transfer.shape[1]))
        assert not np.any(trace)
        assert not np.any(lift)

    def test_apply_deim_matches_unreduced_path(self):
        reducer, tm, ts, S_D, V1, V2, K2 = make_reducer_setup()
        rng = np.random.default_rng(23)
        u_n1 = rng.standard_normal(V1.shape[1])
        trace, lift = apply_deim(reducer, u_n1)
        # unreduced oracle: expand master, extract trace, interpolate, then
        # interpolate again from the magic values
        u_full = V1 @ u_n1
        P = build_transfer_matrix(tm, ts)
        transferred = P @ u_full[tm.dof_indices]
        oracle_trace = reducer.deim.reconstruct(transferred[reducer.deim.indices])
        assert np.linalg.norm(trace - oracle_trace) <= 1e-10 * max(
            np.linalg.norm(oracle_trace), 1e-30
        )
        # lifting oracle: project the zero-extended Dirichlet vector
        full_dirichlet = np.zeros(V2.shape[0])
        full_dirichlet[ts.dof_indices] = trace
        oracle_lift = V2.T @ (K2 @ full_dirichlet)
        assert np.linalg.norm(lift - oracle_lift) <= 1e-10 * max(
            np.linalg.norm(oracle_lift), 1e-30
        )

    def test_order_covariance_under_permutation(self):
        reducer, tm, ts, S_D, V1, V2, K2 = make_reducer_setup()
        rng = np.random.default_rng(31)
        perm = rng.permutation(reducer.m)
        permuted = make_deim_basis(reducer.deim.Phi, indices=reducer.deim.indices[perm])
        other = assemble_reducer(permuted, tm, ts, V1, V2, {"A": K2})
        u_n1 = rng.standard_normal(V1.shape[1])
        t0, l0 = apply_deim(reducer, u_n1)
        t1, l1 = apply_deim(other, u_n1)
        assert np.allclose(t0, t1, atol=1e-11 * max(1.0, np.abs(t0).max()))
        assert np.allclose(l0, l1, atol=1e-11 * max(1.0, np.abs(l0).max()))

    def test_reconstruction_error_surrogate_bound(self):
        # the computable two-norm surrogate dominates the interpolation error
        rng = np.random.default_rng(41)
        Phi, _ = np.linalg.qr(rng.standard_normal((30, 5)))
        basis = make_deim_basis(Phi)
        inv_norm = np.linalg.norm(np.linalg.inv(Phi[basis.indices]), 2)
        for _ in range(20):
            w = rng.standard_normal(30)
            rec = basis.reconstruct(w[basis.indices])
            proj = np.linalg.norm(w - Phi @ (Phi.T @ w))
            assert np.linalg.norm(w - rec) <= inv_norm * proj * (1 + 1e-10)

    def test_constant_master_field_constant_trace(self):
        mesh, tm = cube_trace(3)
        slave_mesh = build_box_mesh((1, 0, 0), (1, 1, 1), (3, 3, 3))
        ts = extract_interface(slave_mesh, "x-")
        const = np.ones(len(ts))
        V1 = np.zeros((mesh.n_dofs, 1))
        V1[tm.dof_indices, 0] = 1.0
        reducer = build_interface_reducer(const[:, None], 1e-10, tm, ts, V1, None)
        trace, _ = apply_deim(reducer, np.array([1.0]))
        assert np.allclose(trace, 1.0, atol=1e-12)
