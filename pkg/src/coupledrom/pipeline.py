"""Offline training and online reduced solves for one-way coupled problems.

Offline: solve the full-order master and slave over a training sample, stack
solution and transferred-interface snapshots, build the three bases and the
interface reducer, and project every operator term.  Online: solve the two
small reduced systems and reassemble the slave field; apart from the final
expansions, no online operation touches full-order dimensions.
"""

from __future__ import annotations

import logging
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import fem
from .errors import ConfigError, SingularRomError
from .interface import (
    InterfaceReducer,
    assemble_reducer,
    build_transfer_matrix,
    make_deim_basis,
)
from .mesh import InterfaceTrace, Mesh, extract_interface
from .pod import PodFactorization, ReducedBasis, SnapshotSet
from .problems import (
    CoupledProblemSpec,
    SubmodelSpec,
    eval_spatial,
    eval_theta,
    spatial_coefficient,
)
from .sampling import SampleSet, lhs_sample

log = logging.getLogger(__name__)

#: deterministic offset separating master and slave sample streams
_SLAVE_SEED_OFFSET = 0x9E3779B9


class OpLog:
    """Record of matrix-product shapes on the online path.

    Lets tests assert that nothing on the online path scales with full-order
    dimensions except the explicitly named final expansions.
    """

    def __init__(self):
        self.records: list[tuple[str, int, int]] = []

    def matmul(self, name: str, A: np.ndarray, x: np.ndarray) -> np.ndarray:
        self.records.append((name, int(A.shape[0]), int(A.shape[1])))
        return A @ x

    def max_dim(self, exclude_prefix: str = "expand") -> int:
        dims = [
            max(r, c)
            for name, r, c in self.records
            if not name.startswith(exclude_prefix)
        ]
        return max(dims) if dims else 0


def _noop_matmul(name, A, x):
    return A @ x


# ---------------------------------------------------------------------------
# full-order side


@dataclass
class FomSubmodel:
    """Assembled full-order operators for one submodel."""

    spec: SubmodelSpec
    mesh: Mesh
    interface: InterfaceTrace
    op_terms: list[tuple[object, sp.csr_matrix]]
    mass: sp.csr_matrix | None
    load_terms: list[tuple[object, np.ndarray]]
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray
    u0: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs

    def theta_weights(self, mu: Mapping, t: float | None = None) -> list[float]:
        return [eval_theta(theta, mu, t) for theta, _ in self.op_terms]

    def assemble_operator(self, mu: Mapping, t: float | None = None) -> sp.csr_matrix:
        weights = self.theta_weights(mu, t)
        out = weights[0] * self.op_terms[0][1]
        for w, (_, A) in zip(weights[1:], self.op_terms[1:]):
            out = out + w * A
        return out.tocsr()

    def assemble_load(self, mu: Mapping, t: float | None = None) -> np.ndarray:
        out = np.zeros(self.n_dofs)
        for theta, vec in self.load_terms:
            out += eval_theta(theta, mu, t) * vec
        return out

    def mu_mapping(self, mu) -> dict[str, float]:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.size != self.spec.parameters.dim:
            raise ConfigError(
                f"expected {self.spec.parameters.dim} parameter value(s), got {mu.size}"
            )
        return self.spec.parameters.as_mapping(mu)


def build_submodel(spec: SubmodelSpec, role: str) -> FomSubmodel:
    spec.validate(role)
    mesh = spec.mesh.build()
    quad = fem.cell_quadrature(mesh)
    terms = []
    for term in spec.operator:
        coeff = spatial_coefficient(term.coefficient)
        if term.kind == "diffusion":
            A = fem.assemble_stiffness(mesh, coeff, quadrature=quad)
        elif term.kind == "reaction":
            A = fem.assemble_mass(mesh, coeff, quadrature=quad)
        else:
            A = fem.assemble_advection(mesh, coeff, quadrature=quad)
        terms.append((term.theta, A))
    mass = fem.assemble_mass(mesh, quadrature=quad) if spec.unsteady else None
    loads = [
        (t.theta, fem.assemble_load(mesh, spatial_coefficient(t.profile)))
        for t in spec.forcing
    ]
    interface = extract_interface(mesh, spec.interface_tag)

    pairs = []
    for face, value in spec.dirichlet.items():
        dofs = extract_interface(mesh, face).dof_indices
        pairs.extend((int(d), float(value)) for d in dofs)
    d_dofs, d_values = fem._normalize_dirichlet(pairs)
    if role == "slave" and np.intersect1d(d_dofs, interface.dof_indices).size:
        raise ConfigError(
            "slave Dirichlet faces share DoFs with the interface face",
            field="slave.dirichlet",
        )
    u0 = np.asarray(eval_spatial(spec.initial, mesh.node_coords), dtype=float).copy()
    return FomSubmodel(
        spec=spec,
        mesh=mesh,
        interface=interface,
        op_terms=terms,
        mass=mass,
        load_terms=loads,
        dirichlet_dofs=d_dofs,
        dirichlet_values=d_values,
        u0=u0,
    )


@dataclass
class FomProblem:
    spec: CoupledProblemSpec
    master: FomSubmodel
    slave: FomSubmodel
    transfer: sp.csr_matrix  # slave trace x master trace
    #: true when every slave trace point coincides with a master trace point
    #: (conforming meshes or nested refinements); the transfer is then exact
    conforming: bool


def build_fom(spec: CoupledProblemSpec) -> FomProblem:
    spec.validate()
    master = build_submodel(spec.master, "master")
    slave = build_submodel(spec.slave, "slave")
    transfer = build_transfer_matrix(
        master.interface, slave.interface, max_distance=master.mesh.cell_diagonal
    )
    conforming = transfer.nnz == transfer.shape[0] and np.all(transfer.data == 1.0)
    return FomProblem(
        spec=spec, master=master, slave=slave, transfer=transfer, conforming=conforming
    )


def _constrained_steady_solve(A, f, dofs, values):
    A_bc, f_bc = fem.apply_dirichlet_lifting(A, f, zip(dofs, values))
    return fem.solve_steady(A_bc, f_bc)


def _march_constrained(M, A, dofs, values_of_step, load_of_t, u0, dt, n_steps):
    """BDF1 marching with (possibly time-varying) Dirichlet values."""
    S = (M / dt + A).tocsr()
    S_bc = fem.eliminate_rows_cols(S, dofs)
    solver = fem.factorized_solver(S_bc)
    m_dt = (M / dt).tocsr()
    traj = np.empty((n_steps + 1, M.shape[0]))
    traj[0] = u0
    for k in range(n_steps):
        c = np.zeros(M.shape[0])
        c[dofs] = values_of_step(k + 1)
        rhs = load_of_t((k + 1) * dt) + m_dt @ traj[k] - S @ c
        rhs[dofs] = 0.0
        u = solver(rhs)
        u[dofs] = c[dofs]
        traj[k + 1] = u
    return traj


def _steady_response_series(A, dofs, values_of_step, load_of_t, dt, n_steps):
    """Per-step steady solves of a time-independent operator under
    time-varying Dirichlet data."""
    A_bc = fem.eliminate_rows_cols(A, dofs)
    solver = fem.factorized_solver(A_bc)
    traj = np.empty((n_steps + 1, A.shape[0]))
    for k in range(n_steps + 1):
        c = np.zeros(A.shape[0])
        c[dofs] = values_of_step(k)
        rhs = load_of_t(k * dt) - A @ c
        rhs[dofs] = 0.0
        u = solver(rhs)
        u[dofs] = c[dofs]
        traj[k] = u
    return traj


@dataclass
class FomResult:
    master: np.ndarray  # (N1,) or (n_steps+1, N1)
    slave: np.ndarray  # (N2,) or (n_steps+1, N2)
    dirichlet: np.ndarray  # transferred interface data, per step when unsteady
    timings: dict


def fom_coupled_solve(fom: FomProblem, mu1, mu2) -> FomResult:
    """Reference path: master solve, trace transfer, slave solve."""
    mu1m = fom.master.mu_mapping(mu1)
    mu2m = fom.slave.mu_mapping(mu2)
    t0 = _time.perf_counter()
    if not fom.spec.is_unsteady:
        A1 = fom.master.assemble_operator(mu1m)
        f1 = fom.master.assemble_load(mu1m)
        u1 = _constrained_steady_solve(
            A1, f1, fom.master.dirichlet_dofs, fom.master.dirichlet_values
        )
        t1 = _time.perf_counter()
        g = fom.transfer @ u1[fom.master.interface.dof_indices]
        slave_dofs = np.concatenate(
            [fom.slave.dirichlet_dofs, fom.slave.interface.dof_indices]
        )
        slave_vals = np.concatenate([fom.slave.dirichlet_values, g])
        A2 = fom.slave.assemble_operator(mu2m)
        f2 = fom.slave.assemble_load(mu2m)
        u2 = _constrained_steady_solve(A2, f2, slave_dofs, slave_vals)
        t2 = _time.perf_counter()
        return FomResult(
            master=u1,
            slave=u2,
            dirichlet=g,
            timings={"master_s": t1 - t0, "slave_s": t2 - t1, "total_s": t2 - t0},
        )

    ts = fom.spec.time
    A1 = fom.master.assemble_operator(mu1m)
    u0_1 = fom.master.u0.copy()
    u0_1[fom.master.dirichlet_dofs] = fom.master.dirichlet_values
    traj1 = _march_constrained(
        fom.master.mass,
        A1,
        fom.master.dirichlet_dofs,
        lambda k: fom.master.dirichlet_values,
        lambda t: fom.master.assemble_load(mu1m, t),
        u0_1,
        ts.dt,
        ts.n_steps,
    )
    t1 = _time.perf_counter()
    g_traj = (fom.transfer @ traj1[:, fom.master.interface.dof_indices].T).T

    slave_dofs = np.concatenate(
        [fom.slave.dirichlet_dofs, fom.slave.interface.dof_indices]
    )

    def slave_values(k):
        return np.concatenate([fom.slave.dirichlet_values, g_traj[k]])

    A2 = fom.slave.assemble_operator(mu2m)
    if fom.slave.spec.unsteady:
        u0_2 = fom.slave.u0.copy()
        u0_2[slave_dofs] = slave_values(0)
        traj2 = _march_constrained(
            fom.slave.mass,
            A2,
            slave_dofs,
            slave_values,
            lambda t: fom.slave.assemble_load(mu2m, t),
            u0_2,
            ts.dt,
            ts.n_steps,
        )
    else:
        traj2 = _steady_response_series(
            A2,
            slave_dofs,
            slave_values,
            lambda t: fom.slave.assemble_load(mu2m, t),
            ts.dt,
            ts.n_steps,
        )
    t2 = _time.perf_counter()
    return FomResult(
        master=traj1,
        slave=traj2,
        dirichlet=g_traj,
        timings={"master_s": t1 - t0, "slave_s": t2 - t1, "total_s": t2 - t0},
    )


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainingData:
    """Snapshots and their factorizations; independent of any tolerance."""

    fom: FomProblem
    master_samples: SampleSet
    slave_samples: SampleSet
    snapshots_master: SnapshotSet
    snapshots_slave: SnapshotSet  # interface rows zeroed (homogenized part)
    snapshots_dirichlet: SnapshotSet
    pod_master: PodFactorization
    pod_slave: PodFactorization
    pod_dirichlet: PodFactorization
    pairing: str
    seed: int
    timings: dict


def run_training(
    spec_or_fom,
    n_train: int,
    seed: int,
    pairing: str = "paired",
    centered: bool = False,
    threads: int = 1,
) -> TrainingData:
    """Solve the coupled full-order model over the training plan and collect
    the three snapshot families."""
    if n_train < 2:
        raise ConfigError("insufficient training samples: n_train must be >= 2")
    if pairing not in ("paired", "tensor"):
        raise ConfigError(f"pairing must be 'paired' or 'tensor', got {pairing!r}")
    fom = spec_or_fom if isinstance(spec_or_fom, FomProblem) else build_fom(spec_or_fom)
    t0 = _time.perf_counter()

    m_space, s_space = fom.master.spec.parameters, fom.slave.spec.parameters
    master_samples = lhs_sample(m_space, n_train, seed, "train", centered)
    slave_samples = lhs_sample(
        s_space, n_train, seed + _SLAVE_SEED_OFFSET, "train", centered
    )
    if pairing == "paired":
        pairs = [(i, i) for i in range(n_train)]
    else:
        pairs = [(i, j) for i in range(n_train) for j in range(n_train)]

    nt = fom.spec.time.n_steps if fom.spec.is_unsteady else None
    cols_per = nt if nt else 1
    n_cols = len(pairs) * cols_per
    S1 = np.empty((fom.master.n_dofs, n_cols))
    S2 = np.empty((fom.slave.n_dofs, n_cols))
    SD = np.empty((len(fom.slave.interface), n_cols))
    col_params: list = [None] * n_cols
    col_times: list = [None] * n_cols

    def solve_pair(k: int):
        i, j = pairs[k]
        res = fom_coupled_solve(fom, master_samples.points[i], slave_samples.points[j])
        return k, res

    def commit(k: int, res: FomResult):
        i, j = pairs[k]
        base = k * cols_per
        if nt:
            # columns are the states at t_1 .. t_nt; t_0 is data, not response
            S1[:, base : base + nt] = res.master[1:].T
            S2[:, base : base + nt] = res.slave[1:].T
            SD[:, base : base + nt] = res.dirichlet[1:].T
            for s in range(nt):
                col_params[base + s] = (tuple(master_samples.points[i]), tuple(slave_samples.points[j]))
                col_times[base + s] = (s + 1) * fom.spec.time.dt
        else:
            S1[:, base] = res.master
            S2[:, base] = res.slave
            SD[:, base] = res.dirichlet
            col_params[base] = (tuple(master_samples.points[i]), tuple(slave_samples.points[j]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for k, res in pool.map(solve_pair, range(len(pairs))):
                commit(k, res)
    else:
        for k in range(len(pairs)):
            commit(*solve_pair(k))
    t_solve = _time.perf_counter()

    gamma2 = fom.slave.interface.dof_indices
    S2[gamma2, :] = 0.0  # homogenized slave snapshots
    snap1 = SnapshotSet(matrix=S1, params=tuple(col_params), times=tuple(col_times))
    snap2 = SnapshotSet(matrix=S2, params=tuple(col_params), times=tuple(col_times))
    snapD = SnapshotSet(matrix=SD, params=tuple(col_params), times=tuple(col_times))
    pod1 = PodFactorization(snap1)
    pod2 = PodFactorization(snap2)
    podD = PodFactorization(snapD)
    t_pod = _time.perf_counter()

    log.info(
        "training: %d coupled solves (%d snapshot columns) in %.2fs, POD in %.2fs",
        len(pairs),
        n_cols,
        t_solve - t0,
        t_pod - t_solve,
    )
    return TrainingData(
        fom=fom,
        master_samples=master_samples,
        slave_samples=slave_samples,
        snapshots_master=snap1,
        snapshots_slave=snap2,
        snapshots_dirichlet=snapD,
        pod_master=pod1,
        pod_slave=pod2,
        pod_dirichlet=podD,
        pairing=pairing,
        seed=seed,
        timings={"fom_solves_s": t_solve - t0, "pod_s": t_pod - t_solve},
    )


# ---------------------------------------------------------------------------
# reduced artifacts


@dataclass
class ReducedSubmodel:
    basis: ReducedBasis
    op_terms: list[tuple[object, np.ndarray]]
    mass: np.ndarray | None
    load_terms: list[tuple[object, np.ndarray]]
    u0_reduced: np.ndarray
    unsteady: bool

    @property
    def n(self) -> int:
        return self.basis.n

    def theta_weights(self, mu: Mapping, t: float | None = None) -> list[float]:
        return [eval_theta(theta, mu, t) for theta, _ in self.op_terms]

    def assemble_operator(self, mu: Mapping, t: float | None = None) -> np.ndarray:
        weights = self.theta_weights(mu, t)
        out = weights[0] * self.op_terms[0][1]
        for w, (_, A) in zip(weights[1:], self.op_terms[1:]):
            out = out + w * A
        return out

    def assemble_load(self, mu: Mapping, t: float | None = None) -> np.ndarray:
        out = np.zeros(self.n)
        for theta, vec in self.load_terms:
            out += eval_theta(theta, mu, t) * vec
        return out


@dataclass
class RomArtifacts:
    """Everything the online phase needs besides parameter values."""

    spec: CoupledProblemSpec
    master: ReducedSubmodel
    slave: ReducedSubmodel
    reducer: InterfaceReducer
    tolerances: tuple[float, float, float]  # (master, slave, interface)
    provenance: dict = field(default_factory=dict)

    @property
    def basis_sizes(self) -> dict:
        return {"master": self.master.n, "slave": self.slave.n, "interface": self.reducer.m}


def _zero_rows(V: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # constrained rows must vanish exactly so that raw-matrix Galerkin
    # products coincide with the eliminated system
    V = V.copy()
    if rows.size:
        V[rows, :] = 0.0
    return V


def _project_submodel(sub: FomSubmodel, V: np.ndarray, basis: ReducedBasis) -> ReducedSubmodel:
    op_terms = [(theta, np.asarray(V.T @ (A @ V))) for theta, A in sub.op_terms]
    mass = np.asarray(V.T @ (sub.mass @ V)) if sub.mass is not None else None
    load_terms = [(theta, np.asarray(V.T @ vec)) for theta, vec in sub.load_terms]
    u0_reduced = np.asarray(V.T @ sub.u0)
    return ReducedSubmodel(
        basis=basis,
        op_terms=op_terms,
        mass=mass,
        load_terms=load_terms,
        u0_reduced=u0_reduced,
        unsteady=sub.spec.unsteady,
    )


def _assemble_artifacts(
    fom: FomProblem,
    V1: np.ndarray,
    sv1: np.ndarray,
    V2: np.ndarray,
    sv2: np.ndarray,
    deim_basis,
    tolerances,
    provenance,
) -> RomArtifacts:
    V1 = _zero_rows(V1, fom.master.dirichlet_dofs)
    slave_constrained = np.union1d(
        fom.slave.dirichlet_dofs, fom.slave.interface.dof_indices
    )
    V2 = _zero_rows(V2, slave_constrained)
    basis1 = ReducedBasis(V=V1, singular_values=sv1, tolerance=tolerances[0])
    basis2 = ReducedBasis(V=V2, singular_values=sv2, tolerance=tolerances[1])

    slave_ops = {f"A{q}": A for q, (_, A) in enumerate(fom.slave.op_terms)}
    if fom.slave.spec.unsteady:
        slave_ops["M"] = fom.slave.mass
    reducer = assemble_reducer(
        deim_basis,
        fom.master.interface,
        fom.slave.interface,
        V1,
        V2,
        slave_operators=slave_ops,
    )
    master_red = _project_submodel(fom.master, V1, basis1)
    slave_red = _project_submodel(fom.slave, V2, basis2)
    return RomArtifacts(
        spec=fom.spec,
        master=master_red,
        slave=slave_red,
        reducer=reducer,
        tolerances=tuple(tolerances),
        provenance=provenance,
    )


def build_artifacts(training: TrainingData, tolerances) -> RomArtifacts:
    """Truncate the training factorizations at the given (master, slave,
    interface) tolerances and assemble all stored online products."""
    eps1, eps2, eps_d = tolerances
    t0 = _time.perf_counter()
    b1 = training.pod_master.truncate(eps1)
    b2 = training.pod_slave.truncate(eps2)
    bd = training.pod_dirichlet.truncate(eps_d)
    fom = training.fom
    if bd.n > len(fom.master.interface):
        from .errors import OversamplingError

        raise OversamplingError(
            f"{bd.n} interpolation indices exceed master trace size "
            f"{len(fom.master.interface)}"
        )
    deim_basis = make_deim_basis(bd.V)
    provenance = {
        "n_train": len(training.master_samples),
        "seed": training.seed,
        "pairing": training.pairing,
        "tolerances": {"master": eps1, "slave": eps2, "interface": eps_d},
        "master_samples": training.master_samples.points.tolist(),
        "slave_samples": training.slave_samples.points.tolist(),
        "mesh_hashes": {
            "master": fom.master.mesh.content_hash(),
            "slave": fom.slave.mesh.content_hash(),
        },
        "conforming": bool(fom.conforming),
        "timings": dict(training.timings),
    }
    artifacts = _assemble_artifacts(
        fom, b1.V, b1.singular_values, b2.V, b2.singular_values,
        deim_basis, (eps1, eps2, eps_d), provenance,
    )
    artifacts.provenance["timings"]["reduce_s"] = _time.perf_counter() - t0
    log.info(
        "artifacts: basis sizes %s at tolerances %s",
        artifacts.basis_sizes,
        tolerances,
    )
    return artifacts


def offline(
    spec: CoupledProblemSpec,
    n_train: int,
    tolerances,
    seed: int,
    pairing: str = "paired",
    centered: bool = False,
    threads: int = 1,
) -> RomArtifacts:
    """Complete offline stage: training solves, bases, stored products."""
    training = run_training(spec, n_train, seed, pairing, centered, threads)
    return build_artifacts(training, tolerances)


def full_rank_artifacts(spec: CoupledProblemSpec) -> RomArtifacts:
    """Exactness-limit artifacts: identity bases on all free DoFs and a full
    interpolation basis on the slave trace (no truncation anywhere)."""
    fom = build_fom(spec)
    n1, n2 = fom.master.n_dofs, fom.slave.n_dofs
    free1 = np.setdiff1d(np.arange(n1), fom.master.dirichlet_dofs)
    slave_constrained = np.union1d(
        fom.slave.dirichlet_dofs, fom.slave.interface.dof_indices
    )
    free2 = np.setdiff1d(np.arange(n2), slave_constrained)
    V1 = np.eye(n1)[:, free1]
    V2 = np.eye(n2)[:, free2]
    n_trace = len(fom.slave.interface)
    deim_basis = make_deim_basis(np.eye(n_trace), indices=np.arange(n_trace))
    return _assemble_artifacts(
        fom,
        V1,
        np.ones(V1.shape[1]),
        V2,
        np.ones(V2.shape[1]),
        deim_basis,
        (0.0, 0.0, 0.0),
        {"full_rank": True},
    )


# ---------------------------------------------------------------------------
# online


@dataclass
class OnlineResult:
    master_reduced: np.ndarray  # (n1,) or (n_steps+1, n1)
    slave_reduced: np.ndarray  # homogeneous part, same layout
    trace: np.ndarray | None  # Dirichlet data on the slave trace
    slave_solution: np.ndarray | None  # expanded full-order slave field
    diagnostics: dict


def _check_in_range(sub: FomSubmodel | ReducedSubmodel, spec_params, mu, label, warnings):
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.size and not spec_params.contains(mu):
        msg = f"{label} parameters {mu.tolist()} outside trained ranges"
        warnings.append(msg)
        log.warning("%s (proceeding)", msg)


def _lift_weights(artifacts: RomArtifacts, mu2m: Mapping, t: float | None = None) -> dict:
    weights = {
        f"A{q}": w
        for q, w in enumerate(artifacts.slave.theta_weights(mu2m, t))
    }
    return weights


def _solve_dense(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularRomError(
            f"reduced system singular ({exc}); tolerances may be too loose"
        )


def online_steady(
    artifacts: RomArtifacts, mu1, mu2, expand: bool = True, oplog: OpLog | None = None
) -> OnlineResult:
    """Reduced master solve, reduced slave solve, optional expansion."""
    mm = oplog.matmul if oplog else _noop_matmul
    spec = artifacts.spec
    warnings: list[str] = []
    mu1m = spec.master.parameters.as_mapping(np.atleast_1d(np.asarray(mu1, float)))
    mu2m = spec.slave.parameters.as_mapping(np.atleast_1d(np.asarray(mu2, float)))
    _check_in_range(artifacts.master, spec.master.parameters, mu1, "master", warnings)
    _check_in_range(artifacts.slave, spec.slave.parameters, mu2, "slave", warnings)

    t0 = _time.perf_counter()
    A1 = artifacts.master.assemble_operator(mu1m)
    f1 = artifacts.master.assemble_load(mu1m)
    u_n1 = _solve_dense(A1, f1)

    lifting = artifacts.reducer.reduced_lifting(u_n1, _lift_weights(artifacts, mu2m))
    A2 = artifacts.slave.assemble_operator(mu2m)
    f2 = artifacts.slave.assemble_load(mu2m)
    u_n2 = _solve_dense(A2, f2 - lifting)
    t_solve = _time.perf_counter() - t0

    trace = slave_solution = None
    t_expand = 0.0
    if expand:
        t1 = _time.perf_counter()
        trace = mm("expand_trace", artifacts.reducer.full_transfer, u_n1)
        slave_solution = mm("expand_slave", artifacts.slave.basis.V, u_n2)
        slave_solution[artifacts.reducer.slave_trace.dof_indices] = trace
        t_expand = _time.perf_counter() - t1

    return OnlineResult(
        master_reduced=u_n1,
        slave_reduced=u_n2,
        trace=trace,
        slave_solution=slave_solution,
        diagnostics={
            "online_s": t_solve,
            "expand_s": t_expand,
            "basis_sizes": artifacts.basis_sizes,
            "warnings": warnings,
        },
    )


def online_unsteady(
    artifacts: RomArtifacts, mu1, mu2, expand: bool = True, oplog: OpLog | None = None
) -> OnlineResult:
    """Reduced BDF1 marching of the coupled pair.

    The master marches implicitly; the slave either marches with the
    precomputed mass/stiffness lifting products or, when declared steady,
    responds instantaneously to each new interface state.
    """
    mm = oplog.matmul if oplog else _noop_matmul
    spec = artifacts.spec
    if spec.time is None:
        raise ConfigError("online_unsteady requires a time grid", field="time")
    warnings: list[str] = []
    mu1m = spec.master.parameters.as_mapping(np.atleast_1d(np.asarray(mu1, float)))
    mu2m = spec.slave.parameters.as_mapping(np.atleast_1d(np.asarray(mu2, float)))
    _check_in_range(artifacts.master, spec.master.parameters, mu1, "master", warnings)
    _check_in_range(artifacts.slave, spec.slave.parameters, mu2, "slave", warnings)

    dt, n_steps = spec.time.dt, spec.time.n_steps
    t0 = _time.perf_counter()

    # master: (M/dt + A) u^{k+1} = f^{k+1} + (M/dt) u^k
    m1 = artifacts.master
    A1 = m1.assemble_operator(mu1m)
    M1_dt = m1.mass / dt
    lu1 = sla.lu_factor(M1_dt + A1)
    u1 = np.empty((n_steps + 1, m1.n))
    u1[0] = m1.u0_reduced
    for k in range(n_steps):
        rhs = m1.assemble_load(mu1m, (k + 1) * dt) + mm("master_mass", M1_dt, u1[k])
        u1[k + 1] = sla.lu_solve(lu1, rhs)

    s2 = artifacts.slave
    reducer = artifacts.reducer
    stiff_weights = _lift_weights(artifacts, mu2m)
    u2 = np.empty((n_steps + 1, s2.n))
    if s2.unsteady:
        LM = reducer.lift_products["M"]
        LA = None
        for key, w in stiff_weights.items():
            term = w * reducer.lift_products[key]
            LA = term if LA is None else LA + term
        A2 = s2.assemble_operator(mu2m)
        M2_dt = s2.mass / dt
        lu2 = sla.lu_factor(M2_dt + A2)
        u2[0] = s2.u0_reduced
        for k in range(n_steps):
            rhs = (
                s2.assemble_load(mu2m, (k + 1) * dt)
                + mm("slave_mass", M2_dt, u2[k])
                + mm("lift_mass", LM / dt, u1[k] - u1[k + 1])
                - mm("lift_stiff", LA, u1[k + 1])
            )
            u2[k + 1] = sla.lu_solve(lu2, rhs)
    else:
        A2 = s2.assemble_operator(mu2m)
        lu2 = sla.lu_factor(A2)
        for k in range(n_steps + 1):
            lifting = reducer.reduced_lifting(u1[k], stiff_weights)
            u2[k] = sla.lu_solve(lu2, s2.assemble_load(mu2m, k * dt) - lifting)
    t_solve = _time.perf_counter() - t0

    trace = slave_solution = None
    t_expand = 0.0
    if expand:
        t1 = _time.perf_counter()
        trace = mm("expand_trace", reducer.full_transfer, u1.T).T
        slave_solution = mm("expand_slave", s2.basis.V, u2.T).T
        slave_solution[:, reducer.slave_trace.dof_indices] = trace
        t_expand = _time.perf_counter() - t1

    return OnlineResult(
        master_reduced=u1,
        slave_reduced=u2,
        trace=trace,
        slave_solution=slave_solution,
        diagnostics={
            "online_s": t_solve,
            "expand_s": t_expand,
            "basis_sizes": artifacts.basis_sizes,
            "warnings": warnings,
        },
    )


def online_solve(artifacts: RomArtifacts, mu1, mu2, **kwargs) -> OnlineResult:
    if artifacts.spec.is_unsteady:
        return online_unsteady(artifacts, mu1, mu2, **kwargs)
    return online_steady(artifacts, mu1, mu2, **kwargs)
