"""Interface Dirichlet-data reduction.

The full-order transfer of interface data is a piecewise-(bi)linear
interpolation from the source trace grid to the target trace points,
realized as a precomputed sparse matrix (a permutation when the traces
conform).  The reduced transfer replaces it with an interpolation basis over
trace snapshots, greedily selected interpolation indices on the target trace
("magic points"), their nearest-DoF counterparts on the source trace, and
dense products that make every online application an operation in reduced
dimensions only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import (
    DegenerateBasisError,
    DimensionMismatchError,
    EmptyTraceError,
    InvalidGeometryError,
    OversamplingError,
    ProjectionDistanceError,
)
from .mesh import InterfaceTrace
from .pod import PodFactorization, ReducedBasis, SnapshotSet

log = logging.getLogger(__name__)

#: coincidence tolerance for conforming-trace detection, relative to trace extent
CONFORMING_RTOL = 1e-12
#: below this size nearest-neighbor queries use brute force
KDTREE_THRESHOLD = 512


# ---------------------------------------------------------------------------
# full-order trace transfer


def _trace_scale(trace: InterfaceTrace) -> float:
    span = trace.coords.max(axis=0) - trace.coords.min(axis=0)
    return float(max(span.max(), 1.0))


def nearest_dof_map(slave_points: np.ndarray, master_trace: InterfaceTrace) -> np.ndarray:
    """Index of the nearest master-trace DoF for each query point.

    Ties are broken by the smallest trace index (equivalently the smallest
    global DoF index, since traces are sorted).
    """
    if len(master_trace) == 0:
        raise EmptyTraceError("master trace is empty")
    pts = np.atleast_2d(np.asarray(slave_points, dtype=float))
    coords = master_trace.coords
    if pts.shape[1] != coords.shape[1]:
        raise DimensionMismatchError(
            f"query points have dim {pts.shape[1]}, trace has dim {coords.shape[1]}"
        )
    if len(master_trace) <= KDTREE_THRESHOLD:
        d2 = np.sum((pts[:, None, :] - coords[None, :, :]) ** 2, axis=2)
        return np.argmin(d2, axis=1)  # argmin takes the first (smallest) index on ties

    tree = cKDTree(coords)
    dist, idx = tree.query(pts)
    out = np.asarray(idx, dtype=np.int64)
    # resolve ties deterministically towards the smallest index
    for k, (p, d) in enumerate(zip(pts, dist)):
        ball = tree.query_ball_point(p, d * (1 + 1e-12) + 1e-300)
        if len(ball) > 1:
            out[k] = min(ball)
    return out


def _locate_1d(grid: np.ndarray, x: np.ndarray):
    """Cell index, barycentric weight and out-of-range distance per point."""
    j = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
    t = (x - grid[j]) / (grid[j + 1] - grid[j])
    outside = np.maximum(grid[0] - x, 0.0) + np.maximum(x - grid[-1], 0.0)
    return j, np.clip(t, 0.0, 1.0), outside


def build_transfer_matrix(
    master_trace: InterfaceTrace,
    slave_trace: InterfaceTrace,
    max_distance: float | None = None,
) -> sp.csr_matrix:
    """Sparse operator carrying master trace values to slave trace points.

    Conforming traces yield an exact permutation.  Otherwise each slave point
    receives the piecewise-(bi)linear interpolation of the master trace grid;
    points outside the master face are snapped to its nearest point, and any
    point farther than ``max_distance`` from the face raises an error.
    """
    if len(master_trace) == 0 or len(slave_trace) == 0:
        raise EmptyTraceError("cannot transfer between empty traces")
    n_m, n_s = len(master_trace), len(slave_trace)
    scale = max(_trace_scale(master_trace), _trace_scale(slave_trace))

    if n_m == n_s:
        match = nearest_dof_map(slave_trace.coords, master_trace)
        dist = np.linalg.norm(slave_trace.coords - master_trace.coords[match], axis=1)
        if np.all(dist <= CONFORMING_RTOL * scale) and len(set(match)) == n_m:
            return sp.csr_matrix(
                (np.ones(n_s), (np.arange(n_s), match)), shape=(n_s, n_m)
            )

    if master_trace.normal_axis is None:
        raise InvalidGeometryError(
            "non-conforming transfer requires a single-face master trace"
        )

    axes = master_trace.inplane_axes
    grids = master_trace.inplane_grids
    pts = slave_trace.coords

    off_plane = np.abs(pts[:, master_trace.normal_axis] - master_trace.plane_value)
    locs = [_locate_1d(g, pts[:, a]) for g, a in zip(grids, axes)]
    outside = np.stack([loc[2] for loc in locs], axis=1)
    total_dist = np.sqrt(off_plane**2 + np.sum(outside**2, axis=1))
    snapped = int(np.sum(total_dist > CONFORMING_RTOL * scale))
    if snapped:
        log.info(
            "transfer: %d of %d slave points snapped to the master face "
            "(max distance %.3e)",
            snapped,
            n_s,
            float(total_dist.max()),
        )
    if max_distance is not None and np.any(total_dist > max_distance):
        worst = int(np.argmax(total_dist))
        raise ProjectionDistanceError(
            f"slave point {worst} lies {total_dist[worst]:.3e} from the master "
            f"face (limit {max_distance:.3e})"
        )

    # tensor the per-axis weights; trace-local column index is
    # idx_high * n_low + idx_low with "low" the faster-varying axis
    if len(axes) == 1:
        j, t, _ = locs[0]
        cols = np.stack([j, j + 1], axis=1)
        wts = np.stack([1.0 - t, t], axis=1)
    else:
        (j0, t0, _), (j1, t1, _) = locs
        n_low = len(grids[0])
        cols = np.stack(
            [
                j1 * n_low + j0,
                j1 * n_low + j0 + 1,
                (j1 + 1) * n_low + j0,
                (j1 + 1) * n_low + j0 + 1,
            ],
            axis=1,
        )
        wts = np.stack(
            [
                (1 - t0) * (1 - t1),
                t0 * (1 - t1),
                (1 - t0) * t1,
                t0 * t1,
            ],
            axis=1,
        )
    rows = np.repeat(np.arange(n_s), cols.shape[1])
    mat = sp.csr_matrix(
        (wts.ravel(), (rows, cols.ravel())), shape=(n_s, n_m)
    )
    mat.eliminate_zeros()
    return mat


def transfer_linear(
    master_trace: InterfaceTrace,
    values: np.ndarray,
    slave_trace: InterfaceTrace,
    max_distance: float | None = None,
) -> np.ndarray:
    """Interpolate master trace values onto the slave trace points."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != len(master_trace):
        raise DimensionMismatchError(
            f"{values.shape[0]} values for a trace of size {len(master_trace)}"
        )
    return build_transfer_matrix(master_trace, slave_trace, max_distance) @ values


# ---------------------------------------------------------------------------
# greedy interpolation indices


def deim_indices(Phi: np.ndarray) -> np.ndarray:
    """Greedy interpolation indices for the columns of ``Phi``.

    The first index maximizes ``|Phi[:, 0]|``; each subsequent index
    maximizes the residual of the next column after interpolation on the
    indices chosen so far.  Indices come out in selection order, not
    ascending.
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[1] == 0:
        raise DimensionMismatchError("basis must be a nonempty 2-D array")
    m = Phi.shape[1]
    indices = [int(np.argmax(np.abs(Phi[:, 0])))]
    if Phi[indices[0], 0] == 0.0:
        raise DegenerateBasisError("first basis column is identically zero", step=1)
    for j in range(1, m):
        sub = Phi[np.array(indices), :j]
        try:
            c = np.linalg.solve(sub, Phi[np.array(indices), j])
        except np.linalg.LinAlgError:
            raise DegenerateBasisError(
                f"interpolation submatrix singular at step {j + 1}", step=j + 1
            )
        r = Phi[:, j] - Phi[:, :j] @ c
        k = int(np.argmax(np.abs(r)))
        if r[k] == 0.0:
            raise DegenerateBasisError(
                f"zero residual at step {j + 1}: column {j} already interpolated",
                step=j + 1,
            )
        indices.append(k)
    return np.asarray(indices, dtype=np.int64)


@dataclass(frozen=True)
class DeimBasis:
    """Interpolation basis with its selected rows pre-factorized."""

    Phi: np.ndarray = field(repr=False)
    indices: np.ndarray  # selection order positions into the trace
    lu: tuple = field(repr=False)
    cond: float

    @property
    def m(self) -> int:
        return self.Phi.shape[1]

    def interpolate(self, values_at_indices: np.ndarray) -> np.ndarray:
        """Coefficients reproducing ``values_at_indices`` at the magic rows."""
        return sla.lu_solve(self.lu, values_at_indices)

    def reconstruct(self, values_at_indices: np.ndarray) -> np.ndarray:
        return self.Phi @ self.interpolate(values_at_indices)


def make_deim_basis(Phi: np.ndarray, indices: np.ndarray | None = None) -> DeimBasis:
    indices = deim_indices(Phi) if indices is None else np.asarray(indices)
    sub = Phi[indices, :]
    try:
        lu = sla.lu_factor(sub)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DegenerateBasisError(f"magic-row submatrix not factorizable: {exc}")
    cond = float(np.linalg.cond(sub))
    log.info("interpolation basis: m=%d, cond(selected rows)=%.3e", Phi.shape[1], cond)
    return DeimBasis(Phi=Phi, indices=indices, lu=lu, cond=cond)


# ---------------------------------------------------------------------------
# interface reducer


@dataclass(frozen=True)
class InterfaceReducer:
    """Offline-assembled reduced transfer of interface Dirichlet data.

    ``point_transfer @ u_n1`` yields the interpolation coefficients from the
    reduced master solution; ``full_transfer @ u_n1`` the Dirichlet values on
    the whole slave trace; ``lift_products[key] @ u_n1`` the reduced lifting
    contribution of the slave operator term ``key``.
    """

    deim: DeimBasis
    master_trace: InterfaceTrace = field(repr=False)
    slave_trace: InterfaceTrace = field(repr=False)
    master_positions: np.ndarray  # into master trace, ordered like deim.indices
    master_indices: np.ndarray  # global master DoFs, same order
    point_transfer: np.ndarray = field(repr=False)  # (m, n1)
    full_transfer: np.ndarray = field(repr=False)  # (len slave trace, n1)
    lift_products: dict = field(repr=False)  # key -> (n2, n1)
    transfer_norm: float  # two-norm of the full-order reduced-transfer operator
    max_magic_distance: float

    @property
    def m(self) -> int:
        return self.deim.m

    def dirichlet_trace(self, u_n1: np.ndarray) -> np.ndarray:
        if len(u_n1) != self.full_transfer.shape[1]:
            raise DimensionMismatchError(
                f"reduced master solution has length {len(u_n1)}, "
                f"expected {self.full_transfer.shape[1]}"
            )
        return self.full_transfer @ u_n1

    def reduced_lifting(self, u_n1: np.ndarray, weights: Mapping | None = None) -> np.ndarray:
        keys = list(self.lift_products)
        if not keys:
            raise DimensionMismatchError("reducer carries no lifting products")
        if weights is None:
            weights = {k: 1.0 for k in keys}
        out = None
        for key, w in weights.items():
            term = w * (self.lift_products[key] @ u_n1)
            out = term if out is None else out + term
        return out


def _basis_matrix(basis) -> np.ndarray:
    return basis.V if isinstance(basis, ReducedBasis) else np.asarray(basis)


def assemble_reducer(
    deim: DeimBasis,
    master_trace: InterfaceTrace,
    slave_trace: InterfaceTrace,
    master_basis,
    slave_basis,
    slave_operators: Mapping[str, sp.spmatrix] | None = None,
) -> InterfaceReducer:
    """Assemble the stored online products for a given interpolation basis."""
    V1 = _basis_matrix(master_basis)
    V2 = _basis_matrix(slave_basis)
    magic_coords = slave_trace.coords[deim.indices]
    master_positions = nearest_dof_map(magic_coords, master_trace)
    master_indices = master_trace.dof_indices[master_positions]
    dist = np.linalg.norm(
        magic_coords - master_trace.coords[master_positions], axis=1
    )
    max_dist = float(dist.max()) if dist.size else 0.0
    log.info("magic points: max slave-master distance %.3e", max_dist)

    # extraction of the master basis rows at the magic DoFs, then the
    # interpolation solve, both folded into dense offline products
    extracted = V1[master_indices, :]  # (m, n1)
    point_transfer = sla.lu_solve(deim.lu, extracted)
    full_transfer = deim.Phi @ point_transfer

    # two-norm of the end-to-end linear map from full master vectors to
    # reconstructed Dirichlet data; duplicate master DoFs merge columns
    G = deim.Phi @ sla.lu_solve(deim.lu, np.eye(deim.m))  # Phi @ inv(Phi_I)
    uniq, inverse = np.unique(master_indices, return_inverse=True)
    merged = np.zeros((G.shape[0], len(uniq)))
    np.add.at(merged.T, inverse, G.T)
    transfer_norm = float(np.linalg.norm(merged, 2))

    lift_products = {}
    if slave_operators:
        gamma = slave_trace.dof_indices
        for key, A in slave_operators.items():
            cols = A.tocsc()[:, gamma]  # (N2, n_trace)
            reduced_cols = V2.T @ cols  # (n2, n_trace)
            lift_products[key] = np.asarray(reduced_cols @ full_transfer)

    return InterfaceReducer(
        deim=deim,
        master_trace=master_trace,
        slave_trace=slave_trace,
        master_positions=master_positions,
        master_indices=master_indices,
        point_transfer=point_transfer,
        full_transfer=full_transfer,
        lift_products=lift_products,
        transfer_norm=transfer_norm,
        max_magic_distance=max_dist,
    )


def build_interface_reducer(
    snapshots: SnapshotSet | np.ndarray,
    tolerance: float,
    master_trace: InterfaceTrace,
    slave_trace: InterfaceTrace,
    master_basis,
    slave_basis,
    slave_operators: Mapping[str, sp.spmatrix] | None = None,
) -> InterfaceReducer:
    """Offline construction: basis over transferred trace snapshots, greedy
    indices, nearest source DoFs, and the stored online products."""
    factorization = PodFactorization(snapshots)
    basis = factorization.truncate(tolerance)
    if basis.n > len(master_trace):
        raise OversamplingError(
            f"{basis.n} interpolation indices exceed the master trace size "
            f"{len(master_trace)}"
        )
    deim = make_deim_basis(basis.V)
    return assemble_reducer(
        deim, master_trace, slave_trace, master_basis, slave_basis, slave_operators
    )


def apply_deim(
    reducer: InterfaceReducer,
    u_n1: np.ndarray,
    weights: Mapping | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Dirichlet data on the full slave trace plus the reduced lifting term.

    Both outputs are computed purely from reduced-dimension products with the
    reduced master solution ``u_n1``.
    """
    trace_values = reducer.dirichlet_trace(np.asarray(u_n1, dtype=float))
    lifting = None
    if reducer.lift_products:
        lifting = reducer.reduced_lifting(u_n1, weights)
    return trace_values, lifting
