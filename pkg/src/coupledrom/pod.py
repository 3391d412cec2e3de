"""Orthonormal reduced bases from snapshot matrices.

Truncation follows the relative-energy rule: the basis size ``n`` is the
smallest integer with ``sum_{i>n} s_i^2 <= tol^2 * sum_i s_i^2``.  For tall
snapshot matrices the factorization goes through the Gram matrix (method of
snapshots); the computed vectors are then re-orthonormalized with a thin QR
so the orthonormality contract holds even for singular values close to the
truncation floor.  Column signs are fixed so the first nonzero entry of each
basis vector is positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSnapshotsError, DimensionMismatchError, RomError
from .mesh import InterfaceTrace

#: switch to the Gram-matrix path when rows exceed this multiple of columns
SNAPSHOT_METHOD_RATIO = 4


@dataclass(frozen=True)
class SnapshotSet:
    """Column-stacked solution vectors with their generating parameters."""

    matrix: np.ndarray = field(repr=False)  # (N, n_snapshots)
    params: tuple = ()
    times: tuple | None = None

    def __post_init__(self):
        if self.params and len(self.params) != self.matrix.shape[1]:
            raise DimensionMismatchError(
                f"{len(self.params)} parameter records for "
                f"{self.matrix.shape[1]} snapshot columns"
            )

    @property
    def n_snapshots(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ReducedBasis:
    """Orthonormal basis with the full singular value list kept for audits."""

    V: np.ndarray = field(repr=False)  # (N, n)
    singular_values: np.ndarray = field(repr=False)  # full, non-increasing
    tolerance: float

    @property
    def n(self) -> int:
        return self.V.shape[1]

    @property
    def n_full(self) -> int:
        return self.V.shape[0]


class PodFactorization:
    """Full left-singular factorization of one snapshot matrix.

    Computed once; ``truncate`` slices it for any tolerance, which makes
    tolerance sweeps cheap.
    """

    def __init__(self, snapshots: SnapshotSet | np.ndarray):
        X = snapshots.matrix if isinstance(snapshots, SnapshotSet) else snapshots
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DimensionMismatchError("snapshot matrix must be 2-D and nonempty")
        if not np.any(X):
            raise DegenerateSnapshotsError("snapshot matrix is identically zero")
        n_rows, n_cols = X.shape
        if n_rows >= SNAPSHOT_METHOD_RATIO * n_cols:
            gram = X.T @ X
            lam, W = np.linalg.eigh(gram)
            lam, W = lam[::-1], W[:, ::-1]
            sigma = np.sqrt(np.clip(lam, 0.0, None))
            rank = int(np.sum(sigma > sigma[0] * n_rows * np.finfo(float).eps))
            U = X @ (W[:, :rank] / sigma[:rank])
            # re-orthonormalize: Gram-path vectors lose orthogonality near the
            # spectral tail at a rate (s_1/s_i)^2 * eps
            U, _ = np.linalg.qr(U)
        else:
            U, sigma, _ = np.linalg.svd(X, full_matrices=False)
            rank = int(np.sum(sigma > sigma[0] * max(X.shape) * np.finfo(float).eps))
            U = U[:, :rank]
        self.U = _fix_signs(U)
        self.singular_values = sigma

    def size_for(self, tolerance: float) -> int:
        if not 0.0 < tolerance < 1.0:
            raise RomError(f"POD tolerance must be in (0, 1), got {tolerance}")
        s2 = self.singular_values**2
        cs = np.cumsum(s2)
        total = cs[-1]
        tail = total - cs  # tail[k] = energy beyond the first k+1 modes
        n = int(np.searchsorted(-tail, -(tolerance**2) * total) + 1)
        return min(n, self.U.shape[1])

    def truncate(self, tolerance: float) -> ReducedBasis:
        n = self.size_for(tolerance)
        return ReducedBasis(
            V=self.U[:, :n].copy(),
            singular_values=self.singular_values.copy(),
            tolerance=tolerance,
        )


def _fix_signs(U: np.ndarray) -> np.ndarray:
    U = U.copy()
    for j in range(U.shape[1]):
        nz = np.nonzero(U[:, j])[0]
        if nz.size and U[nz[0], j] < 0:
            U[:, j] = -U[:, j]
    return U


def pod(snapshots: SnapshotSet | np.ndarray, tolerance: float) -> ReducedBasis:
    """Build the orthonormal basis retaining all but ``tolerance**2`` energy."""
    return PodFactorization(snapshots).truncate(tolerance)


def zero_interface_rows(
    snapshots: SnapshotSet, trace: InterfaceTrace | np.ndarray
) -> SnapshotSet:
    """Copy of the snapshot set with the trace's rows set exactly to zero."""
    rows = trace.dof_indices if isinstance(trace, InterfaceTrace) else np.asarray(trace)
    matrix = snapshots.matrix.copy()
    if rows.size:
        if rows.min() < 0 or rows.max() >= matrix.shape[0]:
            raise DimensionMismatchError(
                f"trace rows exceed snapshot row count {matrix.shape[0]}"
            )
        matrix[rows, :] = 0.0
    return SnapshotSet(matrix=matrix, params=snapshots.params, times=snapshots.times)
