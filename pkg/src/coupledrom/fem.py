"""Full-order finite element operators on structured box meshes.

Assembly uses Gauss-Legendre quadrature with ``order + 1`` points per axis,
which integrates the constant-coefficient bilinear forms of tensor-product
Lagrange elements exactly.  Source terms default to a higher-order rule since
forcing data is generally non-polynomial.  All cells of a structured mesh are
congruent, so reference shape data is evaluated once and scattered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    CoefficientDomainError,
    DimensionMismatchError,
    InconsistentConstraintError,
    SolverFailureError,
)
from .mesh import Mesh

#: above this size steady solves switch from sparse LU to Jacobi-preconditioned CG
DIRECT_SOLVE_LIMIT = 200_000
SOLVE_RTOL = 1e-10


# ---------------------------------------------------------------------------
# coefficient fields


class Coefficient:
    """Deterministic scalar or vector field ``(x, t, mu) -> value``."""

    def __init__(self, evaluator: Callable, vector: bool = False):
        self.evaluator = evaluator
        self.vector = vector

    @classmethod
    def constant(cls, value) -> "Coefficient":
        value = np.asarray(value, dtype=float)
        if value.ndim == 0:
            return cls(lambda x, t, mu: np.broadcast_to(value, x.shape[:-1]))
        return cls(
            lambda x, t, mu: np.broadcast_to(value, x.shape[:-1] + value.shape),
            vector=True,
        )

    @classmethod
    def from_callable(cls, fn: Callable, vector: bool = False) -> "Coefficient":
        return cls(fn, vector=vector)

    def evaluate(self, points: np.ndarray, t=None, mu=None) -> np.ndarray:
        out = np.asarray(self.evaluator(points, t, mu or {}), dtype=float)
        if self.vector:
            # keep the field's own component count; callers validate it
            k = out.shape[-1] if out.ndim else 1
            return np.broadcast_to(out, points.shape[:-1] + (k,))
        return np.broadcast_to(out, points.shape[:-1])


def as_coefficient(value, vector: bool = False) -> Coefficient:
    if isinstance(value, Coefficient):
        return value
    if callable(value):
        return Coefficient.from_callable(value, vector=vector)
    return Coefficient.constant(value)


# ---------------------------------------------------------------------------
# reference element and quadrature


def gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points/weights on [0, 1]."""
    g, w = np.polynomial.legendre.leggauss(n)
    return (g + 1.0) / 2.0, w / 2.0


def lagrange_1d(order: int, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the order-q Lagrange basis on [0, 1] nodes."""
    nodes = np.arange(order + 1) / order if order > 0 else np.zeros(1)
    vals = np.ones((order + 1, len(pts)))
    ders = np.zeros((order + 1, len(pts)))
    for j in range(order + 1):
        for k in range(order + 1):
            if k == j:
                continue
            vals[j] *= (pts - nodes[k]) / (nodes[j] - nodes[k])
        for m in range(order + 1):
            if m == j:
                continue
            term = np.ones(len(pts)) / (nodes[j] - nodes[m])
            for k in range(order + 1):
                if k in (j, m):
                    continue
                term *= (pts - nodes[k]) / (nodes[j] - nodes[k])
            ders[j] += term
    return vals, ders


@dataclass(frozen=True)
class CellQuadrature:
    """Shape data shared by all cells of a structured mesh."""

    phi: np.ndarray        # (n_loc, n_qp)
    grad: np.ndarray       # (n_loc, n_qp, dim), physical gradients
    weights: np.ndarray    # (n_qp,), includes |det J|
    points: np.ndarray     # (n_cells, n_qp, dim), physical coordinates


def cell_quadrature(mesh: Mesh, n_qp: int | None = None) -> CellQuadrature:
    dim, order = mesh.dim, mesh.order
    n_qp = n_qp or order + 1
    g, w = gauss_1d(n_qp)
    vals, ders = lagrange_1d(order, g)

    # tensor products with x fastest, matching mesh connectivity
    loc = [np.arange(order + 1)] * dim
    lgrids = np.meshgrid(*loc[::-1], indexing="ij")
    local = np.stack([a.ravel() for a in lgrids[::-1]], axis=1)  # (n_loc, dim)
    qr = [np.arange(n_qp)] * dim
    qgrids = np.meshgrid(*qr[::-1], indexing="ij")
    qidx = np.stack([a.ravel() for a in qgrids[::-1]], axis=1)  # (n_qp_t, dim)

    sizes = np.asarray(mesh.cell_sizes)
    det_j = float(np.prod(sizes))

    n_loc, n_q = local.shape[0], qidx.shape[0]
    phi = np.ones((n_loc, n_q))
    grad = np.ones((n_loc, n_q, dim))
    for a in range(dim):
        va = vals[local[:, a]][:, qidx[:, a]]
        da = ders[local[:, a]][:, qidx[:, a]]
        phi *= va
        for b in range(dim):
            grad[:, :, b] *= da if b == a else va
    grad /= sizes[None, None, :]

    weights = det_j * np.prod(
        np.stack([w[qidx[:, a]] for a in range(dim)], axis=0), axis=0
    )

    # physical quadrature points: cell origin + reference point * cell size
    ref_pts = np.stack([g[qidx[:, a]] for a in range(dim)], axis=1) * sizes
    cell_ranges = [np.arange(n) for n in mesh.subdivisions]
    cgrids = np.meshgrid(*cell_ranges[::-1], indexing="ij")
    cells = np.stack([a.ravel() for a in cgrids[::-1]], axis=1)
    origins = np.asarray(mesh.origin) + cells * sizes
    points = origins[:, None, :] + ref_pts[None, :, :]

    return CellQuadrature(phi=phi, grad=grad, weights=weights, points=points)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    """Accumulate per-cell local matrices (n_cells, n_loc, n_loc) into CSR."""
    conn = mesh.elements
    n_loc = conn.shape[1]
    rows = np.broadcast_to(conn[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(conn[:, None, :], local.shape).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_dofs, mesh.n_dofs)
    ).tocsr()
    mat.eliminate_zeros()
    return mat


# ---------------------------------------------------------------------------
# operator assembly


def assemble_mass(
    mesh: Mesh,
    density=None,
    mu: Mapping | None = None,
    t: float | None = None,
    quadrature: CellQuadrature | None = None,
) -> sp.csr_matrix:
    """Mass matrix with entries ``∫ rho phi_j phi_k`` (``rho = 1`` by default)."""
    q = quadrature or cell_quadrature(mesh)
    if density is None:
        local = np.einsum("aq,bq,q->ab", q.phi, q.phi, q.weights)
        local = np.broadcast_to(local, (mesh.n_cells,) + local.shape)
    else:
        rho = as_coefficient(density).evaluate(q.points, t, mu)
        local = np.einsum("cq,aq,bq,q->cab", rho, q.phi, q.phi, q.weights, optimize=True)
    return _scatter(mesh, local)


def assemble_stiffness(
    mesh: Mesh,
    diffusion,
    reaction=None,
    mu: Mapping | None = None,
    t: float | None = None,
    quadrature: CellQuadrature | None = None,
) -> sp.csr_matrix:
    """Diffusion-reaction operator ``∫ a grad(phi_j).grad(phi_k) + r phi_j phi_k``.

    The diffusion coefficient must be strictly positive at every quadrature
    point.
    """
    q = quadrature or cell_quadrature(mesh)
    a = as_coefficient(diffusion).evaluate(q.points, t, mu)
    if np.any(a <= 0.0):
        raise CoefficientDomainError(
            f"diffusion must be > 0 at quadrature points (min {a.min():g})"
        )
    local = np.einsum("cq,aqk,bqk,q->cab", a, q.grad, q.grad, q.weights, optimize=True)
    if reaction is not None:
        r = as_coefficient(reaction).evaluate(q.points, t, mu)
        if np.any(r != 0.0):
            local = local + np.einsum(
                "cq,aq,bq,q->cab", r, q.phi, q.phi, q.weights, optimize=True
            )
    return _scatter(mesh, local)


def assemble_advection(
    mesh: Mesh,
    velocity,
    mu: Mapping | None = None,
    t: float | None = None,
    quadrature: CellQuadrature | None = None,
) -> sp.csr_matrix:
    """Advection operator with entries ``∫ (v . grad phi_j) phi_k``."""
    q = quadrature or cell_quadrature(mesh)
    v = as_coefficient(velocity, vector=True).evaluate(q.points, t, mu)
    if v.shape[-1] != mesh.dim:
        raise DimensionMismatchError(
            f"velocity has {v.shape[-1]} components, mesh dim is {mesh.dim}"
        )
    local = np.einsum("cqk,aq,bqk,q->cab", v, q.phi, q.grad, q.weights, optimize=True)
    return _scatter(mesh, local)


def assemble_load(
    mesh: Mesh,
    source,
    mu: Mapping | None = None,
    t: float | None = None,
    quadrature: CellQuadrature | None = None,
) -> np.ndarray:
    """Load vector with entries ``∫ f phi_k`` (higher-order default rule)."""
    q = quadrature or cell_quadrature(mesh, n_qp=mesh.order + 4)
    f = as_coefficient(source).evaluate(q.points, t, mu)
    local = np.einsum("cq,aq,q->ca", f, q.phi, q.weights, optimize=True)
    vec = np.zeros(mesh.n_dofs)
    np.add.at(vec, mesh.elements.ravel(), local.ravel())
    return vec


def l2_error(mesh: Mesh, u: np.ndarray, exact: Callable, n_qp: int | None = None) -> float:
    """Quadrature L2 norm of ``u_h - exact`` over the mesh."""
    q = cell_quadrature(mesh, n_qp=n_qp or mesh.order + 3)
    uh = np.einsum("ca,aq->cq", u[mesh.elements], q.phi)
    ue = np.asarray(exact(q.points))
    return float(np.sqrt(np.einsum("cq,q->", (uh - ue) ** 2, q.weights)))


# ---------------------------------------------------------------------------
# Dirichlet constraints


def _normalize_dirichlet(dirichlet) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dirichlet, Mapping):
        items: Iterable = dirichlet.items()
    else:
        items = dirichlet
    seen: dict[int, float] = {}
    for dof, value in items:
        dof = int(dof)
        value = float(value)
        if dof in seen and seen[dof] != value:
            raise InconsistentConstraintError(
                f"DoF {dof} constrained to both {seen[dof]} and {value}"
            )
        seen[dof] = value
    if not seen:
        return np.empty(0, dtype=np.int64), np.empty(0)
    dofs = np.fromiter(sorted(seen), dtype=np.int64)
    return dofs, np.array([seen[d] for d in dofs])


def eliminate_rows_cols(A: sp.spmatrix, dofs: np.ndarray) -> sp.csr_matrix:
    """Zero rows and columns at ``dofs`` and place ones on their diagonal."""
    if len(dofs) == 0:
        return A.tocsr()
    n = A.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[dofs] = True
    coo = A.tocoo()
    keep = ~mask[coo.row] & ~mask[coo.col]
    out = sp.coo_matrix(
        (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=A.shape
    ).tocsr()
    out = out + sp.diags(mask.astype(float), format="csr")
    out.eliminate_zeros()
    return out


def apply_dirichlet_lifting(
    A: sp.spmatrix, f: np.ndarray, dirichlet
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Move Dirichlet data to the right-hand side and symmetrize the system.

    Returns ``(A_bc, f_bc)`` with identity rows/columns at constrained DoFs and
    ``f - A u_D`` in the interior; solving the pair reproduces the constrained
    solution exactly.
    """
    dofs, values = _normalize_dirichlet(dirichlet)
    if len(dofs) == 0:
        return A.tocsr(), np.asarray(f, dtype=float).copy()
    u_d = np.zeros(A.shape[0])
    u_d[dofs] = values
    g = np.asarray(f, dtype=float) - A @ u_d
    g[dofs] = values
    return eliminate_rows_cols(A, dofs), g


# ---------------------------------------------------------------------------
# linear solvers


def factorized_solver(A: sp.spmatrix) -> Callable[[np.ndarray], np.ndarray]:
    """Return a reusable solver for ``A``; LU for moderate sizes, CG above."""
    n = A.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:  # exactly singular factor
            raise SolverFailureError(f"sparse LU failed: {exc}", residual=np.inf)
        return lu.solve
    diag = A.diagonal()
    if np.any(diag == 0.0):
        raise SolverFailureError("zero diagonal entry, Jacobi CG unavailable")
    precond = spla.LinearOperator(A.shape, matvec=lambda x: x / diag)

    def solve(b: np.ndarray) -> np.ndarray:
        x, info = spla.cg(A, b, rtol=SOLVE_RTOL, atol=0.0, M=precond, maxiter=20 * n)
        if info != 0:
            res = float(np.linalg.norm(b - A @ x))
            raise SolverFailureError(f"CG did not converge (info={info})", residual=res)
        return x

    return solve


def solve_steady(A: sp.spmatrix, f: np.ndarray, rtol: float = SOLVE_RTOL) -> np.ndarray:
    """Solve ``A u = f`` and verify the residual against ``rtol * ||f||``."""
    if A.shape[0] != A.shape[1] or A.shape[0] != len(f):
        raise DimensionMismatchError(
            f"system shape {A.shape} incompatible with load of length {len(f)}"
        )
    u = factorized_solver(A)(np.asarray(f, dtype=float))
    res = float(np.linalg.norm(f - A @ u))
    bound = rtol * max(float(np.linalg.norm(f)), 1e-300)
    if not np.isfinite(res) or res > bound:
        raise SolverFailureError(
            f"residual {res:.3e} exceeds tolerance {bound:.3e}", residual=res
        )
    return u


def solve_unsteady_bdf1(
    M: sp.spmatrix,
    A_of_t,
    f_of_t: Callable[[float], np.ndarray],
    u0: np.ndarray,
    dt: float,
    n_steps: int,
) -> np.ndarray:
    """March ``M u' + A u = f`` with implicit Euler.

    ``A_of_t`` is either a constant sparse matrix (system factorized once) or
    a callable ``t -> matrix``.  Returns the trajectory of ``n_steps + 1``
    states, starting from ``u0``.
    """
    if dt <= 0.0 or n_steps < 1:
        raise DimensionMismatchError("dt must be > 0 and n_steps >= 1")
    u0 = np.asarray(u0, dtype=float)
    traj = np.empty((n_steps + 1, len(u0)))
    traj[0] = u0
    m_dt = (M / dt).tocsr()

    constant = not callable(A_of_t)
    solver = None
    if constant:
        system = (m_dt + A_of_t).tocsr()
        solver = factorized_solver(system)
    for n in range(n_steps):
        t_next = (n + 1) * dt
        if not constant:
            system = (m_dt + A_of_t(t_next)).tocsr()
            solver = factorized_solver(system)
        rhs = f_of_t(t_next) + m_dt @ traj[n]
        try:
            u = solver(rhs)
        except SolverFailureError as exc:
            raise SolverFailureError(str(exc), residual=exc.residual, step=n + 1)
        res = float(np.linalg.norm(rhs - system @ u))
        if res > SOLVE_RTOL * max(float(np.linalg.norm(rhs)), 1e-300):
            raise SolverFailureError(
                f"step {n + 1}: residual {res:.3e} above tolerance",
                residual=res,
                step=n + 1,
            )
        traj[n + 1] = u
    return traj
