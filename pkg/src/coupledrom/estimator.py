"""Residual-based a-posteriori error bounds for the coupled reduction.

The steady bound sums three computable terms: the slave residual scaled by
the smallest singular value of the (eliminated) slave operator, the
interpolation-projection error of the interface data, and the master
residual scaled by its own smallest singular value times the norm of the
stored reduced-transfer operator.  The unsteady variant integrates residual
norms in time and multiplies by a boundedness constant of the underlying
semigroup; for symmetric definite pairs that constant is the sharp
``sqrt(cond(M))``, otherwise the Gronwall surrogate ``1 + c t exp(c t)``
with ``c = ||M^{-1} A||_2`` is used.  The bounds certify but are heuristic
in tightness; effectivities are reported, not constrained.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatchError, EstimatorConvergenceError

_POWER_MAX_ITER = 5000
_POWER_RTOL = 1e-9


# ---------------------------------------------------------------------------
# residuals


def residual_steady(A_N, f_N: np.ndarray, V: np.ndarray, u_n: np.ndarray) -> np.ndarray:
    """Full-order residual ``f - A V u_n`` of a reduced steady solution."""
    V = np.asarray(V)
    if V.shape[1] != len(u_n) or A_N.shape[1] != V.shape[0] or len(f_N) != A_N.shape[0]:
        raise DimensionMismatchError(
            f"incompatible residual shapes A{A_N.shape} V{V.shape} u({len(u_n)})"
        )
    return np.asarray(f_N, dtype=float) - A_N @ (V @ u_n)


def residual_unsteady(
    M,
    A_N,
    f_of_t: Callable[[float], np.ndarray],
    V: np.ndarray,
    trajectory: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Dynamical-system residuals of a reduced trajectory at steps 1..n.

    The system is scaled to ``u' = -M^{-1} A u + M^{-1} f``; the time
    derivative uses the same backward difference as the solver.  Row ``k-1``
    of the output is the residual at ``t_k``.
    """
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != V.shape[1]:
        raise DimensionMismatchError(
            f"trajectory shape {traj.shape} incompatible with basis {V.shape}"
        )
    n_steps = traj.shape[0] - 1
    if n_steps < 1:
        raise DimensionMismatchError("trajectory must contain at least two states")
    from .fem import factorized_solver

    m_solve = factorized_solver(M.tocsc() if sp.issparse(M) else sp.csc_matrix(M))
    out = np.empty((n_steps, V.shape[0]))
    for k in range(1, n_steps + 1):
        full = V @ traj[k]
        dudt = V @ ((traj[k] - traj[k - 1]) / dt)
        out[k - 1] = m_solve(f_of_t(k * dt) - A_N @ full) - dudt
    return out


# ---------------------------------------------------------------------------
# spectral estimates


def sigma_min(A, tol: float = 1e-6, max_iter: int = _POWER_MAX_ITER, seed: int = 0) -> float:
    """Smallest singular value by inverse power iteration on ``A^T A``.

    A tiny diagonal shift is retried once if the factorization hits an
    exactly singular pivot.
    """
    A = A.tocsc() if sp.issparse(A) else sp.csc_matrix(np.asarray(A))
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatchError("sigma_min requires a square matrix")
    try:
        lu = spla.splu(A)
    except RuntimeError:
        shift = 1e-14 * abs(A).max()
        try:
            lu = spla.splu((A + shift * sp.identity(A.shape[0], format="csc")).tocsc())
        except RuntimeError as exc:
            raise EstimatorConvergenceError(f"factorization failed twice: {exc}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam_old = 0.0
    for _ in range(max_iter):
        w = lu.solve(lu.solve(v, trans="T"))
        lam = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            raise EstimatorConvergenceError("inverse iteration collapsed to zero")
        v = w / norm_w
        if abs(lam - lam_old) <= min(tol * 1e-2, _POWER_RTOL) * abs(lam):
            return 1.0 / np.sqrt(lam)
        lam_old = lam
    raise EstimatorConvergenceError(
        f"sigma_min did not converge within {max_iter} iterations"
    )


def operator_two_norm(
    matvec: Callable[[np.ndarray], np.ndarray],
    rmatvec: Callable[[np.ndarray], np.ndarray],
    n: int,
    tol: float = 1e-6,
    max_iter: int = _POWER_MAX_ITER,
    seed: int = 0,
) -> float:
    """Two-norm of a linear operator by power iteration on ``B^T B``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_old = 0.0
    for _ in range(max_iter):
        w = rmatvec(matvec(v))
        lam = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if abs(lam - lam_old) <= tol * 1e-2 * max(abs(lam), 1e-300):
            return float(np.sqrt(max(lam, 0.0)))
        lam_old = lam
    raise EstimatorConvergenceError(
        f"two-norm power iteration did not converge within {max_iter} iterations"
    )


def matrix_two_norm(B) -> float:
    if sp.issparse(B):
        return operator_two_norm(lambda x: B @ x, lambda x: B.T @ x, B.shape[1])
    return float(np.linalg.norm(np.asarray(B), 2))


def gronwall_constant(c3: float, t: float) -> float:
    """Time-variant boundedness surrogate ``1 + c3 t exp(c3 t)``."""
    with np.errstate(over="ignore"):
        return float(1.0 + c3 * t * np.exp(c3 * t))


def semigroup_constant(M, A, horizon: float) -> tuple[float, float, str]:
    """Upper bound for ``sup_t ||exp(-M^{-1} A t)||_2`` on ``[0, horizon]``.

    Returns ``(constant, c3, method)`` with ``c3 = ||M^{-1} A||_2``.  When
    the symmetric part of ``A`` is positive semidefinite (symmetric M), the
    semigroup contracts in the M-norm and the sharp two-norm bound
    ``sqrt(cond(M))`` applies; otherwise the Gronwall surrogate is used
    (which can overflow to inf for stiff operators, still a valid upper
    bound).
    """
    from .fem import factorized_solver

    M = M.tocsc() if sp.issparse(M) else sp.csc_matrix(np.asarray(M))
    A = A.tocsr() if sp.issparse(A) else sp.csr_matrix(np.asarray(A))
    m_solve = factorized_solver(M)
    c3 = operator_two_norm(
        lambda x: m_solve(A @ x), lambda x: A.T @ m_solve(x), A.shape[0]
    )
    if abs(M - M.T).max() <= 1e-10 * abs(M).max() and _is_dissipative(A):
        lam_max = operator_two_norm(lambda x: M @ x, lambda x: M @ x, M.shape[0])
        lam_min_inv = operator_two_norm(m_solve, m_solve, M.shape[0])
        return float(np.sqrt(lam_max * lam_min_inv)), c3, "dissipative"
    return gronwall_constant(c3, horizon), c3, "gronwall"


def _is_dissipative(A, rtol: float = 1e-10) -> bool:
    """True when the symmetric part of ``A`` is positive semidefinite."""
    sym = ((A + A.T) * 0.5).tocsc()
    scale = abs(sym).max()
    if scale == 0.0:
        return True
    try:
        lam = spla.eigsh(sym, k=1, which="SA", return_eigenvectors=False, maxiter=5000)
        return float(lam[0]) >= -rtol * scale
    except (spla.ArpackNoConvergence, RuntimeError):
        # indefinite-shift factorization or no convergence: fall back to the
        # safe answer (the Gronwall surrogate remains an upper bound)
        return False


# ---------------------------------------------------------------------------
# bound reports


@dataclass
class ErrorBoundReport:
    """Three-term certified bound; ``total`` is their exact sum."""

    master_term: float
    deim_term: float
    slave_term: float
    constants: dict = field(default_factory=dict)
    actual_error: float | None = None
    detail: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.master_term + self.deim_term + self.slave_term

    @property
    def effectivity(self) -> float | None:
        if self.actual_error is None or self.actual_error == 0.0:
            return None
        return self.total / self.actual_error


def deim_projection_term(Phi: np.ndarray, sub_norm: float, data: np.ndarray) -> float:
    """Interpolation-error term ``||Phi_I||_2 ||(I - Phi Phi^T) w||_2``."""
    w = np.asarray(data, dtype=float)
    residual = w - Phi @ (Phi.T @ w)
    return float(sub_norm * np.linalg.norm(residual))


def error_bound_steady(
    master_system: tuple,
    V1: np.ndarray,
    u_n1: np.ndarray,
    slave_system: tuple,
    V2: np.ndarray,
    u_n2: np.ndarray,
    reducer,
    dirichlet_data: np.ndarray,
    sigma1: float | None = None,
    sigma2: float | None = None,
    actual_error: float | None = None,
) -> ErrorBoundReport:
    """Steady three-term bound on the slave reconstruction error.

    ``master_system``/``slave_system`` are the eliminated pairs ``(A, f)``;
    the slave load must carry the exact interface lifting.
    ``dirichlet_data`` is the transferred interface data whose distance to
    the interpolation space forms the middle term.
    """
    A1, f1 = master_system
    A2, f2 = slave_system
    s1 = sigma1 if sigma1 is not None else sigma_min(A1)
    s2 = sigma2 if sigma2 is not None else sigma_min(A2)
    r1 = np.linalg.norm(residual_steady(A1, f1, V1, u_n1))
    r2 = np.linalg.norm(residual_steady(A2, f2, V2, u_n2))
    sub_norm = float(np.linalg.norm(reducer.deim.Phi[reducer.deim.indices], 2))
    deim_term = deim_projection_term(reducer.deim.Phi, sub_norm, dirichlet_data)
    C = reducer.transfer_norm
    return ErrorBoundReport(
        master_term=C * r1 / s1,
        deim_term=deim_term,
        slave_term=r2 / s2,
        constants={
            "sigma_min_master": s1,
            "sigma_min_slave": s2,
            "transfer_norm_C": C,
            "magic_rows_norm": sub_norm,
        },
        actual_error=actual_error,
        detail={"master_residual": r1, "slave_residual": r2},
    )


def _cumulative_trapezoid(values: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal integral of ``||r||`` up to each step; the value at the
    first node is extended backwards over the initial interval."""
    norms = np.concatenate([[values[0]], values])
    out = np.zeros(len(values) + 1)
    for k in range(1, len(norms)):
        out[k] = out[k - 1] + 0.5 * dt * (norms[k - 1] + norms[k])
    return out


def error_bound_unsteady(
    master_residual_norms: np.ndarray,
    master_initial_error: float,
    master_constant: float,
    slave_term_per_step: np.ndarray,
    deim_term_per_step: np.ndarray,
    transfer_norm: float,
    dt: float,
    constants: dict | None = None,
    actual_errors: np.ndarray | None = None,
) -> list[ErrorBoundReport]:
    """Per-step bounds combining the integrated master contribution with the
    per-step slave and interpolation terms.

    ``slave_term_per_step`` already carries its own constant (either the
    per-step steady bound for an instantaneous slave, or the integrated
    unsteady slave contribution).
    """
    n_steps = len(master_residual_norms)
    integrals = _cumulative_trapezoid(master_residual_norms, dt)
    reports = []
    for k in range(n_steps + 1):
        master_bound = master_constant * (master_initial_error + integrals[k])
        reports.append(
            ErrorBoundReport(
                master_term=transfer_norm * master_bound,
                deim_term=float(deim_term_per_step[k]),
                slave_term=float(slave_term_per_step[k]),
                constants=dict(constants or {}),
                actual_error=None if actual_errors is None else float(actual_errors[k]),
                detail={"master_residual_integral": float(integrals[k])},
            )
        )
    return reports
