"""Sparse storage and the linear solvers behind assembly and Newton loops.

Matrices are scipy CSR throughout.  Three solves cover every need of the
package: conjugate gradients for symmetric positive definite systems (mass
solves, projections), a sparse LU with partial pivoting for general square
systems (Newton corrections), and a bordered solve for the mean-constrained
steady problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "BorderedSystem",
    "NonconvergenceError",
    "SingularMatrixError",
    "SolverError",
    "csr_from_triplets",
    "solve_bordered",
    "solve_general",
    "solve_spd",
    "spmv",
]


class SolverError(RuntimeError):
    """Linear solve failed; carries the final residual norm."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class SingularMatrixError(SolverError):
    """Factorization failed or could not certify the solution."""


class NonconvergenceError(RuntimeError):
    """Nonlinear iteration ran out of iterations; carries the history."""

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


def csr_from_triplets(triplets, shape) -> sp.csr_matrix:
    """Build a CSR matrix from (row, col, value) entries.

    Duplicate entries are summed.  Indices outside ``shape`` raise
    ``ValueError``.
    """
    rows_cols_vals = np.asarray(list(triplets), dtype=float)
    if rows_cols_vals.size == 0:
        rows = cols = np.empty(0, dtype=int)
        vals = np.empty(0, dtype=float)
    else:
        if rows_cols_vals.ndim != 2 or rows_cols_vals.shape[1] != 3:
            raise ValueError("triplets must be (row, col, value) triples")
        rows = rows_cols_vals[:, 0].astype(int)
        cols = rows_cols_vals[:, 1].astype(int)
        vals = rows_cols_vals[:, 2]
    return _csr(rows, cols, vals, shape)


def _csr(rows, cols, vals, shape) -> sp.csr_matrix:
    """Fast array-based CSR constructor shared with the assembly module."""
    nr, nc = shape
    if len(rows):
        if rows.min() < 0 or rows.max() >= nr or cols.min() < 0 or cols.max() >= nc:
            raise ValueError("triplet index outside matrix dimensions")
    out = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def spmv(a: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit dimension check."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or a.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix {a.shape} against vector {x.shape}"
        )
    return a @ x


def solve_spd(a: sp.spmatrix, b: np.ndarray, tol: float = 1e-12,
              return_iterations: bool = False):
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Guarantees ``||a x - b|| <= tol * ||b||`` on the true residual, checked
    explicitly before returning.  The iteration cap is ``10 n``; hitting it
    raises :class:`SolverError` carrying the final residual norm.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"matrix {a.shape} does not match vector of size {n}")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x = np.zeros(n)
        return (x, 0) if return_iterations else x
    diag = a.diagonal()
    if np.any(diag <= 0.0):
        raise SolverError("matrix has a nonpositive diagonal entry", float("nan"))
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    target = tol * bnorm
    cap = 10 * n
    iterations = 0
    resid = bnorm
    while iterations < cap:
        if np.linalg.norm(r) <= target:
            # recurrence residual can drift; certify against the true one
            r_true = b - a @ x
            resid = float(np.linalg.norm(r_true))
            if resid <= target:
                return (x, iterations) if return_iterations else x
            r = r_true
            z = inv_diag * r
            p = z.copy()
            rz = float(r @ z)
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise SolverError(
                "matrix is not positive definite along a search direction",
                float(np.linalg.norm(b - a @ x)),
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        iterations += 1
    resid = float(np.linalg.norm(b - a @ x))
    if resid <= target:
        return (x, iterations) if return_iterations else x
    raise SolverError(
        f"conjugate gradients did not reach {tol:g} relative residual "
        f"in {cap} iterations (residual {resid:.3e})",
        resid,
    )


def solve_general(a: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    """Sparse LU solve with partial pivoting and a certified residual.

    The solution must satisfy
    ``||a x - b||_inf <= 1e-10 (||a||_inf ||x||_inf + ||b||_inf)``;
    a singular factorization or a failed certificate raises
    :class:`SingularMatrixError`.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"matrix {a.shape} does not match vector of size {n}")
    try:
        lu = spla.splu(sp.csc_matrix(a))
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SingularMatrixError(f"factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("solution contains non-finite entries")
    resid = float(np.max(np.abs(a @ x - b))) if n else 0.0
    a_inf = float(np.max(np.abs(a).sum(axis=1))) if a.nnz else 0.0
    x_inf = float(np.max(np.abs(x))) if n else 0.0
    b_inf = float(np.max(np.abs(b))) if n else 0.0
    bound = 1e-10 * (a_inf * x_inf + b_inf)
    if resid > bound:
        raise SingularMatrixError(
            f"residual {resid:.3e} exceeds certificate bound {bound:.3e}",
            resid,
        )
    return x


@dataclass(frozen=True)
class BorderedSystem:
    """Square system augmented by one linear constraint.

    Solves ``core x + mu * constraint_row = rhs`` together with
    ``constraint_row . x = constraint_value`` for ``(x, mu)``.
    """

    core: sp.spmatrix
    constraint_row: np.ndarray
    rhs: np.ndarray
    constraint_value: float


def solve_bordered(system: BorderedSystem):
    """Solve the (n+1) x (n+1) augmented system; returns (x, multiplier)."""
    c = np.asarray(system.constraint_row, dtype=float)
    rhs = np.asarray(system.rhs, dtype=float)
    n = c.shape[0]
    if system.core.shape != (n, n) or rhs.shape != (n,):
        raise ValueError("bordered system blocks have inconsistent shapes")
    if not np.any(c):
        raise ValueError("constraint row is identically zero")
    aug = sp.bmat(
        [
            [sp.csr_matrix(system.core), sp.csr_matrix(c[:, None])],
            [sp.csr_matrix(c[None, :]), None],
        ],
        format="csr",
    )
    y = solve_general(aug, np.concatenate([rhs, [system.constraint_value]]))
    return y[:n], float(y[n])
