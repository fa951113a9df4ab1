"""Sparse symmetric systems: CSR storage, diagonal matrices, conjugate gradients.

CSR storage and the matrix-vector product come from :mod:`scipy.sparse`; the
solver and the reductions are written here so that every run uses one fixed
summation order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

CsrMatrix = sp.csr_matrix

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """CG did not reach the requested residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericError(FloatingPointError):
    """NaN or Inf appeared during a solve."""


@dataclass(frozen=True)
class DiagMatrix:
    """Diagonal matrix stored as its entries."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        if d.ndim != 1:
            raise ValueError("diagonal must be one-dimensional")
        if not np.all(np.isfinite(d)):
            raise NumericError("diagonal entries must be finite")
        d.flags.writeable = False
        object.__setattr__(self, "diag", d)

    @property
    def n(self) -> int:
        return len(self.diag)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def __matmul__(self, x):
        return self.diag * _vec(x, self.n)

    def __mul__(self, c: float) -> "DiagMatrix":
        return DiagMatrix(self.diag * c)

    __rmul__ = __mul__

    def __add__(self, other: "DiagMatrix") -> "DiagMatrix":
        if not isinstance(other, DiagMatrix):
            return NotImplemented
        _same_n(self.n, other.n)
        return DiagMatrix(self.diag + other.diag)

    def tocsr(self) -> sp.csr_matrix:
        return sp.diags(self.diag, format="csr")


def _vec(x, n: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a vector, got shape {x.shape}")
    if n is not None:
        _same_n(n, len(x))
    return x


def _same_n(a: int, b: int) -> None:
    if a != b:
        raise ValueError(f"dimension mismatch: {a} != {b}")


def dot(x, y) -> float:
    # numpy's pairwise reduction: fixed order, independent of BLAS threading
    x, y = _vec(x), _vec(y)
    _same_n(len(x), len(y))
    return float(np.add.reduce(x * y))


def norm2(x) -> float:
    return float(np.sqrt(dot(x, x)))


def norm_inf(x) -> float:
    x = _vec(x)
    return float(np.abs(x).max()) if len(x) else 0.0


def axpy(a: float, x, y) -> np.ndarray:
    x, y = _vec(x), _vec(y)
    _same_n(len(x), len(y))
    return a * x + y


def spmv(A, x) -> np.ndarray:
    _same_n(A.shape[1], len(_vec(x)))
    return A @ x


def as_operator(A, diag: DiagMatrix | None = None) -> sp.csr_matrix:
    """Combine a sparse matrix with an optional diagonal addend into one CSR matrix."""
    if isinstance(A, DiagMatrix):
        A = A.tocsr()
    A = sp.csr_matrix(A)
    if diag is not None:
        _same_n(A.shape[0], diag.n)
        A = (A + diag.tocsr()).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def symmetry_defect(A) -> float:
    A = as_operator(A)
    d = abs(A - A.T)
    return float(d.max()) if d.nnz else 0.0


@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # relative residual ||Ax - b|| / ||b||


def cg_solve(
    A,
    b,
    *,
    diag: DiagMatrix | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    x0=None,
    jacobi: bool = False,
) -> CGResult:
    """Solve ``(A + diag) x = b`` for symmetric positive definite ``A``.

    Stops once ``||b - Ax|| <= tol * ||b||`` (true residual, recomputed on exit).
    Raises :class:`SolverError` after ``max_iter`` iterations (default ``10 n``)
    and :class:`NumericError` if a NaN shows up.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_operator(A, diag)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix must be square, got {A.shape}")
    b = _vec(b, n)
    if not np.all(np.isfinite(b)):
        raise NumericError("right-hand side contains NaN or Inf")
    max_iter = 10 * n if max_iter is None else max_iter

    bnorm = norm2(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    x = np.zeros(n) if x0 is None else _vec(x0, n).copy()
    r = b - A @ x
    inv_d = None
    if jacobi:
        d = A.diagonal()
        if np.any(d <= 0):
            raise NumericError("Jacobi preconditioner needs a positive diagonal")
        inv_d = 1.0 / d
    z = r * inv_d if jacobi else r
    p = z.copy()
    rz = dot(r, z)
    target = tol * bnorm
    rnorm = norm2(r)
    k = 0
    while rnorm > target:
        if k >= max_iter:
            raise SolverError(
                f"CG did not converge in {max_iter} iterations (relative residual {rnorm / bnorm:.3e})",
                rnorm / bnorm,
                k,
            )
        Ap = A @ p
        pAp = dot(p, Ap)
        if not np.isfinite(pAp):
            raise NumericError(f"NaN/Inf in CG at iteration {k}")
        if pAp <= 0:
            raise SolverError(f"matrix not positive definite (p^T A p = {pAp:.3e})", rnorm / bnorm, k)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = r * inv_d if jacobi else r
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = norm2(r)
        k += 1
        if rnorm <= target:
            # guard against drift of the recursive residual
            rnorm = norm2(b - A @ x)
    if not np.all(np.isfinite(x)):
        raise NumericError("solution contains NaN or Inf")
    return CGResult(x, k, rnorm / bnorm)
