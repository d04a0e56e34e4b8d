"""CSR storage and a Jacobi-preconditioned BiCGSTAB for the Newton systems.

The linearised curvature operator carries first-order terms, so the systems
are nonsymmetric and CG does not apply.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import BreakdownError, PreconditionerError, ShapeError

__all__ = ["CsrMatrix", "spmv", "solve_bicgstab", "default_max_iter"]


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shape: tuple

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "CsrMatrix":
        """Sum duplicates, drop explicit zeros, sort columns within each row."""
        m = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
        return cls.from_scipy(m)

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m, copy=True)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(m.indptr.copy(), m.indices.copy(), m.data.copy(), tuple(m.shape))

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=float)))

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @cached_property
    def _kernel(self):
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    def diagonal(self) -> np.ndarray:
        return self._kernel.diagonal()

    def to_dense(self) -> np.ndarray:
        return self._kernel.toarray()

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(A: CsrMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise ShapeError(f"vector of length {x.shape} does not match matrix {A.shape}")
    return A._kernel @ x


def default_max_iter(n: int) -> int:
    return int(min(5000, max(1, np.ceil(10.0 * np.sqrt(n)))))


def solve_bicgstab(A: CsrMatrix, b, tol: float = 1e-10, max_iter: int | None = None):
    """Solve ``A x = b`` from ``x0 = 0`` with right Jacobi preconditioning.

    Returns ``(x, iterations, relative_residual)``. Hitting ``max_iter`` is
    reported through the residual, not raised.
    """
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or b.shape != (n,):
        raise ShapeError("BiCGSTAB needs a square matrix and matching right-hand side")
    if max_iter is None:
        max_iter = default_max_iter(n)
    d = A.diagonal()
    if np.any(d == 0.0):
        raise PreconditionerError(
            f"zero diagonal entry at row {int(np.nonzero(d == 0.0)[0][0])}"
        )
    dinv = 1.0 / d
    K = A._kernel
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n)
    if bnorm == 0.0:
        return x, 0, 0.0
    r = b.copy()
    rhat = r.copy()
    rho_old = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    tiny = np.finfo(float).tiny * 1e10
    it = 0
    res = 1.0
    best = (x.copy(), 1.0)
    for it in range(1, max_iter + 1):
        rho = float(rhat @ r)
        if abs(rho) < tiny:
            raise BreakdownError(f"rho vanished at iteration {it}")
        beta = (rho / rho_old) * (alpha / omega)
        p = r + beta * (p - omega * v)
        phat = dinv * p
        v = K @ phat
        denom = float(rhat @ v)
        if abs(denom) < tiny:
            raise BreakdownError(f"<rhat, v> vanished at iteration {it}")
        alpha = rho / denom
        s = r - alpha * v
        snorm = float(np.linalg.norm(s))
        if snorm <= tol * bnorm:
            x += alpha * phat
            res = snorm / bnorm
            break
        shat = dinv * s
        t = K @ shat
        tt = float(t @ t)
        if tt == 0.0:
            raise BreakdownError(f"t vanished at iteration {it}")
        omega = float(t @ s) / tt
        x += alpha * phat + omega * shat
        r = s - omega * t
        res = float(np.linalg.norm(r)) / bnorm
        if res < best[1]:
            best = (x.copy(), res)
        if res <= tol:
            break
        if omega == 0.0:
            raise BreakdownError(f"omega vanished at iteration {it}")
        rho_old = rho
    else:
        # recompute the true residual; recurrences drift over long runs
        res = float(np.linalg.norm(b - K @ x)) / bnorm
        if best[1] < res:
            x, res = best[0], float(np.linalg.norm(b - K @ best[0])) / bnorm
    return x, it, res
