"""Elementary symmetric functions, Garding cones and the operator f = sigma_k^(1/k).

Every routine accepts a single vector ``lam`` of shape ``(n,)`` or a batch of
shape ``(..., n)``; matrix routines accept ``(n, n)`` or ``(..., n, n)``.
Batches are what the grid solver feeds in, one row per node.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import AdmissibilityError, OrderError, ShapeError

__all__ = [
    "SymEval",
    "MatrixEval",
    "sigma",
    "sigma_all",
    "sigma_excl",
    "in_gamma_k",
    "cone_margin",
    "f_eval",
    "F_eval",
    "jacobi_eigh",
]

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 60
MAX_DIM = 8


@dataclass(frozen=True)
class SymEval:
    value: np.ndarray
    f_value: np.ndarray
    grad: np.ndarray
    margin: np.ndarray


@dataclass(frozen=True)
class MatrixEval:
    F_value: np.ndarray
    dF: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_lambda(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 0 or lam.shape[-1] < 1:
        raise ShapeError("curvature vector must have at least one entry")
    return lam


def sigma_all(lam, kmax: int | None = None) -> np.ndarray:
    """Return ``[sigma_0, ..., sigma_kmax]`` along a new trailing axis.

    Expands prod(1 + lam_i x) one factor at a time, so the cost is O(n * kmax).
    """
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    kmax = n if kmax is None else kmax
    e = np.zeros(lam.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        li = lam[..., i : i + 1]
        # right-hand side is evaluated before assignment: uses the previous stage
        e[..., 1:] = e[..., 1:] + li * e[..., :-1]
    return e


def sigma(lam, j: int):
    """sigma_j(lam); sigma_0 is 1."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if not 0 <= j <= n:
        raise OrderError(f"order j={j} outside [0, {n}]")
    out = sigma_all(lam, j)[..., j]
    return out if out.ndim else float(out)


def sigma_excl(lam, j: int, i: int):
    """sigma_j of ``lam`` with entry ``i`` (0-based) removed."""
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    if not 0 <= i < n:
        raise OrderError(f"index i={i} outside [0, {n - 1}]")
    if not 0 <= j <= n - 1:
        if j == n:
            return 0.0 if lam.ndim == 1 else np.zeros(lam.shape[:-1])
        raise OrderError(f"order j={j} outside [0, {n - 1}]")
    rest = np.delete(lam, i, axis=-1)
    if rest.shape[-1] == 0:
        out = np.ones(lam.shape[:-1])
        return out if out.ndim else 1.0
    out = sigma_all(rest, j)[..., j]
    return out if out.ndim else float(out)


def _sigma_excl_all(lam: np.ndarray, j: int) -> np.ndarray:
    """sigma_j(lam | i) for every i, stacked on the trailing axis."""
    n = lam.shape[-1]
    out = np.empty(lam.shape)
    for i in range(n):
        if j == 0:
            out[..., i] = 1.0
        elif n == 1:
            out[..., i] = 0.0
        else:
            out[..., i] = sigma_all(np.delete(lam, i, axis=-1), j)[..., j]
    return out


def _check_order(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise OrderError(f"cone order k={k} outside [1, {n}]")


def in_gamma_k(lam, k: int):
    """True iff sigma_j(lam) > 0 for every j = 1..k."""
    lam = _as_lambda(lam)
    _check_order(k, lam.shape[-1])
    out = np.all(sigma_all(lam, k)[..., 1:] > 0.0, axis=-1)
    return out if out.ndim else bool(out)


def cone_margin(lam, k: int):
    """min_j sigma_j / C(n, j) over j = 1..k.

    Positive exactly on Gamma_k and zero on its boundary. This is a monotone
    proxy for the distance to the cone boundary, not the Euclidean distance.
    """
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    _check_order(k, n)
    s = sigma_all(lam, k)[..., 1:]
    binom = np.array([comb(n, j) for j in range(1, k + 1)], dtype=float)
    out = np.min(s / binom, axis=-1)
    return out if out.ndim else float(out)


def _first_violation(lam: np.ndarray, k: int) -> int:
    s = sigma_all(lam.reshape(-1, lam.shape[-1]), k)[:, 1:]
    bad = np.nonzero(np.any(s <= 0.0, axis=0))[0]
    return int(bad[0]) + 1 if bad.size else 0


def f_eval(lam, k: int, check: bool = True) -> SymEval:
    """f = sigma_k^(1/k) with gradient f_i = (1/k) sigma_k^(1/k-1) sigma_{k-1}(lam|i).

    Raises AdmissibilityError if any lam leaves Gamma_k and ``check`` is set.
    """
    lam = _as_lambda(lam)
    n = lam.shape[-1]
    _check_order(k, n)
    margin = cone_margin(lam, k)
    if check and np.any(np.asarray(margin) <= 0.0):
        j = _first_violation(lam, k)
        raise AdmissibilityError(
            f"curvature vector outside Gamma_{k} (sigma_{j} <= 0)",
            violated=j,
            margin=float(np.min(margin)),
        )
    # sorted input makes the value exactly invariant under permutations of lam
    value = sigma_all(np.sort(lam, axis=-1), k)[..., k]
    with np.errstate(invalid="ignore", divide="ignore"):
        fv = np.where(value > 0, np.abs(value) ** (1.0 / k), np.nan)
        pre = np.where(value > 0, np.abs(value) ** (1.0 / k - 1.0) / k, np.nan)
    grad = pre[..., None] * _sigma_excl_all(lam, k - 1)
    if lam.ndim == 1:
        return SymEval(float(value), float(fv), grad, float(margin))
    return SymEval(value, fv, grad, margin)


def _rotate(A: np.ndarray, V: np.ndarray, p: int, q: int) -> None:
    apq = A[:, p, q]
    app = A[:, p, p]
    aqq = A[:, q, q]
    active = apq != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
        t = np.where(
            active,
            np.sign(theta + (theta == 0)) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)),
            0.0,
        )
    t = np.where(np.isfinite(t), t, 0.0)
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    # A <- J^T A J with J the (p, q) plane rotation
    Ap = A[:, :, p].copy()
    Aq = A[:, :, q].copy()
    A[:, :, p] = c[:, None] * Ap - s[:, None] * Aq
    A[:, :, q] = s[:, None] * Ap + c[:, None] * Aq
    Ap = A[:, p, :].copy()
    Aq = A[:, q, :].copy()
    A[:, p, :] = c[:, None] * Ap - s[:, None] * Aq
    A[:, q, :] = s[:, None] * Ap + c[:, None] * Aq
    A[:, p, q] = 0.0
    A[:, q, p] = 0.0
    Vp = V[:, :, p].copy()
    Vq = V[:, :, q].copy()
    V[:, :, p] = c[:, None] * Vp - s[:, None] * Vq
    V[:, :, q] = s[:, None] * Vp + c[:, None] * Vq


def jacobi_eigh(A) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition by cyclic Jacobi rotations, batched.

    Returns eigenvalues sorted ascending and the matching orthonormal
    eigenvectors (as columns). Sweeps stop once the off-diagonal Frobenius norm
    of every matrix is below ``JACOBI_TOL * ||A||_F``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"expected square matrices, got shape {A.shape}")
    n = A.shape[-1]
    if n > MAX_DIM:
        raise ShapeError(f"dimension {n} exceeds supported maximum {MAX_DIM}")
    batch = A.shape[:-2]
    W = A.reshape(-1, n, n).copy()
    V = np.broadcast_to(np.eye(n), W.shape).copy()
    scale = np.sqrt(np.sum(W * W, axis=(1, 2)))
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum((W * W)[:, offmask], axis=1))
        todo = off > JACOBI_TOL * scale
        if not np.any(todo):
            break
        idx = np.nonzero(todo)[0]
        Ws, Vs = W[idx], V[idx]
        for p in range(n - 1):
            for q in range(p + 1, n):
                _rotate(Ws, Vs, p, q)
        W[idx], V[idx] = Ws, Vs
    lam = np.diagonal(W, axis1=1, axis2=2).copy()
    order = np.argsort(lam, axis=1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    return lam.reshape(batch + (n,)), V.reshape(batch + (n, n))


def F_eval(A, k: int, check: bool = True) -> MatrixEval:
    """F(A) = f(lambda(A)) and its derivative F^{ij} = sum_p f_p v_p v_p^T."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"expected square matrices, got shape {A.shape}")
    asym = np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0)
    if asym > 1e-12 * max(1.0, float(np.max(np.abs(A), initial=0.0))):
        raise ShapeError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    lam, V = jacobi_eigh(A)
    ev = f_eval(lam, k, check=check)
    dF = np.einsum("...ip,...p,...jp->...ij", V, ev.grad, V)
    return MatrixEval(ev.f_value, dF, lam, V)
