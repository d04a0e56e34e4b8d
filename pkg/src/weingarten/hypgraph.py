"""Geometry of vertical graphs x_{n+1} = u(x) in the half-space model.

Curvatures are taken with respect to the upward normal. Functions are
batched: a jet may carry a leading node axis, ``u`` of shape ``(N,)``,
``du`` of shape ``(N, n)`` and ``d2u`` of shape ``(N, n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symcurv
from .errors import AdmissibilityError, DomainError, ShapeError

__all__ = [
    "JetPoint",
    "CurvatureState",
    "LinearizationCoeffs",
    "SphereCap",
    "metric_terms",
    "curvature_matrix",
    "G_value",
    "linearization",
    "sphere_cap_jet",
]


@dataclass(frozen=True)
class JetPoint:
    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        du = np.asarray(self.du, dtype=float)
        d2u = np.asarray(self.d2u, dtype=float)
        if du.shape[-1:] * 2 != d2u.shape[-2:] or du.shape[:-1] != u.shape:
            raise ShapeError(
                f"inconsistent jet shapes u{u.shape} du{du.shape} d2u{d2u.shape}"
            )
        asym = np.max(np.abs(d2u - np.swapaxes(d2u, -1, -2)), initial=0.0)
        if asym > 1e-12 * max(1.0, float(np.max(np.abs(d2u), initial=0.0))):
            raise ShapeError(f"Hessian not symmetric (asymmetry {asym:.3e})")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "d2u", d2u)

    @property
    def n(self) -> int:
        return self.du.shape[-1]


@dataclass(frozen=True)
class CurvatureState:
    w: np.ndarray
    nu_vertical: np.ndarray
    gamma_up: np.ndarray
    gamma_down: np.ndarray
    A: np.ndarray
    kappa: np.ndarray
    kappa_euclid: np.ndarray
    eigenvectors: np.ndarray
    margin: np.ndarray | None = None


@dataclass(frozen=True)
class LinearizationCoeffs:
    Gst: np.ndarray
    Gs: np.ndarray
    Gu: np.ndarray


@dataclass(frozen=True)
class SphereCap:
    """Graph of sqrt(R^2 - |x - a'|^2) - sigma R; hyperbolic curvatures all equal sigma."""

    center_horizontal: np.ndarray
    radius: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(
            self, "center_horizontal", np.asarray(self.center_horizontal, dtype=float)
        )
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not -1.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (-1, 1)")

    @property
    def domain_radius(self) -> float:
        """Radius of the disk on which the cap is positive."""
        return self.radius * np.sqrt(1.0 - self.sigma**2) if self.sigma > 0 else self.radius

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum((x - self.center_horizontal) ** 2, axis=-1)
        return np.sqrt(self.radius**2 - r2) - self.sigma * self.radius


def metric_terms(du):
    """Return ``(w, gamma_up, gamma_down, nu_vertical)`` for a gradient (batch)."""
    du = np.asarray(du, dtype=float)
    n = du.shape[-1]
    p2 = np.sum(du * du, axis=-1)
    w = np.sqrt(1.0 + p2)
    outer = du[..., :, None] * du[..., None, :]
    eye = np.eye(n)
    gamma_up = eye - outer / (w * (1.0 + w))[..., None, None]
    gamma_down = eye + outer / (1.0 + w)[..., None, None]
    return w, gamma_up, gamma_down, 1.0 / w


def _matrix_A(p: JetPoint):
    w, gup, gdown, nu = metric_terms(p.du)
    inner = gup @ p.d2u @ gup
    n = p.n
    atilde = inner / w[..., None, None]
    A = (np.eye(n) + p.u[..., None, None] * inner) / w[..., None, None]
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    return w, gup, gdown, nu, atilde, A


def curvature_matrix(p: JetPoint, k: int | None = None) -> CurvatureState:
    """Assemble A[u] and its eigen-data.

    ``kappa`` are the hyperbolic curvatures (ascending). ``kappa_euclid`` is
    read off through the shared eigenvectors, since A = u * atilde + I / w.
    When ``k`` is given the cone margin of ``kappa`` is attached.
    """
    if np.any(p.u <= 0):
        raise DomainError("graph height u must be positive in the half-space model")
    w, gup, gdown, nu, atilde, A = _matrix_A(p)
    kappa, V = symcurv.jacobi_eigh(A)
    kappa_e = (kappa - nu[..., None]) / p.u[..., None]
    margin = symcurv.cone_margin(kappa, k) if k is not None else None
    return CurvatureState(w, nu, gup, gdown, A, kappa, kappa_e, V, margin)


def G_value(p: JetPoint, k: int):
    """f(kappa[u]) for an admissible jet."""
    st = curvature_matrix(p, k)
    try:
        ev = symcurv.f_eval(st.kappa, k)
    except AdmissibilityError as exc:
        raise AdmissibilityError(
            f"jet not admissible: {exc}", violated=exc.violated, margin=exc.margin
        ) from None
    return ev.f_value


def _linearize(p: JetPoint, k: int, check: bool = True):
    if np.any(p.u <= 0):
        raise DomainError("graph height u must be positive in the half-space model")
    w, gup, gdown, nu, atilde, A = _matrix_A(p)
    kappa, V = symcurv.jacobi_eigh(A)
    ev = symcurv.f_eval(kappa, k, check=check)
    fi = ev.grad
    F = np.einsum("...ip,...p,...jp->...ij", V, fi, V)
    u = p.u
    du = p.du
    ww = w[..., None, None]
    Gst = (u[..., None, None] / ww) * (gup @ F @ gup)
    FA = np.einsum("...ij,...ij->...", F, A)
    sum_f = np.sum(fi, axis=-1)
    Gu = (FA - sum_f / w) / u
    FAdu = np.einsum("...ij,...jq,...q->...i", F, A, du)
    AFdu = np.einsum("...qj,...ji,...i->...q", A, F, du)
    Fdu = np.einsum("...ij,...j->...i", F, du)
    t1 = -(du / (w**2)[..., None]) * FA[..., None]
    t2 = -2.0 * (
        w[..., None] * np.einsum("...is,...i->...s", gup, FAdu)
        + np.einsum("...qs,...q->...s", gup, AFdu)
    ) / (w * (1.0 + w))[..., None]
    t3 = (2.0 / w**2)[..., None] * np.einsum("...is,...i->...s", gup, Fdu)
    Gs = t1 + t2 + t3
    return ev, kappa, LinearizationCoeffs(Gst, Gs, Gu), w


def linearization(p: JetPoint, k: int) -> LinearizationCoeffs:
    """Partial derivatives of G(D^2u, Du, u) in the Hessian, gradient and height."""
    try:
        return _linearize(p, k)[2]
    except AdmissibilityError as exc:
        raise AdmissibilityError(
            f"jet not admissible: {exc}", violated=exc.violated, margin=exc.margin
        ) from None


def sphere_cap_jet(s: SphereCap, x) -> JetPoint:
    """Analytic (u, Du, D^2u) of a sphere cap at horizontal point(s) ``x``."""
    x = np.asarray(x, dtype=float)
    d = x - s.center_horizontal
    r2 = np.sum(d * d, axis=-1)
    root2 = s.radius**2 - r2
    if np.any(root2 <= 0):
        raise DomainError("point outside the sphere's horizontal extent")
    root = np.sqrt(root2)
    u = root - s.sigma * s.radius
    if np.any(u <= 0):
        raise DomainError("point outside the cap's positivity region")
    n = d.shape[-1]
    du = -d / root[..., None]
    d2u = -np.eye(n) / root[..., None, None] - (d[..., :, None] * d[..., None, :]) / (
        root**3
    )[..., None, None]
    return JetPoint(u, du, d2u)
