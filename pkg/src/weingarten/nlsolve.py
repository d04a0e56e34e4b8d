"""Damped Newton and two-stage continuation for f(kappa[u]) = psi(x, u) on {ubar > eps}.

The discrete unknowns are the interior node values of u; the Dirichlet value
eps enters through the affine jet operators of :mod:`meshdom`. The Jacobian
is the exact derivative of the discrete residual, assembled from the
coefficients G^{st}, G^s, G_u of :func:`hypgraph.linearization`.

Continuation follows the subsolution ubar to the target in two homotopies:

* stage 1, rhs = ((1 - t) G[ubar] / ubar + t delta) u, starts at u = ubar;
* stage 2, rhs = (1 - t) delta u + t psi(x, u), starts at the stage 1 endpoint.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import exprparse, hypgraph, meshdom
from .errors import (
    AdmissibilityError,
    BreakdownError,
    ConeExitError,
    ContinuationError,
    DomainError,
    NonConvergenceError,
    PreconditionerError,
)
from .sparsela import CsrMatrix, solve_bicgstab

log = logging.getLogger(__name__)

__all__ = [
    "ProblemSpec",
    "DirichletProblem",
    "ContinuationState",
    "NewtonStats",
    "PsiRhs",
    "Stage1Rhs",
    "Stage2Rhs",
    "ConstRhs",
    "residual",
    "assemble_jacobian",
    "newton_solve",
    "continuity_solve",
    "mean_curvature_solve",
    "choose_delta",
    "uniqueness_probe",
]

SUBSOLUTION_HOMOTOPY = "SUBSOLUTION_HOMOTOPY"
TARGET_HOMOTOPY = "TARGET_HOMOTOPY"


@dataclass(frozen=True)
class ProblemSpec:
    """Problem data plus solver tolerances.

    ``psi`` and ``ubar`` are parsed expressions (see :mod:`exprparse`);
    ``ubar`` may also be any callable on an ``(N, n)`` array of points.
    """

    n: int
    k: int
    psi: object
    ubar: object
    lower: tuple
    upper: tuple
    h: float
    residual_tol: float = 1e-8
    margin_min: float = 1e-10
    newton_max_iter: int = 30
    damping_floor: float = 2.0**-12
    linear_tol: float = 1e-10
    linear_max_iter: int | None = None
    t_step: float = 0.5
    t_step_min: float = 1e-6
    max_continuation_steps: int = 100
    t_grow: float = 1.5
    easy_iters: int = 4
    continuation_tol: float = 1e-6
    subsolution_tol: float = 1e-2
    enclosing_center: tuple | None = None
    enclosing_radius: float | None = None

    def __post_init__(self):
        if not 1 <= self.n <= 3:
            raise ValueError(f"dimension n={self.n} not supported (1..3)")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"order k={self.k} outside [1, n]")
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")

    @classmethod
    def from_text(cls, n: int, k: int, psi: str, ubar: str, lower, upper, h: float, **kw):
        return cls(
            n, k, exprparse.parse(psi, n), exprparse.parse(ubar, n),
            tuple(np.broadcast_to(np.asarray(lower, float), (n,))),
            tuple(np.broadcast_to(np.asarray(upper, float), (n,))),
            float(h), **kw,
        )

    @cached_property
    def grid(self) -> meshdom.Grid:
        return meshdom.Grid.from_box(self.lower, self.upper, self.h)

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    def ubar_at(self, pts) -> np.ndarray:
        if callable(self.ubar) and not isinstance(self.ubar, tuple(_EXPR_TYPES)):
            return np.asarray(self.ubar(pts), dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.asarray(exprparse.evaluate(self.ubar, pts, 0.0, strict=False), dtype=float)


_EXPR_TYPES = (exprparse.Const, exprparse.Var, exprparse.Unary, exprparse.Binary)


class DirichletProblem:
    """Discrete setting of one approximating problem: mask of {ubar > eps}, jets, data."""

    def __init__(self, spec: ProblemSpec, eps: float):
        self.spec = spec
        self.eps = float(eps)
        self.grid = spec.grid
        self.mask = meshdom.mask_from_levelset(spec.ubar, self.grid, self.eps)
        self.op = self.mask.jet_operator
        self.points = self.grid.points[self.mask.interior_nodes]
        self.ubar = spec.ubar_at(self.points)
        if np.any(~np.isfinite(self.ubar)) or np.any(self.ubar <= 0):
            raise DomainError("subsolution must be finite and positive on the domain")

    @property
    def m(self) -> int:
        return self.mask.num_interior

    def field(self, u_int) -> meshdom.ScalarField:
        f = meshdom.ScalarField.from_interior(self.mask, u_int, self.eps)
        return meshdom.apply_dirichlet(self.mask, f, self.eps)

    def ubar_field(self) -> meshdom.ScalarField:
        f = meshdom.ScalarField(self.grid, self.mask.levelset.copy(), self.mask, self.eps)
        vals = np.where(self.mask.kind == meshdom.EXTERIOR, np.nan, f.values)
        return meshdom.ScalarField(self.grid, vals, self.mask, self.eps)

    def jets(self, u_int) -> hypgraph.JetPoint:
        return self.op.jets(u_int, self.eps)


# right-hand sides: each returns (value, d value / du) at interior nodes


@dataclass(frozen=True)
class PsiRhs:
    psi: object

    def __call__(self, pts, u):
        return exprparse.eval_with_du(self.psi, pts, u)


@dataclass(frozen=True)
class ConstRhs:
    value: float

    def __call__(self, pts, u):
        return np.full(np.shape(u), float(self.value)), np.zeros(np.shape(u))


@dataclass(frozen=True)
class Stage1Rhs:
    """((1 - t) G[ubar] / ubar + t delta) u with per-node G[ubar] / ubar."""

    coef0: np.ndarray
    delta: float
    t: float

    def __call__(self, pts, u):
        c = (1.0 - self.t) * self.coef0 + self.t * self.delta
        return c * u, c * np.ones_like(u)


@dataclass(frozen=True)
class Stage2Rhs:
    """(1 - t) delta u + t psi(x, u)."""

    psi: object
    delta: float
    t: float

    def __call__(self, pts, u):
        p, pu = exprparse.eval_with_du(self.psi, pts, u)
        return (1.0 - self.t) * self.delta * u + self.t * p, (1.0 - self.t) * self.delta + self.t * pu


@dataclass
class Evaluation:
    residual: np.ndarray
    margin: np.ndarray
    G: np.ndarray
    rhs: np.ndarray
    rhs_du: np.ndarray
    kappa: np.ndarray
    w: np.ndarray
    coeffs: hypgraph.LinearizationCoeffs | None = None
    sum_f: np.ndarray | None = None


def evaluate(problem: DirichletProblem, u_int, rhs, k: int | None = None, with_coeffs=True) -> Evaluation:
    """Residual, cone margins and (optionally) linearisation at every interior node.

    Never raises on inadmissible nodes; their residual is NaN and margin <= 0.
    """
    k = problem.spec.k if k is None else k
    u_int = np.asarray(u_int, dtype=float)
    if np.any(u_int <= 0):
        bad = u_int <= 0
        u_safe = np.where(bad, 1.0, u_int)
    else:
        bad = None
        u_safe = u_int
    jet = problem.jets(u_safe)
    ev, kappa, coeffs, w = hypgraph._linearize(jet, k, check=False)
    margin = np.asarray(ev.margin, dtype=float)
    if bad is not None:
        margin = np.where(bad, -np.inf, margin)
    G = np.asarray(ev.f_value, dtype=float)
    rv, rdu = rhs(problem.points, u_int)
    res = np.where(margin > 0, G - rv, np.nan)
    return Evaluation(res, margin, G, rv, rdu, kappa, w, coeffs if with_coeffs else None,
                      np.sum(ev.grad, axis=-1))


def _as_problem(u: meshdom.ScalarField, spec: ProblemSpec, problem=None) -> DirichletProblem:
    if problem is not None:
        return problem
    p = DirichletProblem.__new__(DirichletProblem)
    p.spec = spec
    p.eps = float(u.boundary_value)
    p.grid = u.grid
    p.mask = u.mask
    p.op = u.mask.jet_operator
    p.points = u.grid.points[u.mask.interior_nodes]
    p.ubar = spec.ubar_at(p.points)
    return p


def residual(u: meshdom.ScalarField, rhs, spec: ProblemSpec, k: int | None = None) -> meshdom.ScalarField:
    """Per-node G[u] - rhs(x, u) as a field on the interior of ``u``'s mask."""
    problem = _as_problem(u, spec)
    ev = evaluate(problem, u.interior_values, rhs, k, with_coeffs=False)
    _raise_if_inadmissible(problem, ev.margin, spec.margin_min if k is None else 0.0)
    return meshdom.ScalarField.from_interior(u.mask, ev.residual, u.boundary_value)


def _raise_if_inadmissible(problem, margin, m0):
    bad = np.nonzero(~(margin > m0))[0]
    if bad.size:
        i = int(bad[np.argmin(margin[bad])])
        node = int(problem.mask.interior_nodes[i])
        raise AdmissibilityError(
            f"{bad.size} node(s) inadmissible; worst at node {node} x={problem.points[i].tolist()} margin={margin[i]:.3e}",
            margin=float(margin[i]),
            location=node,
        )


def jacobian_matrix(problem: DirichletProblem, ev: Evaluation):
    """scipy CSR of h -> G^{st} D_st h + G^s D_s h + (G_u - rhs_u) h."""
    op = problem.op
    c = ev.coeffs
    n = op.n
    J = sp.diags(c.Gu - ev.rhs_du)
    for s in range(n):
        J = J + sp.diags(c.Gs[:, s]) @ op.D1[s]
        J = J + sp.diags(c.Gst[:, s, s]) @ op.D2[s][s]
        for t in range(s + 1, n):
            J = J + sp.diags(c.Gst[:, s, t] + c.Gst[:, t, s]) @ op.D2[s][t]
    return J.tocsr()


def assemble_jacobian(u: meshdom.ScalarField, rhs, spec: ProblemSpec) -> CsrMatrix:
    """CSR Jacobian of the discrete residual with respect to the interior values."""
    problem = _as_problem(u, spec)
    ev = evaluate(problem, u.interior_values, rhs)
    _raise_if_inadmissible(problem, ev.margin, spec.margin_min)
    return CsrMatrix.from_scipy(jacobian_matrix(problem, ev))


@dataclass
class NewtonStats:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    dampings: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)
    linear_residuals: list = field(default_factory=list)
    min_margin: float = float("nan")

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    @property
    def min_damping(self) -> float:
        return min(self.dampings) if self.dampings else 1.0

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residuals": list(self.residuals),
            "dampings": list(self.dampings),
            "linear_iterations": list(self.linear_iterations),
            "min_margin": self.min_margin,
        }


def _newton(problem: DirichletProblem, u0, rhs, tol: float, k: int | None = None, on_iterate=None):
    spec = problem.spec
    m0 = spec.margin_min
    u = np.array(u0, dtype=float)
    stats = NewtonStats()
    ev = evaluate(problem, u, rhs, k)
    if np.min(ev.margin) < m0:
        _raise_if_inadmissible(problem, ev.margin, m0)
    rnorm = float(np.max(np.abs(ev.residual)))
    stats.residuals.append(rnorm)
    stats.min_margin = float(np.min(ev.margin))
    while rnorm >= tol:
        if stats.iterations >= spec.newton_max_iter:
            raise NonConvergenceError(
                f"Newton did not reach {tol:.1e} in {spec.newton_max_iter} iterations (residual {rnorm:.3e})",
                stats.as_dict(),
            )
        J = CsrMatrix.from_scipy(jacobian_matrix(problem, ev))
        try:
            step, lit, lres = solve_bicgstab(J, -ev.residual, spec.linear_tol, spec.linear_max_iter)
        except (BreakdownError, PreconditionerError) as exc:
            raise NonConvergenceError(f"linear solve failed: {exc}", stats.as_dict()) from exc
        stats.linear_iterations.append(lit)
        stats.linear_residuals.append(lres)
        tau = 1.0
        any_admissible = False
        accepted = None
        while tau >= spec.damping_floor:
            trial = u + tau * step
            ev_t = evaluate(problem, trial, rhs, k)
            if np.min(ev_t.margin) >= m0:
                any_admissible = True
                rn = float(np.max(np.abs(ev_t.residual)))
                if rn < rnorm:
                    accepted = (trial, ev_t, rn)
                    break
            tau *= 0.5
        if accepted is None:
            diag = stats.as_dict()
            diag["residual"] = rnorm
            if not any_admissible:
                raise ConeExitError("every damped step left the admissible cone", diag)
            raise NonConvergenceError(
                f"damping floor {spec.damping_floor:.1e} reached without residual decrease", diag
            )
        u, ev, rnorm = accepted
        stats.iterations += 1
        stats.dampings.append(tau)
        stats.residuals.append(rnorm)
        stats.min_margin = float(np.min(ev.margin))
        if on_iterate is not None:
            on_iterate(u, ev)
    return u, stats, ev


def newton_solve(start: meshdom.ScalarField, rhs, spec: ProblemSpec, tol: float | None = None, k: int | None = None):
    """Damped Newton from ``start``; returns ``(solution field, NewtonStats)``.

    Each accepted step keeps every node admissible with margin >= margin_min
    and strictly lowers the sup-norm residual.
    """
    problem = _as_problem(start, spec)
    tol = spec.residual_tol if tol is None else tol
    u, stats, _ = _newton(problem, start.interior_values, rhs, tol, k)
    out = meshdom.ScalarField.from_interior(start.mask, u, start.boundary_value)
    return meshdom.apply_dirichlet(start.mask, out, start.boundary_value), stats


@dataclass
class ContinuationState:
    stage: str
    t: float
    delta: float
    iterate: np.ndarray | None
    newton_iters: int
    damping: float
    residual: float
    residual_history: list = field(default_factory=list)
    dt: float = float("nan")

    def log_record(self) -> dict:
        return {
            "stage": self.stage,
            "t": self.t,
            "newton_iters": self.newton_iters,
            "damping": self.damping,
            "residual": self.residual,
        }


def subsolution_curvature(problem: DirichletProblem, k: int | None = None) -> Evaluation:
    """G[ubar] on the grid, from FD jets of the sampled subsolution."""
    return evaluate(problem, problem.ubar, ConstRhs(0.0), k)


def choose_delta(problem: DirichletProblem, k: int | None = None) -> float:
    """Half the minimum of G[ubar] / ubar, so G[ubar] > delta * ubar strictly."""
    ev = subsolution_curvature(problem, k)
    _raise_if_inadmissible(problem, ev.margin, problem.spec.margin_min)
    return 0.5 * float(np.min(ev.G / problem.ubar))


def _march(problem, u, make_rhs, stage, delta, history, logger, k, keep_iterates):
    spec = problem.spec
    t = 0.0
    dt = min(1.0, spec.t_step)
    attempts = 0
    while t < 1.0:
        attempts += 1
        if attempts > spec.max_continuation_steps:
            # creeping in tiny steps means the homotopy is not being followed
            raise ContinuationError(
                f"{stage}: {spec.max_continuation_steps} steps used, stopped at t={t:.6g}",
                stage=stage, t=t, history=history,
            )
        t_try = min(1.0, t + dt)
        tol = spec.residual_tol if t_try == 1.0 else max(spec.residual_tol, spec.continuation_tol)
        try:
            u_new, stats, _ = _newton(problem, u, make_rhs(t_try), tol, k)
        except (NonConvergenceError, AdmissibilityError) as exc:
            log.debug("stage %s: step to t=%.6g failed (%s); halving", stage, t_try, exc)
            dt *= 0.5
            if dt < spec.t_step_min:
                raise ContinuationError(
                    f"{stage}: t-step underflow at t={t:.6g} ({exc})", stage=stage, t=t, history=history
                ) from exc
            continue
        u, t = u_new, t_try
        state = ContinuationState(
            stage, t, delta, u.copy() if keep_iterates else None, stats.iterations,
            stats.min_damping, stats.final_residual, list(stats.residuals), dt,
        )
        history.append(state)
        if logger is not None:
            logger(state.log_record())
        if stats.iterations <= spec.easy_iters:
            dt = min(1.0, dt * spec.t_grow)
    return u


def continuity_solve(spec: ProblemSpec, eps: float, logger: Callable | None = None,
                     k: int | None = None, keep_iterates: bool = False, problem=None):
    """Solve the approximating Dirichlet problem at level ``eps``.

    Returns ``(u_eps field, history)`` where history lists one
    :class:`ContinuationState` per accepted homotopy step. ``logger``
    receives one dict per step (stage, t, newton_iters, damping, residual).
    """
    k = spec.k if k is None else k
    problem = problem or DirichletProblem(spec, eps)
    sub = subsolution_curvature(problem, k)
    _raise_if_inadmissible(problem, sub.margin, spec.margin_min)
    psi0 = exprparse.evaluate(spec.psi, problem.points, problem.ubar, strict=False)
    if not np.all(psi0 > 0):
        raise DomainError("psi must be positive on the working region")
    gap = sub.G - psi0
    if np.min(gap) < -spec.subsolution_tol:
        log.warning("subsolution inequality violated by %.3e at some node", -np.min(gap))
    coef0 = sub.G / problem.ubar
    delta = 0.5 * float(np.min(coef0))
    history: list = []
    u = _march(problem, problem.ubar.copy(),
               lambda t: Stage1Rhs(coef0, delta, t), SUBSOLUTION_HOMOTOPY, delta,
               history, logger, k, keep_iterates)
    u = _march(problem, u, lambda t: Stage2Rhs(spec.psi, delta, t), TARGET_HOMOTOPY, delta,
               history, logger, k, keep_iterates)
    return problem.field(u), history


def mean_curvature_solve(spec: ProblemSpec, eps: float, logger=None, problem=None) -> meshdom.ScalarField:
    """The k = 1 problem sigma_1(kappa[u]) = psi on {ubar > eps}."""
    u, _ = continuity_solve(spec.replace(k=1), eps, logger, k=1,
                            problem=None if problem is None else _rebind(problem, spec.replace(k=1)))
    return u


def _rebind(problem: DirichletProblem, spec: ProblemSpec) -> DirichletProblem:
    p = DirichletProblem.__new__(DirichletProblem)
    p.__dict__.update(problem.__dict__)
    p.spec = spec
    return p


def uniqueness_probe(u: meshdom.ScalarField, spec: ProblemSpec, amplitude: float = 0.05, k: int | None = None):
    """Perturb a solution by a bump vanishing on the boundary and re-solve.

    The bump is ``amplitude * 4 (ubar - eps)(max ubar - ubar) / (max - eps)^2``
    scaled by halves until the start is admissible. Returns
    ``(sup-norm distance to u, stats, applied amplitude)``.
    """
    problem = _as_problem(u, spec)
    base = u.interior_values
    lvl = problem.ubar
    top = float(np.max(lvl))
    bump = 4.0 * (lvl - problem.eps) * (top - lvl) / (top - problem.eps) ** 2
    bump = bump + (lvl - problem.eps) / (top - problem.eps)
    amp = amplitude
    rhs = PsiRhs(spec.psi)
    while True:
        start = base + amp * bump
        ev = evaluate(problem, start, rhs, k, with_coeffs=False)
        if np.min(ev.margin) >= spec.margin_min:
            break
        amp *= 0.5
        if amp < 1e-8:
            raise AdmissibilityError("no admissible perturbation found")
    v, stats, _ = _newton(problem, start, rhs, spec.residual_tol, k)
    return float(np.max(np.abs(v - base))), stats, amp


def zeroth_order_margin(u: meshdom.ScalarField, spec: ProblemSpec, k: int | None = None) -> np.ndarray:
    """G_u - psi_u at every interior node of a solution (negative when the sign condition holds)."""
    problem = _as_problem(u, spec)
    ev = evaluate(problem, u.interior_values, PsiRhs(spec.psi), k)
    return ev.coeffs.Gu - ev.rhs_du


def constant_field_value(n: int, k: int) -> float:
    """f(1, ..., 1) = C(n, k)^(1/k): curvature of any horizontal slice."""
    return comb(n, k) ** (1.0 / k)

