"""Epsilon sweep toward the asymptotic problem, plus verification oracles.

Reports are plain dataclasses with a ``to_dict`` producing JSON-ready
structures; :func:`dumps` serialises them with sorted keys so identical
runs give identical bytes.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import exprparse, hypgraph, meshdom, symcurv
from .errors import DomainError, WeingartenError
from .nlsolve import (
    DirichletProblem,
    ProblemSpec,
    PsiRhs,
    _as_problem,
    continuity_solve,
    evaluate,
    zeroth_order_margin,
    mean_curvature_solve,
    subsolution_curvature,
)

__all__ = [
    "ConditionStatus",
    "CompatibilityReport",
    "SweepEntry",
    "SweepReport",
    "check_compatibility",
    "epsilon_sweep",
    "bracket_domains",
    "calibrate_truncation",
    "viscosity_probe",
    "touching_test",
    "boundary_gradient_check",
    "psi_above_sigma_check",
    "sandwich_check",
    "enclosing_height",
    "dumps",
]


def _clean(obj):
    """Make floats JSON-safe: non-finite values become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    data = obj.to_dict() if hasattr(obj, "to_dict") else obj
    return json.dumps(_clean(data), sort_keys=True, indent=2) + "\n"


@dataclass
class ConditionStatus:
    name: str
    status: str  # "pass", "boundary", "fail", "n/a"
    value: float
    node: int | None = None
    x: list | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status in ("pass", "boundary", "n/a")

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "value": self.value,
                "node": self.node, "x": self.x, "detail": self.detail}


@dataclass
class CompatibilityReport:
    eps: float
    sigma: float
    r0: float
    conditions: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failures(self) -> list:
        return [name for name, c in self.conditions.items() if not c.passed]

    def to_dict(self) -> dict:
        return {"eps": self.eps, "sigma": self.sigma, "r0": self.r0, "passed": self.passed,
                "conditions": {k: c.to_dict() for k, c in self.conditions.items()}}


def _worst(problem, values, name, ok, boundary=None, detail=""):
    i = int(np.argmin(values))
    v = float(values[i])
    status = "pass" if ok(v) else "fail"
    if boundary is not None and status == "pass" and boundary(v):
        status = "boundary"
    return ConditionStatus(name, status, v, int(problem.mask.interior_nodes[i]),
                           problem.points[i].tolist(), detail)


def enclosing_height(spec: ProblemSpec) -> float:
    """C0: radius of the configured enclosing half-ball, or inf when none is set."""
    return float(spec.enclosing_radius) if spec.enclosing_radius is not None else math.inf


def _boundary_sphere_margin(sigma: float, r0: float, eps: float) -> float:
    if math.isinf(r0):
        return sigma
    return sigma - math.sqrt(1.0 - sigma**2) * eps / r0 - (1.0 + sigma) * eps**2 / r0**2


def check_compatibility(spec: ProblemSpec, eps: float, sigma: float, r0: float = math.inf,
                        solution: meshdom.ScalarField | None = None, problem=None) -> CompatibilityReport:
    """Evaluate the five structural conditions at the grid nodes of {ubar > eps}.

    Keys: ``psi_growth`` (psi_u - psi/u >= 0), ``subsolution_hessian``
    (-lambda(D^2 ubar) in Gamma_{k+1} within 3h of the boundary),
    ``boundary_sphere`` (eps and sigma against r0), ``subsolution``
    (f(kappa[ubar]) >= psi(x, ubar) - tol) and ``psi_above_sigma``
    (psi > sigma_k^{1/k}(sigma, ..., sigma), on ``solution`` when given,
    else on ubar).
    """
    problem = problem or DirichletProblem(spec, eps)
    n, k = spec.n, spec.k
    pts = problem.points
    ub = problem.ubar
    conds = {}

    # psi_u - psi / u on heights between ubar and C0
    top = enclosing_height(spec)
    if not math.isfinite(top):
        top = 2.0 * float(np.max(ub))
    worst = np.full(ub.shape, np.inf)
    for s in np.linspace(0.0, 1.0, 9):
        uu = ub + s * np.maximum(top - ub, 0.0)
        p, pu = exprparse.eval_with_du(spec.psi, pts, uu, strict=False)
        worst = np.minimum(worst, pu - p / uu)
    scale = 1e-12 * max(1.0, float(np.max(np.abs(exprparse.evaluate(spec.psi, pts, ub, strict=False) / ub))))
    conds["psi_growth"] = _worst(problem, worst, "psi_u - psi/u >= 0",
                                 lambda v: v >= -scale, lambda v: abs(v) <= scale)

    # -lambda(D^2 ubar) in Gamma_{k+1} near the boundary
    kk = min(k + 1, n)
    hess = problem.op.hessian(ub, problem.eps)
    lam = np.linalg.eigvalsh(-hess)
    cross = meshdom.crossing_points(problem.mask)
    dist, _ = cKDTree(cross).query(pts)
    band = dist <= 3.0 * spec.h
    margins = np.where(band, symcurv.cone_margin(lam, kk), np.inf)
    detail = f"cone order {kk}, {int(band.sum())} nodes within 3h"
    if k == n:
        detail += "; cone order capped at n since k = n"
    conds["subsolution_hessian"] = _worst(problem, margins, "-lambda(D^2 ubar) in cone near boundary",
                                          lambda v: v > 0, detail=detail)

    # eps against the exterior-sphere radius
    m14 = _boundary_sphere_margin(sigma, r0, eps)
    ok14 = eps > 0 and (math.isinf(r0) or eps < r0 * sigma) and m14 > 0 and 0 < sigma < 1
    conds["boundary_sphere"] = ConditionStatus(
        "0 < eps < r0 sigma and boundary sphere margin > 0", "pass" if ok14 else "fail", m14,
        detail=f"eps={eps!r}, sigma={sigma!r}, r0={r0!r}")

    sub = subsolution_curvature(problem)
    if np.any(sub.margin <= 0):
        i = int(np.argmin(sub.margin))
        conds["subsolution"] = ConditionStatus(
            "f(kappa[ubar]) >= psi(x, ubar)", "fail", float(sub.margin[i]),
            int(problem.mask.interior_nodes[i]), pts[i].tolist(), "ubar not admissible")
    else:
        psi_ub = exprparse.evaluate(spec.psi, pts, ub, strict=False)
        conds["subsolution"] = _worst(problem, sub.G - psi_ub, "f(kappa[ubar]) >= psi(x, ubar)",
                                      lambda v: v >= -spec.subsolution_tol,
                                      detail=f"tolerance {spec.subsolution_tol!r}")

    target = symcurv.f_eval(np.full(n, sigma), k).f_value if sigma > 0 else 0.0
    uu = ub if solution is None else solution.interior_values
    psi_u = exprparse.evaluate(spec.psi, pts, uu, strict=False)
    conds["psi_above_sigma"] = _worst(problem, psi_u - target, "psi > sigma_k^{1/k}(sigma,...,sigma)",
                                      lambda v: v > 0,
                                      detail="on the solution" if solution is not None else "on ubar")
    return CompatibilityReport(float(eps), float(sigma), float(r0), conds)


def psi_above_sigma_check(u: meshdom.ScalarField, spec: ProblemSpec, sigma: float) -> ConditionStatus:
    """A posteriori psi(x, u) > sigma_k^{1/k}(sigma, ..., sigma) on a computed solution."""
    return check_compatibility(spec, float(u.boundary_value), sigma, solution=u,
                               problem=_as_problem(u, spec)).conditions["psi_above_sigma"]


def boundary_gradient_check(u: meshdom.ScalarField, spec: ProblemSpec, sigma: float,
                            r0: float = math.inf, eps: float | None = None) -> dict:
    """w = sqrt(1 + |Du|^2) at boundary-adjacent interior nodes against 1 / (boundary sphere margin)."""
    eps = float(u.boundary_value) if eps is None else float(eps)
    mask = u.mask
    nodes = mask.interior_nodes
    adj = np.any(mask.theta_minus[nodes] < 1.0, axis=1) | np.any(mask.theta_plus[nodes] < 1.0, axis=1)
    grad = mask.jet_operator.gradient(u.interior_values, u.boundary_value)
    w = np.sqrt(1.0 + np.sum(grad[adj] ** 2, axis=-1))
    m = _boundary_sphere_margin(sigma, r0, eps)
    bound = 1.0 / m if m > 0 else math.inf
    wmax = float(np.max(w)) if w.size else 1.0
    return {"eps": eps, "sigma": float(sigma), "r0": float(r0), "bound": bound, "max_w": wmax,
            "nodes": int(w.size), "passed": bool(m > 0 and wmax < bound)}


def sandwich_check(u: meshdom.ScalarField, spec: ProblemSpec, tol: float = 1e-8) -> dict:
    """eps <= ubar <= u <= C0 on the interior nodes."""
    nodes = u.mask.interior_nodes
    ub = spec.ubar_at(u.grid.points[nodes])
    uv = u.values[nodes]
    eps = float(u.boundary_value)
    c0 = enclosing_height(spec)
    lo = float(np.min(ub - eps))
    mid = float(np.min(uv - ub))
    hi = float(np.max(uv) - c0)
    return {"min_ubar_minus_eps": lo, "min_u_minus_ubar": mid, "max_u_minus_C0": hi, "C0": c0,
            "tol": tol, "passed": bool(lo >= -tol and mid >= -tol and hi <= tol)}


# sweep


@dataclass
class SweepEntry:
    eps: float
    num_interior: int
    residual: float
    newton_iters: int
    continuation_steps: int
    max_kappa: float
    min_margin: float
    sup_grad_ref: float
    min_u_minus_ubar: float
    monotonicity_violations: int
    monotonicity_worst: float
    sign_condition_max: float
    boundary_gradient: dict
    sandwich: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SweepReport:
    schedule: list
    reference_eps0: float
    entries: list = field(default_factory=list)
    successive_differences: list = field(default_factory=list)
    limit_differences: list = field(default_factory=list)
    level_set_nesting: list = field(default_factory=list)
    bracketing: dict | None = None
    error: str | None = None
    solutions: dict = field(default_factory=dict, repr=False)

    @property
    def completed(self) -> bool:
        return self.error is None and len(self.entries) == len(self.schedule)

    @property
    def monotone(self) -> bool:
        return all(e.monotonicity_violations == 0 for e in self.entries)

    @property
    def grad_ratio(self) -> float:
        g = [e.sup_grad_ref for e in self.entries]
        return max(g) / min(g) if g and min(g) > 0 else math.inf

    @property
    def cauchy_decreasing(self) -> bool:
        """Distances to the finest solution shrink along the schedule."""
        d = self.limit_differences
        return all(b < a for a, b in zip(d, d[1:]))

    @property
    def lipschitz_estimate(self) -> float:
        return self.entries[-1].sup_grad_ref if self.entries else math.nan

    def to_dict(self) -> dict:
        return {
            "schedule": list(self.schedule),
            "reference_eps0": self.reference_eps0,
            "completed": self.completed,
            "error": self.error,
            "entries": [e.to_dict() for e in self.entries],
            "monotone": self.monotone,
            "successive_differences": list(self.successive_differences),
            "limit_differences": list(self.limit_differences),
            "cauchy_decreasing": self.cauchy_decreasing,
            "grad_ratio": self.grad_ratio,
            "lipschitz_estimate": self.lipschitz_estimate,
            "level_set_nesting": list(self.level_set_nesting),
            "bracketing": self.bracketing,
        }


def _solve_one(spec, eps):
    return continuity_solve(spec, eps)


def _sup_grad(u: meshdom.ScalarField, ref_nodes) -> float:
    op = u.mask.jet_operator
    g = op.gradient(u.interior_values, u.boundary_value)
    rows = u.mask.interior_index[ref_nodes]
    return float(np.max(np.sqrt(np.sum(g[rows] ** 2, axis=-1))))


def level_set_nodes(u: meshdom.ScalarField, level: float) -> np.ndarray:
    """Flat ids of interior nodes where u > level."""
    nodes = u.mask.interior_nodes
    return nodes[u.values[nodes] > level]


def epsilon_sweep(spec: ProblemSpec, schedule, reference_eps0: float, sigma: float | None = None,
                  r0: float = math.inf, jobs: int = 1, monotonicity_tol: float = 1e-6,
                  logger=None) -> SweepReport:
    """Solve along a decreasing schedule and collect convergence diagnostics.

    Monotonicity is tested on the interior of each coarser domain; gradients
    and Cauchy differences are measured on {ubar > reference_eps0}, the
    latter both between neighbours and against the finest solution, which
    stands in for the limit. A failed
    solve stops the sweep and is recorded in ``error``.
    """
    schedule = [float(e) for e in schedule]
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly decreasing")
    if not schedule:
        raise ValueError("empty schedule")
    if schedule[0] > reference_eps0:
        raise ValueError("schedule must not exceed the reference level")
    report = SweepReport(schedule, float(reference_eps0))
    ref_mask = meshdom.mask_from_levelset(spec.ubar, spec.grid, reference_eps0)
    ref_nodes = ref_mask.interior_nodes

    results = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {e: pool.submit(_solve_one, spec, e) for e in schedule}
            for e in schedule:
                try:
                    results[e] = futs[e].result()
                except WeingartenError as exc:
                    results[e] = exc
    prev = None
    for e in schedule:
        try:
            tagged = None if logger is None else (lambda rec, e=e: logger({"eps": e, **rec}))
            res = results[e] if e in results else continuity_solve(spec, e, tagged)
            if isinstance(res, Exception):
                raise res
        except WeingartenError as exc:
            report.error = f"eps={e!r}: {type(exc).__name__}: {exc}"
            break
        u, hist = res
        report.solutions[e] = u
        problem = DirichletProblem(spec, e)
        ev = evaluate(problem, u.interior_values, PsiRhs(spec.psi))
        if prev is not None:
            nodes = prev.mask.interior_nodes
            d = u.values[nodes] - prev.values[nodes]
            viol = int(np.sum(d < -monotonicity_tol))
            worst = float(np.min(d))
            report.successive_differences.append(float(np.max(np.abs(d[np.isin(nodes, ref_nodes)]))))
            inner, outer = level_set_nodes(prev, reference_eps0), level_set_nodes(u, reference_eps0)
            report.level_set_nesting.append(
                {"eps_coarse": prev.boundary_value, "eps_fine": e,
                 "nested": bool(np.all(np.isin(inner, outer)))})
        else:
            viol, worst = 0, math.nan
        sg = float(np.max(zeroth_order_margin(u, spec)))
        bg = boundary_gradient_check(u, spec, sigma, r0, e) if sigma is not None else {}
        report.entries.append(SweepEntry(
            eps=e,
            num_interior=problem.m,
            residual=float(np.max(np.abs(ev.residual))),
            newton_iters=int(sum(h.newton_iters for h in hist)),
            continuation_steps=len(hist),
            max_kappa=float(np.max(ev.kappa)),
            min_margin=float(np.min(ev.margin)),
            sup_grad_ref=_sup_grad(u, ref_nodes),
            min_u_minus_ubar=float(np.min(u.interior_values - problem.ubar)),
            monotonicity_violations=viol,
            monotonicity_worst=worst,
            sign_condition_max=sg,
            boundary_gradient=bg,
            sandwich=sandwich_check(u, spec),
        ))
        prev = u
    if len(report.solutions) > 1:
        last = report.solutions[report.entries[-1].eps]
        for e in report.entries[:-1]:
            d = report.solutions[e.eps].values[ref_nodes] - last.values[ref_nodes]
            report.limit_differences.append(float(np.max(np.abs(d))))
    return report


# domain bracketing


def _subset(a, b) -> tuple[bool, list]:
    missing = np.setdiff1d(a, b)
    return bool(missing.size == 0), missing[:20].tolist()


def bracket_domains(spec: ProblemSpec, eps0: float, eps: float, u_eps=None, u_mid=None,
                    u_mean=None) -> dict:
    """Check the level-set inclusions between ubar, u^eps and the mean-curvature solution.

    All sets are node sets on the common grid. The mean-curvature solution
    is computed on {ubar > eps} with boundary value eps. Each entry of
    ``checks`` carries its statement in words. Solutions may be passed in
    to avoid recomputation.
    """
    if not 0 < eps < eps0:
        raise ValueError("need 0 < eps < eps0")
    mid = 0.5 * (eps + eps0)
    grid = spec.grid
    omega_eps = meshdom.mask_from_levelset(spec.ubar, grid, eps).interior_nodes
    omega_eps0 = meshdom.mask_from_levelset(spec.ubar, grid, eps0).interior_nodes
    if u_eps is None:
        u_eps, _ = continuity_solve(spec, eps)
    if u_mid is None:
        u_mid, _ = continuity_solve(spec, mid)
    if u_mean is None:
        u_mean = mean_curvature_solve(spec, eps)
    out = {"eps0": eps0, "eps": eps, "eps_mid": mid}
    checks = {}

    def record(key, statement, ok, offenders=()):
        checks[key] = {"statement": statement, "holds": bool(ok), "offending_nodes": list(offenders)}

    # larger levels give smaller sets, fixed u^eps
    ok, bad = _subset(level_set_nodes(u_eps, eps0), level_set_nodes(u_eps, mid))
    record("higher_level_nested", "{u^eps > eps0} within {u^eps > eps_mid}", ok, bad)
    # u^{eps_mid} level set inside u^{eps} level set
    ok, bad = _subset(level_set_nodes(u_mid, eps0), level_set_nodes(u_eps, eps0))
    record("mid_within_fine", "{u^eps_mid > eps0} within {u^eps > eps0}", ok, bad)
    # {u^eps > eps} equals the domain itself
    lvl = level_set_nodes(u_eps, eps)
    record("level_matches_ubar", "{u^eps > eps} equals {ubar > eps}", np.array_equal(lvl, omega_eps),
           np.setxor1d(lvl, omega_eps)[:20].tolist())
    sup = level_set_nodes(u_eps, eps0)
    ok1, bad1 = _subset(omega_eps0, sup)
    ok2, bad2 = _subset(sup, omega_eps)
    record("nested_superlevels", "{ubar > eps0} within {u^eps > eps0} within {ubar > eps}", ok1 and ok2, bad1 + bad2)
    # u^eps crosses eps0 across every boundary edge of {u^eps > eps0}
    lvl_mask = meshdom.mask_from_levelset(u_eps.values, grid, eps0, refine=False)
    trace = meshdom.boundary_trace(meshdom.ScalarField(grid, u_eps.values, lvl_mask, eps0))
    err = float(np.max(np.abs(trace - eps0))) if trace.size else 0.0
    record("boundary_trace", "u^eps = eps0 on the boundary of {u^eps > eps0} (linear trace, tolerance h)",
           err <= spec.h)
    checks["boundary_trace"]["trace_error"] = err

    hat_nodes = u_mean.mask.interior_nodes[u_mean.values[u_mean.mask.interior_nodes] >= eps0]
    ub_all = meshdom.sample(grid, spec.ubar)
    delta = float(np.min(ub_all[hat_nodes])) if hat_nodes.size else math.nan
    out["delta_eps0"] = delta
    record("delta_range", "0 < delta_eps0 <= eps0", 0 < delta <= eps0)
    out["eps_below_delta"] = bool(eps < delta)
    ok1, bad1 = _subset(sup, hat_nodes)
    closure = np.nonzero(np.nan_to_num(ub_all, nan=-np.inf) >= delta)[0]
    ok2, bad2 = _subset(hat_nodes, closure)
    record("mean_bracket", "{u^eps > eps0} within {ubar_mean >= eps0} within {ubar >= delta_eps0}",
           ok1 and ok2, bad1 + bad2)
    mean_int = u_mean.interior_values
    ub_int = spec.ubar_at(grid.points[u_mean.mask.interior_nodes])
    out["mean_minus_ubar_min"] = float(np.min(mean_int - ub_int))
    record("mean_dominates_ubar", "mean-curvature solution >= ubar", out["mean_minus_ubar_min"] >= -1e-8)
    out["checks"] = checks
    out["passed"] = all(c["holds"] for c in checks.values())
    return out


# viscosity probes


def calibrate_truncation(h: float, n: int = 2, k: int | None = None, safety: float = 2.0) -> float:
    """C_trunc with |G_h - G| <= C_trunc h^2 on the cap R=1, sigma=0.5 at deep-interior nodes.

    Returns ``safety`` times the observed ratio err / h^2.
    """
    k = n if k is None else k
    cap = hypgraph.SphereCap(np.zeros(n), 1.0, 0.5)
    grid = meshdom.Grid.from_box([-1.0] * n, [1.0] * n, h)
    mask = meshdom.mask_from_levelset(cap, grid, 0.1)
    vals = cap(grid.points[mask.interior_nodes])
    op = mask.jet_operator
    jet = op.jets(vals, 0.1)
    rows = mask.interior_index[mask.deep_interior]
    g = hypgraph.G_value(hypgraph.JetPoint(jet.u[rows], jet.du[rows], jet.d2u[rows]), k)
    exact = symcurv.f_eval(np.full(n, 0.5), k).f_value
    return safety * float(np.max(np.abs(g - exact))) / h**2


def viscosity_probe(u: meshdom.ScalarField, spec: ProblemSpec, sample_nodes, alpha_schedule,
                    c_trunc: float | None = None, k: int | None = None) -> dict:
    """Sub- and supersolution tests with quadratic models D^2u +- alpha I at sampled nodes.

    From above: G(D^2u + alpha I, Du, u) >= psi - tol. From below: either the
    model leaves the cone (margin <= 0) or G(D^2u - alpha I, Du, u) <= psi + tol.
    Nodes whose below-model margin lies in (0, margin_min] are listed as borderline.
    ``tol = c_trunc h^2`` with ``c_trunc`` from :func:`calibrate_truncation` by default.
    """
    k = spec.k if k is None else k
    if c_trunc is None:
        c_trunc = calibrate_truncation(spec.h, spec.n, k)
    tol = c_trunc * spec.h**2
    nodes = np.asarray(sample_nodes, dtype=np.int64)
    mask = u.mask
    if np.any(mask.kind[nodes] != meshdom.INTERIOR):
        raise DomainError("probe nodes must be interior")
    rows = mask.interior_index[nodes]
    jet = u.jets()
    base_u, du, d2u = jet.u[rows], jet.du[rows], jet.d2u[rows]
    psi = exprparse.evaluate(spec.psi, u.grid.points[nodes], base_u)
    eye = np.eye(spec.n)
    per_alpha = []
    violations = []
    borderline = []
    for a in alpha_schedule:
        up = hypgraph._linearize(hypgraph.JetPoint(base_u, du, d2u + a * eye), k, check=False)[0]
        dn = hypgraph._linearize(hypgraph.JetPoint(base_u, du, d2u - a * eye), k, check=False)[0]
        up_ok = (up.margin > 0) & (np.nan_to_num(up.f_value, nan=-np.inf) >= psi - tol)
        dn_adm = dn.margin > spec.margin_min
        dn_border = (dn.margin > 0) & ~dn_adm
        dn_ok = ~dn_adm | (dn.f_value <= psi + tol)
        for i in np.nonzero(~up_ok)[0]:
            violations.append({"node": int(nodes[i]), "alpha": a, "side": "above",
                               "G": float(up.f_value[i]), "psi": float(psi[i])})
        for i in np.nonzero(~dn_ok)[0]:
            violations.append({"node": int(nodes[i]), "alpha": a, "side": "below",
                               "G": float(dn.f_value[i]), "psi": float(psi[i])})
        borderline.extend({"node": int(nodes[i]), "alpha": a} for i in np.nonzero(dn_border)[0])
        gap_up = np.where(up.margin > 0, up.f_value - psi, -np.inf)
        gap_dn = np.where(dn_adm, psi - dn.f_value, np.inf)
        per_alpha.append({"alpha": a, "min_gap_above": float(np.min(gap_up)),
                          "min_gap_below": float(np.min(gap_dn)),
                          "inadmissible_below": int(np.sum(~dn_adm))})
    return {"c_trunc": c_trunc, "tol_probe": tol, "nodes": int(nodes.size), "per_alpha": per_alpha,
            "violations": violations, "borderline": borderline, "passed": not violations}


def touching_test(u: meshdom.ScalarField, v, spec: ProblemSpec, k: int | None = None) -> dict:
    """Look for discrete contact points: local maxima of u - v with |u - v| < h^2.

    ``v`` is a ScalarField on the same grid or a callable on points. Only
    nodes whose full 3^n block is interior are examined. The report also
    states whether f(kappa[v]) < f(kappa[u]) held at those nodes.
    """
    k = spec.k if k is None else k
    mask = u.mask
    grid = u.grid
    deep = mask.deep_interior
    vv = v.values if isinstance(v, meshdom.ScalarField) else meshdom.sample(grid, v)
    d = u.values - vv
    is_max = np.ones(deep.size, dtype=bool)
    for off in meshdom._block_offsets(grid):
        is_max &= d[deep] >= d[deep + off]
    maxima = deep[is_max]
    touching = maxima[np.abs(d[maxima]) < grid.h**2]
    op = mask.jet_operator
    rows = mask.interior_index[deep]
    gu = evaluate(_as_problem(u, spec), u.interior_values, PsiRhs(spec.psi), k, with_coeffs=False)
    vjet = op.jets(np.where(np.isfinite(vv[mask.interior_nodes]), vv[mask.interior_nodes], 1.0), u.boundary_value)
    vj = hypgraph.JetPoint(vjet.u[rows], vjet.du[rows], vjet.d2u[rows])
    vev = hypgraph._linearize(vj, k, check=False)[0]
    order = bool(np.all(np.where(vev.margin > 0, vev.f_value, -np.inf) < gu.G[rows]))
    return {"local_maxima": int(maxima.size), "touching_nodes": touching.tolist(),
            "max_u_minus_v": float(np.max(d[deep])), "curvature_order_holds": order,
            "passed": bool(touching.size == 0)}
