import json
import math

import numpy as np
import pytest

from weingarten import hypgraph, meshdom
from weingarten.errors import DomainError
from weingarten.nlsolve import DirichletProblem, ProblemSpec, PsiRhs, continuity_solve, evaluate
from weingarten.plateau import (
    boundary_gradient_check,
    bracket_domains,
    calibrate_truncation,
    check_compatibility,
    dumps,
    epsilon_sweep,
    level_set_nodes,
    psi_above_sigma_check,
    sandwich_check,
    touching_test,
    viscosity_probe,
)

CAP = "sqrt(1-x1^2-x2^2)-0.5"
C0 = math.sqrt(0.75)


def example(psi="2*u^2", h=1 / 32, k=2, **kw):
    kw.setdefault("enclosing_radius", C0)
    kw.setdefault("enclosing_center", (0.0, 0.0))
    return ProblemSpec.from_text(2, k, psi, CAP, (-1, -1), (1, 1), h, **kw)


@pytest.fixture(scope="module")
def solved():
    spec = example()
    u, _ = continuity_solve(spec, 0.3)
    return spec, u


@pytest.fixture(scope="module")
def cap_field():
    # exact constant-curvature graph: ubar itself solves f(kappa) = 0.5
    spec = example(psi="0.5", h=1 / 64)
    p = DirichletProblem(spec, 0.1)
    return spec, p.field(p.ubar)


# compatibility


def test_example_compatibility_passes():
    spec = example()
    rep = check_compatibility(spec, 0.3, 0.09)
    assert rep.passed, rep.failures()
    assert set(rep.conditions) == {"psi_growth", "subsolution_hessian", "boundary_sphere",
                                   "subsolution", "psi_above_sigma"}
    p = DirichletProblem(spec, 0.3)
    # psi_u - psi/u = 2u, smallest at the lowest sampled height
    assert rep.conditions["psi_growth"].value == pytest.approx(2 * np.min(p.ubar), rel=1e-12)
    assert rep.conditions["boundary_sphere"].value == 0.09
    for c in rep.conditions.values():
        if c.name.startswith("psi_u") or c.node is not None:
            assert c.node in set(p.mask.interior_nodes.tolist())


def test_linear_psi_sits_on_the_growth_boundary():
    rep = check_compatibility(example("0.1*u"), 0.3, 0.09)
    assert rep.conditions["psi_growth"].status == "boundary"
    assert rep.conditions["psi_growth"].passed


def test_sublinear_psi_fails_growth():
    rep = check_compatibility(example("0.1*sqrt(u)"), 0.3, 0.09)
    assert rep.conditions["psi_growth"].status == "fail"
    assert not rep.passed and "psi_growth" in rep.failures()


def test_finite_exterior_radius():
    sigma, eps = 0.09, 0.3
    rep = check_compatibility(example(), eps, sigma, r0=1.0)
    assert rep.conditions["boundary_sphere"].status == "fail"  # eps > r0 sigma
    rep = check_compatibility(example(), 0.03, sigma, r0=10.0)
    expect = sigma - math.sqrt(1 - sigma**2) * 0.03 / 10 - (1 + sigma) * 0.03**2 / 100
    assert rep.conditions["boundary_sphere"].value == pytest.approx(expect, rel=1e-14)
    assert rep.conditions["boundary_sphere"].status == "pass"


def test_bell_subsolution_is_not_concave_near_boundary():
    spec = ProblemSpec.from_text(2, 2, "2*u^2", "exp(-4*(x1^2+x2^2))", (-1, -1), (1, 1), 1 / 32)
    rep = check_compatibility(spec, 0.3, 0.09)
    assert rep.conditions["subsolution_hessian"].status == "fail"


def test_large_psi_breaks_subsolution():
    rep = check_compatibility(example("10*u^2"), 0.3, 0.09)
    assert rep.conditions["subsolution"].status == "fail"


def test_report_serialises():
    rep = check_compatibility(example(), 0.3, 0.09)
    text = dumps(rep)
    assert text == dumps(rep)
    data = json.loads(text)
    assert data["passed"] is True and data["r0"] == "inf"


# boundary gradient and sandwich


def test_boundary_gradient_on_example(solved):
    spec, u = solved
    rep = boundary_gradient_check(u, spec, 0.09, math.inf, 0.3)
    assert rep["bound"] == pytest.approx(1 / 0.09)
    assert rep["passed"] and 1.0 < rep["max_w"] < rep["bound"]


def test_boundary_gradient_on_flat_field():
    spec = example()
    p = DirichletProblem(spec, 0.3)
    flat = p.field(np.full(p.m, 0.3))
    rep = boundary_gradient_check(flat, spec, 0.09)
    assert rep["max_w"] == 1.0 and rep["passed"]


def test_boundary_gradient_without_margin_fails(solved):
    spec, u = solved
    rep = boundary_gradient_check(u, spec, 0.09, r0=0.1)
    assert rep["bound"] == math.inf and not rep["passed"]


def test_psi_above_sigma_on_solution(solved):
    spec, u = solved
    c = psi_above_sigma_check(u, spec, 0.09)
    # psi = 2u^2 >= 2 eps^2 = 0.18 against sigma = 0.09
    assert c.passed and c.value == pytest.approx(2 * np.min(u.interior_values) ** 2 - 0.09)
    assert not psi_above_sigma_check(u, spec, 0.5).passed


def test_sandwich(solved):
    spec, u = solved
    assert sandwich_check(u, spec)["passed"]
    assert not sandwich_check(u, spec.replace(enclosing_radius=0.4))["passed"]


# probes


def test_truncation_constant_is_positive_and_stable():
    c1 = calibrate_truncation(1 / 64)
    c2 = calibrate_truncation(1 / 128)
    assert c1 > 0 and 0.5 < c1 / c2 < 2.0


def test_cap_probes_pass_with_margin_linear_in_alpha(cap_field):
    spec, u = cap_field
    nodes = u.mask.deep_interior
    rep = viscosity_probe(u, spec, nodes, [0.0, 1e-3, 2e-3])
    assert rep["passed"], rep["violations"][:3]
    g = [a["min_gap_above"] for a in rep["per_alpha"]]
    assert abs(g[0]) <= rep["tol_probe"]
    assert (g[2] - g[0]) / (g[1] - g[0]) == pytest.approx(2.0, rel=1e-2)
    b = [a["min_gap_below"] for a in rep["per_alpha"]]
    assert b[1] > b[0] and b[2] > b[1]


def test_zero_alpha_probe_is_the_residual(solved):
    spec, u = solved
    nodes = u.mask.deep_interior[:40]
    rep = viscosity_probe(u, spec, nodes, [0.0])
    ev = evaluate(DirichletProblem(spec, 0.3), u.interior_values, PsiRhs(spec.psi))
    rows = u.mask.interior_index[nodes]
    assert rep["per_alpha"][0]["min_gap_above"] == pytest.approx(np.min(ev.residual[rows]), abs=1e-14)
    assert rep["passed"]


def test_example_probes_at_random_nodes(solved):
    spec, u = solved
    rng = np.random.default_rng(0)
    nodes = rng.choice(u.mask.interior_nodes, 50, replace=False)
    rep = viscosity_probe(u, spec, nodes, [1e-3, 1e-2])
    assert rep["passed"] and rep["nodes"] == 50


def test_probe_detects_a_non_solution():
    spec = example("10*u^2")
    p = DirichletProblem(spec, 0.3)
    rep = viscosity_probe(p.field(p.ubar), spec, p.mask.deep_interior[:20], [1e-3])
    assert not rep["passed"]
    assert {v["side"] for v in rep["violations"]} == {"above"}


def test_probe_rejects_non_interior_nodes(solved):
    spec, u = solved
    with pytest.raises(DomainError):
        viscosity_probe(u, spec, u.mask.cut_nodes[:1], [1e-3])


def test_touching_shifted_copy(solved):
    spec, u = solved
    v = meshdom.ScalarField(u.grid, u.values - 0.1, u.mask, u.boundary_value)
    rep = touching_test(u, v, spec)
    assert rep["local_maxima"] > 0 and rep["passed"]
    assert rep["max_u_minus_v"] == pytest.approx(0.1)


def test_touching_detects_contact(solved):
    spec, u = solved
    rep = touching_test(u, u, spec)
    assert rep["touching_nodes"] and not rep["passed"]


def test_enclosing_hemisphere_is_never_touched(solved):
    spec, u = solved
    hemi = hypgraph.SphereCap(np.zeros(2), C0, 0.0)
    rep = touching_test(u, hemi, spec)
    assert rep["passed"] and rep["max_u_minus_v"] < 0
    assert rep["curvature_order_holds"]


# sweep and bracketing


@pytest.fixture(scope="module")
def sweep():
    spec = example()
    return spec, epsilon_sweep(spec, [0.4, 0.3, 0.2, 0.1], 0.4, sigma=0.09)


def test_sweep_is_monotone_and_complete(sweep):
    _, rep = sweep
    assert rep.completed and rep.monotone
    assert len(rep.successive_differences) == 3 and len(rep.limit_differences) == 3
    assert rep.cauchy_decreasing
    assert rep.grad_ratio < 2
    assert all(n["nested"] for n in rep.level_set_nesting)
    for e in rep.entries:
        assert e.residual < 1e-8 and e.min_margin > 0 and e.sign_condition_max < 0
        assert e.boundary_gradient["passed"] and e.sandwich["passed"]


def test_sweep_report_is_stable(sweep):
    spec, rep = sweep
    assert dumps(rep) == dumps(rep)
    again = epsilon_sweep(spec, [0.4, 0.3, 0.2, 0.1], 0.4, sigma=0.09, jobs=2)
    assert dumps(again) == dumps(rep)


def test_sweep_preconditions():
    spec = example()
    with pytest.raises(ValueError):
        epsilon_sweep(spec, [0.2, 0.3], 0.4)
    with pytest.raises(ValueError):
        epsilon_sweep(spec, [0.45, 0.3], 0.4)


def test_sweep_failure_keeps_partial_report():
    spec = example(newton_max_iter=1, t_step_min=0.1)
    rep = epsilon_sweep(spec, [0.3, 0.2], 0.3)
    assert not rep.completed and rep.error and "ContinuationError" in rep.error
    assert json.loads(dumps(rep))["completed"] is False


def test_bracketing_on_example(sweep):
    spec, rep = sweep
    out = bracket_domains(spec, 0.3, 0.1, u_eps=rep.solutions[0.1], u_mid=rep.solutions[0.2])
    assert out["passed"], {k: v for k, v in out["checks"].items() if not v["holds"]}
    assert 0 < out["delta_eps0"] <= 0.3
    assert out["checks"]["level_matches_ubar"]["holds"] and out["checks"]["nested_superlevels"]["holds"]


def test_bracketing_needs_ordered_levels():
    with pytest.raises(ValueError):
        bracket_domains(example(), 0.1, 0.3)


def test_level_set_nodes(solved):
    _, u = solved
    assert np.array_equal(level_set_nodes(u, 0.3), u.mask.interior_nodes)
    assert level_set_nodes(u, 10.0).size == 0


def test_dumps_handles_non_finite():
    text = dumps({"b": math.inf, "a": [np.float64(math.nan), np.int64(3), np.bool_(True)]})
    assert json.loads(text) == {"a": ["nan", 3, True], "b": "inf"}
    assert text.index('"a"') < text.index('"b"')
