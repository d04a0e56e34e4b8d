"""Acceptance criteria 1-11, each at its stated tolerance and time budget.

Every criterion records one PASS/FAIL line, printed in the terminal summary.
"""

import configparser
import math
import time
from math import comb
from pathlib import Path

import numpy as np
import pytest

from jets import linearization_fd_error, random_admissible_jet
from weingarten import cli, hypgraph, meshdom, symcurv
from weingarten.nlsolve import (
    DirichletProblem,
    ProblemSpec,
    PsiRhs,
    continuity_solve,
    evaluate,
    zeroth_order_margin,
    mean_curvature_solve,
    uniqueness_probe,
)
from weingarten.plateau import (
    boundary_gradient_check,
    bracket_domains,
    epsilon_sweep,
    sandwich_check,
    viscosity_probe,
)

ROOT = Path(__file__).resolve().parents[1]
C0 = math.sqrt(0.75)  # radius of the enclosing half-ball
SIGMA = 0.09  # sigma1 eps^2 / (2 (1 - sigma1)^2 R^2) at eps = 0.3
SCHEDULE = [0.4, 0.3, 0.2, 0.1]


def example_spec(h=1 / 128):
    return ProblemSpec.from_text(2, 2, "2*u^2", "sqrt(1-x1^2-x2^2)-0.5", (-1, -1), (1, 1), h,
                                 enclosing_radius=C0, enclosing_center=(0.0, 0.0))


@pytest.fixture(scope="module")
def spec():
    return example_spec()


@pytest.fixture(scope="module")
def solved(spec):
    t0 = time.perf_counter()
    u, hist = continuity_solve(spec, 0.3)
    return u, hist, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sweep(spec):
    t0 = time.perf_counter()
    rep = epsilon_sweep(spec, SCHEDULE, 0.4, sigma=SIGMA)
    return rep, time.perf_counter() - t0


def _cap_errors(h, eps=0.3):
    cap = hypgraph.SphereCap(np.zeros(2), 1.0, 0.5)
    g = meshdom.Grid.from_box((-1, -1), (1, 1), h)
    mask = meshdom.mask_from_levelset(cap, g, eps)
    x = g.points[mask.interior_nodes]
    jet = mask.jet_operator.jets(cap(x), eps)
    err = np.abs(hypgraph.curvature_matrix(jet).kappa - 0.5).max(axis=1)
    return float(np.max(err)), float(np.max(err[np.linalg.norm(x, axis=1) <= 0.5]))


def test_criterion_01_constant_curvature_reconstruction(acceptance):
    t0 = time.perf_counter()
    cap = hypgraph.SphereCap(np.zeros(2), 1.0, 0.5)
    rng = np.random.default_rng(1)
    r = np.sqrt(rng.uniform(0, 0.7, 200))
    th = rng.uniform(0, 2 * np.pi, 200)
    x = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    analytic = float(np.max(np.abs(hypgraph.curvature_matrix(hypgraph.sphere_cap_jet(cap, x)).kappa - 0.5)))
    full64, _ = _cap_errors(1 / 64)
    fixed = [_cap_errors(h)[1] for h in (1 / 32, 1 / 64, 1 / 128)]
    ratios = [a / b for a, b in zip(fixed, fixed[1:])]
    dt = time.perf_counter() - t0
    ok = analytic <= 1e-12 and full64 < 5e-3 and all(3.5 <= q <= 4.5 for q in ratios) and dt < 1.0
    acceptance(1, "cap curvature", ok,
               f"analytic {analytic:.1e}; FD at h=1/64 {full64:.2e} (all interior nodes); "
               f"ratios on |x|<=0.5 {', '.join(f'{q:.2f}' for q in ratios)}", dt)
    assert ok


def test_criterion_02_linearization_fidelity(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    cases = [(n, k) for n in (2, 3) for k in range(1, n + 1)]
    worst = 0.0
    for i in range(100):
        n, k = cases[i % len(cases)]
        worst = max(worst, linearization_fd_error(random_admissible_jet(rng, n, k), k))
    dt = time.perf_counter() - t0
    ok = worst < 1e-5 and dt < 5.0
    acceptance(2, "linearization vs central FD", ok, f"100 jets, max relative error {worst:.2e}", dt)
    assert ok


def _cone_batch(rng, n, k, count):
    out = []
    while sum(len(b) for b in out) < count:
        lam = rng.normal(size=(4 * count, n)) + rng.uniform(0, 1.5, size=(4 * count, 1))
        lam *= rng.uniform(0.1, 10.0, size=(4 * count, 1))
        out.append(lam[symcurv.cone_margin(lam, k) > 1e-6])
    return np.concatenate(out)[:count]


def test_criterion_03_cone_algebra(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    cases = [(n, k) for n in (2, 3, 4, 5) for k in range(1, n + 1)]
    per = -(-10_000 // len(cases))
    total = 0
    bad = {"newton_maclaurin": 0, "euler": 0, "homogeneity": 0, "f_i": 0, "concavity": 0}
    for n, k in cases:
        lam = _cone_batch(rng, n, k, per)
        total += len(lam)
        ev = symcurv.f_eval(lam, k)
        s = symcurv.sigma_all(lam, k)
        means = np.stack([(s[:, j] / comb(n, j)) ** (1.0 / j) for j in range(1, k + 1)], axis=1)
        bad["newton_maclaurin"] += int(np.sum(np.any(np.diff(means, axis=1) > 1e-12 * means[:, :-1], axis=1)))
        euler = np.sum(lam * ev.grad, axis=1)
        bad["euler"] += int(np.sum(np.abs(euler - ev.f_value) > 1e-12 * ev.f_value))
        t = rng.uniform(0.1, 10.0, size=(len(lam), 1))
        bad["homogeneity"] += int(np.sum(np.abs(symcurv.f_eval(t * lam, k).f_value - t[:, 0] * ev.f_value)
                                         > 1e-12 * t[:, 0] * ev.f_value))
        bad["f_i"] += int(np.sum(np.any(ev.grad <= 0, axis=1)))
        other = lam[rng.permutation(len(lam))]
        mid = symcurv.f_eval(0.5 * (lam + other), k).f_value
        avg = 0.5 * (ev.f_value + symcurv.f_eval(other, k).f_value)
        bad["concavity"] += int(np.sum(mid < avg - 1e-12 * avg))
    dt = time.perf_counter() - t0
    ok = total >= 10_000 and not any(bad.values()) and dt < 5.0
    acceptance(3, "cone algebra", ok, f"{total} samples, violations {bad}", dt)
    assert ok


def test_criterion_04_example_end_to_end(acceptance, spec, solved):
    u, hist, dt = solved
    p = DirichletProblem(spec, 0.3)
    ev = evaluate(p, u.interior_values, PsiRhs(spec.psi))
    res = float(np.max(np.abs(ev.residual)))
    sw = sandwich_check(u, spec, 1e-8)
    margin = float(np.min(ev.margin))
    ok = res < 1e-8 and sw["passed"] and margin > 0 and dt < 30
    acceptance(4, "Example at eps=0.3, h=1/128", ok,
               f"residual {res:.1e}, min margin {margin:.3f}, sandwich "
               f"(u_bar-eps {sw['min_ubar_minus_eps']:.1e}, u-u_bar {sw['min_u_minus_ubar']:.1e}, "
               f"u-C0 {sw['max_u_minus_C0']:.3f})", dt)
    assert ok


def test_criterion_05_monotone_sweep(acceptance, sweep):
    rep, dt = sweep
    viol = sum(e.monotonicity_violations for e in rep.entries)
    worst = min(e.monotonicity_worst for e in rep.entries[1:])
    ok = rep.completed and viol == 0 and dt < 180
    acceptance(5, "monotonicity across eps", ok,
               f"schedule {SCHEDULE}, violations {viol}, min(u_fine - u_coarse) {worst:.2e}", dt)
    assert ok


def test_criterion_06_uniform_gradient_and_cauchy(acceptance, sweep):
    rep, _ = sweep
    succ = rep.successive_differences
    lim = rep.limit_differences
    ok = rep.grad_ratio < 2 and rep.cauchy_decreasing
    acceptance(6, "C1 diagnostic on {u_bar > 0.4}", ok,
               f"sup|Du| ratio {rep.grad_ratio:.3f}; distance to finest solution "
               f"{', '.join(f'{d:.4f}' for d in lim)} (decreasing); neighbour differences "
               f"{', '.join(f'{d:.4f}' for d in succ)}")
    assert ok


def test_criterion_07_sign_condition(acceptance, spec, solved, sweep):
    rep, _ = sweep
    fields = list(rep.solutions.values()) + [solved[0]]
    maxima = [float(np.max(zeroth_order_margin(u, spec))) for u in fields]
    exceptions = sum(int(np.sum(zeroth_order_margin(u, spec) >= 0)) for u in fields)
    ok = exceptions == 0
    acceptance(7, "G_u - psi_u < 0", ok, f"{len(fields)} solutions, exceptions {exceptions}, "
               f"largest value {max(maxima):.3f}")
    assert ok


def test_criterion_08_domain_bracketing(acceptance, spec, sweep):
    rep, _ = sweep
    t0 = time.perf_counter()
    u_mean = mean_curvature_solve(spec, 0.1)
    out = bracket_domains(spec, 0.3, 0.1, u_eps=rep.solutions[0.1], u_mid=rep.solutions[0.2], u_mean=u_mean)
    dt = time.perf_counter() - t0
    failed = [k for k, v in out["checks"].items() if not v["holds"]]
    ok = out["passed"]
    acceptance(8, "domain bracketing (eps0=0.3, eps=0.1)", ok,
               f"checks {sorted(out['checks'])}, failed {failed}, delta_eps0 {out['delta_eps0']:.4f}, "
               f"min(u_mean - u_bar) {out['mean_minus_ubar_min']:.2e}", dt)
    assert ok


def test_criterion_09_viscosity_probe(acceptance, spec, solved):
    u = solved[0]
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    nodes = rng.choice(u.mask.interior_nodes, 50, replace=False)
    rep = viscosity_probe(u, spec, nodes, [1e-3, 1e-2])
    dt = time.perf_counter() - t0
    gaps = ", ".join(f"alpha={a['alpha']:g}: above {a['min_gap_above']:.2e}, below {a['min_gap_below']:.2e}"
                     for a in rep["per_alpha"])
    ok = rep["passed"]
    acceptance(9, "viscosity probes", ok,
               f"50 nodes, violations {len(rep['violations'])}, tol {rep['tol_probe']:.2e} "
               f"(C_trunc {rep['c_trunc']:.3f}); {gaps}", dt)
    assert ok


def test_criterion_10_uniqueness_and_boundary_gradient(acceptance, spec, solved):
    u = solved[0]
    t0 = time.perf_counter()
    dist, stats, amp = uniqueness_probe(u, spec)
    bg = boundary_gradient_check(u, spec, SIGMA, math.inf, 0.3)
    dt = time.perf_counter() - t0
    ok = dist < 1e-7 and bg["passed"]
    acceptance(10, "restart uniqueness and boundary gradient", ok,
               f"bump {amp:g} reconverged in {stats.iterations} steps to distance {dist:.1e}; "
               f"max w on boundary rows {bg['max_w']:.3f} < {bg['bound']:.3f}", dt)
    assert ok


def _config(tmp_path, name, changes=None):
    cp = configparser.ConfigParser(interpolation=None)
    cp.read(ROOT / "configs" / "example.ini")
    for sec, kv in (changes or {}).items():
        for k, v in kv.items():
            cp[sec][k] = v
    path = tmp_path / name
    with open(path, "w") as fh:
        cp.write(fh)
    return str(path)


def test_criterion_11_determinism_and_exit_codes(acceptance, tmp_path, monkeypatch):
    t0 = time.perf_counter()
    cfg = str(ROOT / "configs" / "example.ini")
    reports = []
    for run in ("first", "second"):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / run))
        assert cli.main(["sweep", "--config", cfg]) == 0
        reports.append((tmp_path / run / "sweep_report.json").read_bytes())
    identical = reports[0] == reports[1]
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "codes"))
    codes = {
        "solve": (cli.main(["solve", "--config", cfg, "--eps", "0.3"]), 0),
        "verify": (cli.main(["verify", "--config", cfg]), 0),
        "bad psi": (cli.main(["solve", "--config", _config(tmp_path, "p.ini", {"problem": {"psi": "u +"}}),
                              "--eps", "0.3"]), 1),
        "empty domain": (cli.main(["solve", "--config", cfg, "--eps", "0.6"]), 1),
        "bad schedule": (cli.main(["sweep", "--config",
                                   _config(tmp_path, "s.ini", {"schedule": {"eps": "0.1, 0.3"}})]), 1),
        "forced failure": (cli.main(["sweep", "--config", _config(
            tmp_path, "f.ini", {"solver": {"newton_max_iter": "1"}})]), 2),
    }
    dt = time.perf_counter() - t0
    wrong = {k: v for k, v in codes.items() if v[0] != v[1]}
    ok = identical and not wrong
    acceptance(11, "determinism and exit codes", ok,
               f"sweep_report.json byte-identical: {identical}; exit codes "
               f"{ {k: v[0] for k, v in codes.items()} }", dt)
    assert ok
