"""Command-line front end: ``solve``, ``sweep`` and ``verify``.

Exit codes: 0 success, 1 configuration error, 2 solver or verification
failure. Reports are deterministic; wall-clock data lives only in
``metadata.json``.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import json
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, exprparse, meshdom, nlsolve, plateau
from .errors import ConfigError, DomainError, ExprError, WeingartenError

OUTPUT_ENV = "WEINGARTEN_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2

_SOLVER_KEYS = {
    "residual_tol": float,
    "margin_min": float,
    "newton_max_iter": int,
    "damping_floor": float,
    "linear_tol": float,
    "linear_max_iter": int,
    "t_step": float,
    "t_step_min": float,
    "max_continuation_steps": int,
    "t_grow": float,
    "easy_iters": int,
    "continuation_tol": float,
    "subsolution_tol": float,
}


@dataclass
class RunConfig:
    spec: nlsolve.ProblemSpec
    psi_text: str
    ubar_text: str
    schedule: list
    reference_eps0: float | None
    sigma: float
    r0: float
    output_dir: Path
    verify_eps: float | None = None
    probe_nodes: int = 50
    probe_alphas: list = field(default_factory=lambda: [1e-3, 1e-2])
    seed: int = 0
    bracket_eps0: float | None = None
    bracket_eps: float | None = None


def _floats(text) -> list:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, list):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


def _read_sections(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
            raise ConfigError(f"{path}: top level must map section names to objects")
        return data
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(cp[s]) for s in cp.sections()}


def load_config(path) -> RunConfig:
    """Read an INI (``key = value`` under ``[section]``) or JSON run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    sec = _read_sections(path)
    known = {"problem", "schedule", "solver", "compat", "verify", "output"}
    extra = set(sec) - known
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    prob = sec.get("problem")
    if prob is None:
        raise ConfigError("missing [problem] section")
    try:
        n = int(prob["n"])
        k = int(prob["k"])
        psi_text = str(prob["psi"])
        ubar_text = str(prob["ubar"])
        h = float(prob["h"])
        lower = _floats(prob["lower"])
        upper = _floats(prob["upper"])
    except KeyError as exc:
        raise ConfigError(f"[problem] missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[problem] bad value: {exc}") from None
    if not 1 <= n <= 3:
        raise ConfigError(f"n={n} not supported (1..3)")
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} must lie in [1, n]")
    if not h > 0:
        raise ConfigError("h must be positive")
    if len(lower) not in (1, n) or len(upper) not in (1, n):
        raise ConfigError("lower/upper must have 1 or n entries")
    try:
        psi = exprparse.parse(psi_text, n)
    except ExprError as exc:
        raise ConfigError(f"psi: {exc}") from None
    try:
        ubar = exprparse.parse(ubar_text, n)
    except ExprError as exc:
        raise ConfigError(f"ubar: {exc}") from None

    comp = sec.get("compat", {})
    sigma = float(comp.get("sigma", 0.0))
    r0 = float(comp.get("r0", "inf"))
    solver = {}
    for key, val in sec.get("solver", {}).items():
        if key not in _SOLVER_KEYS:
            raise ConfigError(f"[solver] unknown key {key!r}")
        try:
            solver[key] = _SOLVER_KEYS[key](val)
        except ValueError:
            raise ConfigError(f"[solver] bad value for {key!r}: {val!r}") from None
    for key in ("enclosing_radius",):
        if key in comp:
            solver[key] = float(comp[key])
    if "enclosing_center" in comp:
        solver["enclosing_center"] = tuple(_floats(comp["enclosing_center"]))
    lo = tuple(np.broadcast_to(lower, (n,)).tolist())
    hi = tuple(np.broadcast_to(upper, (n,)).tolist())
    if any(a >= b for a, b in zip(lo, hi)):
        raise ConfigError("lower must be below upper in every coordinate")
    try:
        spec = nlsolve.ProblemSpec(n, k, psi, ubar, lo, hi, h, **solver)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    sched = sec.get("schedule", {})
    schedule = _floats(sched.get("eps", ""))
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError("schedule must be strictly decreasing")
    if any(e <= 0 for e in schedule):
        raise ConfigError("schedule entries must be positive")
    ref = sched.get("reference_eps0")
    ref = float(ref) if ref is not None else (schedule[0] if schedule else None)
    ver = sec.get("verify", {})
    out = sec.get("output", {})
    outdir = Path(os.environ.get(OUTPUT_ENV) or out.get("directory", "run"))
    try:
        return RunConfig(
            spec=spec, psi_text=psi_text, ubar_text=ubar_text, schedule=schedule,
            reference_eps0=ref, sigma=sigma, r0=r0, output_dir=outdir,
            verify_eps=float(ver["eps"]) if "eps" in ver else None,
            probe_nodes=int(ver.get("probe_nodes", 50)),
            probe_alphas=_floats(ver.get("probe_alphas", "1e-3, 1e-2")),
            seed=int(ver.get("seed", 0)),
            bracket_eps0=float(sched["bracket_eps0"]) if "bracket_eps0" in sched else None,
            bracket_eps=float(sched["bracket_eps"]) if "bracket_eps" in sched else None,
        )
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from None


# output helpers


def _eps_tag(eps: float) -> str:
    return repr(float(eps))


def _write_json(path: Path, obj) -> None:
    path.write_text(plateau.dumps(obj))


class _JsonLog:
    def __init__(self, path: Path):
        self.fh = open(path, "w")
        self.extra = {}

    def __call__(self, rec: dict):
        self.fh.write(json.dumps({**self.extra, **plateau._clean(rec)}, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def _metadata(outdir: Path, command: str, cfg_path, argv) -> None:
    meta = {
        "command": command,
        "config": str(cfg_path),
        "argv": list(argv),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    (outdir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _summary(spec, problem, u, hist) -> dict:
    ev = nlsolve.evaluate(problem, u.interior_values, nlsolve.PsiRhs(spec.psi))
    return {
        "eps": problem.eps,
        "converged": True,
        "residual": float(np.max(np.abs(ev.residual))),
        "max_kappa": float(np.max(ev.kappa)),
        "min_margin": float(np.min(ev.margin)),
        "min_u_minus_ubar": float(np.min(u.interior_values - problem.ubar)),
        "num_interior": problem.m,
        "continuation_steps": len(hist),
        "newton_iters": int(sum(s.newton_iters for s in hist)),
    }


def _prepare_outdir(cfg: RunConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def _err(msg: str) -> None:
    print(f"weingarten: {msg}", file=sys.stderr)


# commands


def cmd_solve(cfg: RunConfig, eps: float, cfg_path="", argv=()) -> int:
    spec = cfg.spec
    try:
        problem = nlsolve.DirichletProblem(spec, eps)
    except DomainError as exc:
        _err(f"degenerate domain at eps={eps!r}: {exc}")
        return EXIT_CONFIG
    out = _prepare_outdir(cfg)
    _metadata(out, "solve", cfg_path, argv)
    log = _JsonLog(out / "log.jsonl")
    log.extra = {"eps": float(eps)}
    try:
        u, hist = nlsolve.continuity_solve(spec, eps, log, problem=problem)
    except WeingartenError as exc:
        _write_json(out / "summary.json", {"eps": float(eps), "converged": False,
                                           "error": f"{type(exc).__name__}: {exc}"})
        _err(f"solve failed: {type(exc).__name__}: {exc}")
        return EXIT_FAILURE
    finally:
        log.close()
    meshdom.write_csv(u, out / f"solution_{_eps_tag(eps)}.csv")
    _write_json(out / "summary.json", _summary(spec, problem, u, hist))
    return EXIT_OK


def _default_bracket(cfg: RunConfig):
    s = cfg.schedule
    eps0 = cfg.bracket_eps0 if cfg.bracket_eps0 is not None else (s[1] if len(s) > 2 else s[0])
    eps = cfg.bracket_eps if cfg.bracket_eps is not None else s[-1]
    return eps0, eps


def cmd_sweep(cfg: RunConfig, cfg_path="", argv=(), jobs: int = 1) -> int:
    spec = cfg.spec
    if not cfg.schedule:
        _err("sweep needs a non-empty [schedule] eps list")
        return EXIT_CONFIG
    for e in cfg.schedule:
        try:
            meshdom.mask_from_levelset(spec.ubar, spec.grid, e)
        except DomainError as exc:
            _err(f"degenerate domain at eps={e!r}: {exc}")
            return EXIT_CONFIG
    out = _prepare_outdir(cfg)
    _metadata(out, "sweep", cfg_path, argv)
    log = _JsonLog(out / "log.jsonl")

    def logger(rec):
        log(rec)

    try:
        report = plateau.epsilon_sweep(spec, cfg.schedule, cfg.reference_eps0, cfg.sigma, cfg.r0,
                                       jobs=jobs, logger=logger)
    except ValueError as exc:
        log.close()
        _err(str(exc))
        return EXIT_CONFIG
    log.close()
    for e, u in report.solutions.items():
        meshdom.write_csv(u, out / f"solution_{_eps_tag(e)}.csv")
    if report.completed:
        eps0, eps = _default_bracket(cfg)
        try:
            report.bracketing = plateau.bracket_domains(
                spec, eps0, eps, u_eps=report.solutions.get(eps),
                u_mid=report.solutions.get(0.5 * (eps + eps0)))
        except (ValueError, WeingartenError) as exc:
            report.bracketing = {"error": f"{type(exc).__name__}: {exc}", "passed": False}
    _write_json(out / "sweep_report.json", report)
    if not report.completed:
        _err(f"sweep aborted: {report.error}")
        return EXIT_FAILURE
    if not report.monotone:
        _err("monotonicity across eps violated")
        return EXIT_FAILURE
    return EXIT_OK


def _jacobian_spot_check(spec, problem, u, seed: int, count: int = 3) -> dict:
    """Forward difference of the residual along smooth directions vanishing on the boundary.

    The error is measured in the relative 2-norm; the sup norm at this step
    is dominated by rounding in the boundary rows.
    """
    rng = np.random.default_rng(seed)
    rhs = nlsolve.PsiRhs(spec.psi)
    base = u.interior_values
    ev = nlsolve.evaluate(problem, base, rhs)
    J = nlsolve.jacobian_matrix(problem, ev)
    bump = problem.ubar - problem.eps
    worst = 0.0
    tau = 1e-6
    for _ in range(count):
        a = rng.normal(size=spec.n)
        direction = bump * np.cos(problem.points @ a)
        r1 = nlsolve.evaluate(problem, base + tau * direction, rhs, with_coeffs=False).residual
        fd = (r1 - ev.residual) / tau
        jh = J @ direction
        worst = max(worst, float(np.linalg.norm(fd - jh) / np.linalg.norm(jh)))
    return {"tau": tau, "directions": count, "max_relative_error": worst, "passed": bool(worst < 1e-5)}


def cmd_verify(cfg: RunConfig, cfg_path="", argv=(), strict_compat: bool | None = None,
               jobs: int = 1) -> int:
    spec = cfg.spec
    eps = cfg.verify_eps
    if eps is None:
        if not cfg.schedule:
            _err("verify needs [verify] eps or a schedule")
            return EXIT_CONFIG
        eps = cfg.schedule[len(cfg.schedule) // 2 - 1] if len(cfg.schedule) > 1 else cfg.schedule[0]
    try:
        problem = nlsolve.DirichletProblem(spec, eps)
    except DomainError as exc:
        _err(f"degenerate domain at eps={eps!r}: {exc}")
        return EXIT_CONFIG
    out = _prepare_outdir(cfg)
    _metadata(out, "verify", cfg_path, argv)
    fatal_compat = strict_compat if strict_compat is not None else spec.k != spec.n
    report = {"eps": eps, "compat_fatal": fatal_compat}
    comp = plateau.check_compatibility(spec, eps, cfg.sigma, cfg.r0, problem=problem)
    report["compatibility"] = comp.to_dict()
    checks = {"compatibility": comp.passed or not fatal_compat}
    if not comp.passed:
        _err(f"compatibility {'failure' if fatal_compat else 'warning'}: {', '.join(comp.failures())}")
    log = _JsonLog(out / "log.jsonl")
    log.extra = {"eps": float(eps)}
    try:
        u, hist = nlsolve.continuity_solve(spec, eps, log, problem=problem)
    except WeingartenError as exc:
        report["solve"] = {"converged": False, "error": f"{type(exc).__name__}: {exc}"}
        report["checks"] = {**checks, "solve": False}
        report["passed"] = False
        _write_json(out / "verify_report.json", report)
        _err(f"solve failed: {type(exc).__name__}: {exc}")
        return EXIT_FAILURE
    finally:
        log.close()
    meshdom.write_csv(u, out / f"solution_{_eps_tag(eps)}.csv")
    summary = _summary(spec, problem, u, hist)
    report["solve"] = summary
    checks["solve"] = summary["residual"] < spec.residual_tol
    rng = np.random.default_rng(cfg.seed)
    nodes = u.mask.interior_nodes
    sample = np.sort(rng.choice(nodes, size=min(cfg.probe_nodes, nodes.size), replace=False))
    probe = plateau.viscosity_probe(u, spec, sample, cfg.probe_alphas)
    report["viscosity_probe"] = probe
    checks["viscosity_probe"] = probe["passed"]
    if spec.enclosing_radius is not None:
        center = np.asarray(spec.enclosing_center if spec.enclosing_center is not None else np.zeros(spec.n))
        cap = _hemisphere(center, spec.enclosing_radius)
        touch = plateau.touching_test(u, cap, spec)
        report["touching_test"] = touch
        checks["touching_test"] = touch["passed"]
    report["sandwich"] = plateau.sandwich_check(u, spec)
    checks["sandwich"] = report["sandwich"]["passed"]
    sign = float(np.max(nlsolve.zeroth_order_margin(u, spec)))
    report["sign_condition"] = {"max_Gu_minus_psi_u": sign, "passed": sign < 0}
    checks["sign_condition"] = sign < 0
    post = plateau.psi_above_sigma_check(u, spec, cfg.sigma)
    report["psi_above_sigma_on_solution"] = post.to_dict()
    checks["psi_above_sigma_on_solution"] = post.passed or not fatal_compat
    if cfg.sigma > 0:
        bg = plateau.boundary_gradient_check(u, spec, cfg.sigma, cfg.r0, eps)
        report["boundary_gradient"] = bg
        checks["boundary_gradient"] = bg["passed"] or not fatal_compat
    jac = _jacobian_spot_check(spec, problem, u, cfg.seed)
    report["jacobian_fd"] = jac
    checks["jacobian_fd"] = jac["passed"]
    report["checks"] = checks
    report["passed"] = all(checks.values())
    _write_json(out / "verify_report.json", report)
    if not report["passed"]:
        _err("verification failed: " + ", ".join(k for k, v in checks.items() if not v))
        return EXIT_FAILURE
    return EXIT_OK


def _hemisphere(center, radius):
    def f(p):
        r2 = np.sum((p - center) ** 2, axis=-1)
        with np.errstate(invalid="ignore"):
            return np.sqrt(radius**2 - r2)

    return f


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weingarten", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve one approximating Dirichlet problem")
    s.add_argument("--config", required=True)
    s.add_argument("--eps", required=True, type=float)
    w = sub.add_parser("sweep", help="solve along the eps schedule")
    w.add_argument("--config", required=True)
    w.add_argument("--jobs", type=int, default=1)
    v = sub.add_parser("verify", help="compatibility, solve and property checks")
    v.add_argument("--config", required=True)
    v.add_argument("--strict-compat", action="store_true", default=None,
                   help="treat compatibility warnings as failures (default: only when k < n)")
    v.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    if getattr(args, "jobs", 1) < 1:
        _err("--jobs must be at least 1")
        return EXIT_CONFIG
    try:
        if args.command == "solve":
            if not args.eps > 0:
                _err("eps must be positive")
                return EXIT_CONFIG
            return cmd_solve(cfg, args.eps, args.config, argv)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.config, argv, jobs=args.jobs)
        return cmd_verify(cfg, args.config, argv, strict_compat=args.strict_compat, jobs=args.jobs)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except WeingartenError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_FAILURE
