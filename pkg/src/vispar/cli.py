"""Command line driver: ``vispar <solve|cascade|verify|regularity> --config <path>``.

Exit codes: 0 success, 1 an enabled assertion failed, 2 a solve aborted,
3 the configuration (or a config-driven setup step) is invalid.
"""

import argparse
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, RunConfig, load_config, render_config
from .core import DomainError, Grid, SpaceTimeField, atomic_write, format_grid_dump, read_grid_dump
from .estimates import (
    AssertionOutcome,
    ExactSolution,
    assert_gradient_max,
    assert_max_principle,
    calibrate_barrier,
    verify_barrier_domination,
)
from .operators import DegeneracyMode, DegeneracyProfile, EllipticOperator
from .regularity import (
    DichotomyParams,
    FlatField,
    dichotomy_csv,
    dichotomy_iterate,
    gradient_series,
    measure_regularity,
    measure_uniform_holder,
    oscillation_csv,
    rescale_to_unit_gradient,
)
from .scheme import GradientMode, NumericalBlowup, Stencil
from .solver import DirichletProblem, SolveAborted, SolveReport, gradient_field_series, solve, solve_cascade

__all__ = ["main", "run", "RunReport", "build_problem", "EXIT_OK", "EXIT_ASSERTION", "EXIT_ABORT", "EXIT_CONFIG"]

EXIT_OK, EXIT_ASSERTION, EXIT_ABORT, EXIT_CONFIG = 0, 1, 2, 3
COMMANDS = ("solve", "cascade", "verify", "regularity")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str, code: int):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.code = code


# -- problem construction ------------------------------------------------------------------------

def build_operator(cfg: RunConfig) -> EllipticOperator:
    eq = cfg.equation
    if eq.operator == "linear":
        return EllipticOperator.linear(np.asarray(eq.matrices[0]))
    if eq.operator == "bellman":
        return EllipticOperator.smooth_bellman([np.asarray(m) for m in eq.matrices], eq.theta)
    return EllipticOperator.pucci(eq.lam, eq.Lam, cfg.domain.dim, +1 if eq.operator == "pucci_plus" else -1)


def build_grid(cfg: RunConfig) -> Grid:
    d = cfg.domain
    if d.shape == "ball":
        center = d.center or (0.0,) * d.dim
        return Grid.ball(center, d.radius, d.n, d.t0, d.t1, d.steps)
    return Grid.box(d.lower, d.upper, d.n, d.t0, d.t1, d.steps)


def smooth_data(amplitude: float, dim: int):
    """A fixed smooth, non-polynomial boundary datum."""
    if dim == 1:
        return lambda x, t: amplitude * (0.5 * np.sin(1.3 * x + 0.4) + 0.25 * x * x)
    return lambda x, y, t: amplitude * (0.5 * np.sin(1.3 * x + 0.4) * np.cos(0.9 * y)
                                        + 0.25 * (x * x - y * y) + 0.2 * x * y)


def random_fourier(amplitude: float, modes: int, dim: int, seed: int):
    """Sum of ``modes`` random low-frequency travelling waves, normalised to sup <= amplitude."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(-2.0, 2.0, (modes, dim))
    w = rng.uniform(-1.0, 1.0, modes)
    ph = rng.uniform(0.0, 2 * np.pi, modes)
    c = rng.normal(size=modes)
    c *= amplitude / np.abs(c).sum()

    def phi(*args):
        xs, t = args[:-1], args[-1]
        out = 0.0
        for j in range(modes):
            out = out + c[j] * np.sin(sum(k[j, i] * xs[i] for i in range(dim)) + w[j] * t + ph[j])
        return out

    return phi


def build_boundary(cfg: RunConfig, op: EllipticOperator, grid: Grid, seed: int):
    """(boundary datum, closed-form solution or None)."""
    bd, dim = cfg.boundary, cfg.domain.dim
    if bd.phi == "linear":
        sol = ExactSolution.linear(bd.a, bd.b)
        return sol.boundary(), sol
    if bd.phi == "caloric":
        sol = ExactSolution.caloric(np.asarray(bd.quad[0]), bd.a or None, bd.b, op)
        return sol.boundary(), sol
    if bd.phi == "degenerate_profile":
        sol = ExactSolution.degenerate_profile(cfg.equation.gamma, bd.c, bd.b, bd.shift, dim, bd.axis)
        return sol.boundary(), sol
    if bd.phi == "smooth":
        return smooth_data(bd.amplitude, dim), None
    if bd.phi == "bowl":
        return (lambda *a: bd.c * sum(x * x for x in a[:-1]) + bd.b + 0.0 * a[-1]), None
    if bd.phi == "random_fourier":
        return random_fourier(bd.amplitude, bd.modes, dim, seed), None
    fld = read_grid_dump(bd.file, grid.lower, grid.t0)
    if fld.grid.counts != grid.counts or fld.grid.steps != grid.steps:
        raise DomainError("grid file does not match the configured domain")
    return SpaceTimeField(grid, fld.values), None


def build_profile(cfg: RunConfig) -> DegeneracyProfile:
    eq = cfg.equation
    return DegeneracyProfile(eq.gamma, eq.epsilon, DegeneracyMode(eq.mode))


def build_problem(cfg: RunConfig, seed: int = 0) -> tuple[DirichletProblem, ExactSolution | None]:
    grid = build_grid(cfg)
    op = build_operator(cfg)
    phi, exact = build_boundary(cfg, op, grid, seed)
    src = None
    if cfg.equation.source:
        value = cfg.equation.source
        src = lambda *a: value + 0.0 * a[0]  # noqa: E731
    stencil = Stencil.centered() if cfg.scheme.stencil == "centered" else Stencil.wide(grid.dim)
    mode = None if cfg.scheme.gradient == "default" else GradientMode(cfg.scheme.gradient)
    problem = DirichletProblem(grid, op, build_profile(cfg), phi, src, stencil, mode, cfg.scheme.cfl_safety,
                               engine=cfg.scheme.engine)
    return problem, exact


# -- report -------------------------------------------------------------------------------------

@dataclass
class RunReport:
    command: str
    config_text: str
    seed: int
    threads: int
    solve: dict | None = None
    cascade: dict | None = None
    assertions: list = field(default_factory=list)
    regularity: dict | None = None
    messages: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    exit_code: int = EXIT_OK
    wall_time: float = 0.0

    @property
    def status(self) -> str:
        return {EXIT_OK: "ok", EXIT_ASSERTION: "assertion-failure", EXIT_ABORT: "solve-aborted",
                EXIT_CONFIG: "config-error"}[self.exit_code]

    def finish(self, aborted: bool = False, config_error: bool = False) -> None:
        if config_error:
            self.exit_code = EXIT_CONFIG
        elif aborted:
            self.exit_code = EXIT_ABORT
        elif any(not a["passed"] for a in self.assertions):
            self.exit_code = EXIT_ASSERTION
        else:
            self.exit_code = EXIT_OK

    def to_dict(self) -> dict:
        return {"command": self.command, "status": self.status, "exit_code": self.exit_code, "seed": self.seed,
                "threads": self.threads, "config": self.config_text, "solve": self.solve,
                "cascade": self.cascade, "assertions": self.assertions, "regularity": self.regularity,
                "messages": self.messages, "artifacts": self.artifacts, "wall_time": self.wall_time}

    def summary(self) -> str:
        lines = [f"vispar {self.command}: {self.status} (exit {self.exit_code})",
                 f"seed={self.seed} threads={self.threads} wall_time={self.wall_time:.3f}s"]
        if self.solve:
            s = self.solve
            lines.append(f"solve: sup|u|={s['sup_norm']:.6g} sup_boundary={s['sup_boundary']:.6g} "
                         f"sup|Du|={s['sup_gradient']:.6g} steps={s['controller'].get('accepted_steps')}")
        if self.cascade:
            lines.append(f"cascade: epsilons={self.cascade['epsilons']} errors={self.cascade['errors']}")
        for a in self.assertions:
            mark = "PASS" if a["passed"] else "FAIL"
            lines.append(f"[{mark}] {a['name']}: measured={a['measured']:.6g} bound={a['bound']:.6g} "
                         f"tol={a['tol']:.3g}")
        if self.regularity:
            for key in ("alpha_space", "C_space", "alpha_time_u", "predicted_time_u", "spread"):
                if key in self.regularity and self.regularity[key] is not None:
                    lines.append(f"regularity {key}={self.regularity[key]:.6g}")
        lines += [f"note: {m}" for m in self.messages]
        lines += ["", "# configuration (all defaults included)", self.config_text]
        return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- stages --------------------------------------------------------------------------------------

def _solve_stage(problem: DirichletProblem, label: str = "solve") -> SolveReport:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return solve(problem)
    except (SolveAborted, NumericalBlowup) as exc:
        raise StageError(label, f"{type(exc).__name__}: {exc}", EXIT_ABORT) from None
    except (ValueError, ArithmeticError) as exc:
        raise StageError(label, f"{type(exc).__name__}: {exc}", EXIT_CONFIG) from None


def sup_gradient_by_level(rep: SolveReport) -> list[float]:
    grid = rep.problem.grid
    out = []
    for k in range(grid.steps + 1):
        g = gradient_field_series(rep.solution.values[k:k + 1], grid)
        out.append(float(g.max()) if g.size else 0.0)
    return out


def _solve_digest(rep: SolveReport) -> dict:
    d = rep.digest()
    d["problem"] = rep.problem.describe()
    d["sup_gradient_by_level"] = sup_gradient_by_level(rep)
    return d


def _exact_outcome(rep: SolveReport, exact: ExactSolution, tol: float) -> AssertionOutcome:
    grid = rep.problem.grid
    coords = grid.coords()
    worst = 0.0
    for k, t in enumerate(grid.times()):
        err = np.abs(rep.solution.values[k] - exact.value(coords, t))[grid.active]
        worst = max(worst, float(err.max()))
    return AssertionOutcome("exact_error", worst <= tol, worst, 0.0, tol, {"family": exact.family.value})


def _verify_assertions(cfg: RunConfig, rep: SolveReport, exact) -> list[AssertionOutcome]:
    ck = cfg.checks
    out = []
    if cfg.check_enabled("max_principle"):
        out.append(assert_max_principle(rep, ck.tol_max_principle))
    if cfg.check_enabled("gradient_max"):
        out.append(assert_gradient_max(rep, ck.gradient_C))
    if cfg.check_enabled("exact") and exact is not None:
        out.append(_exact_outcome(rep, exact, ck.tol_exact))
    if cfg.check_enabled("compatibility"):
        c = rep.compatibility
        out.append(AssertionOutcome("compatibility", c.residual <= ck.tol_compatibility, c.residual, 0.0,
                                    ck.tol_compatibility, {"corner_nodes": c.corner_nodes}))
    if cfg.check_enabled("barrier"):
        grid = rep.problem.grid
        x0 = ck.barrier_x0 or tuple(c + (cfg.domain.radius if i == 0 else 0.0)
                                    for i, c in enumerate(cfg.domain.center or (0.0,) * grid.dim))
        try:
            spec = calibrate_barrier(rep, x0, tol=ck.tol_barrier)
            out.append(verify_barrier_domination(rep, spec, ck.tol_barrier))
        except DomainError as exc:
            raise StageError("barrier", str(exc), EXIT_CONFIG) from None
    return out


def _regularity_of(cfg: RunConfig, rep: SolveReport, label: str = ""):
    rg = cfg.regularity
    center = rg.center or None
    return measure_regularity(rep.solution, cfg.equation.gamma, center, rg.r0, clip=rg.clip, label=label)


def _dichotomy(cfg: RunConfig, rep: SolveReport):
    rg, eq = cfg.regularity, cfg.equation
    params = DichotomyParams(rg.l, rg.mu, rg.delta, rg.tau, rg.eps0, rg.eps1 or None, rg.eta)
    grid = rep.problem.grid
    du = gradient_series(rep.solution)
    center = rg.center or None
    unit_du, scaling = rescale_to_unit_gradient(du, grid, eq.gamma, rep.problem.profile.epsilon, center)
    trace = dichotomy_iterate(unit_du, grid, params, eq.gamma, scaling.epsilon, center,
                              angles=rg.angles, time_unit=scaling.time_unit)
    return trace, scaling


def _write(out_dir: str, name: str, text: str, report: RunReport) -> None:
    path = os.path.join(out_dir, name)
    atomic_write(path, text)
    report.artifacts.append(name)


def run(command: str, cfg: RunConfig, out_dir: str | None = None, threads: int = 1, seed: int = 0) -> RunReport:
    """Execute one subcommand and write its artifacts; never raises for run-time failures."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    start = time.perf_counter()
    out_dir = out_dir or cfg.output.directory
    report = RunReport(command, render_config(cfg), seed, threads)
    fmt = set(cfg.output.formats)
    aborted = config_error = False
    pending: dict[str, str] = {}
    try:
        try:
            problem, exact = build_problem(cfg, seed)
        except (ValueError, OSError, ArithmeticError) as exc:
            raise StageError("setup", f"{type(exc).__name__}: {exc}", EXIT_CONFIG) from None
        if command == "cascade":
            _run_cascade(cfg, problem, report, pending, threads)
        else:
            rep = _solve_stage(problem)
            report.solve = _solve_digest(rep)
            if "dump" in fmt:
                pending["solution.grid"] = format_grid_dump(rep.solution)
            if command == "verify":
                report.assertions += [a.to_dict() for a in _verify_assertions(cfg, rep, exact)]
            elif command == "regularity":
                _run_regularity(cfg, rep, report, pending)
    except StageError as exc:
        report.messages.append(str(exc))
        aborted = exc.code == EXIT_ABORT
        config_error = exc.code == EXIT_CONFIG
    report.wall_time = time.perf_counter() - start
    report.finish(aborted, config_error)
    os.makedirs(out_dir, exist_ok=True)
    if "csv" not in fmt:
        pending = {k: v for k, v in pending.items() if not k.endswith(".csv")}
    for name, text in pending.items():
        _write(out_dir, name, text, report)
    _write(out_dir, "config.ini", report.config_text, report)
    if "json" in fmt:
        report.artifacts.append("report.json")
        atomic_write(os.path.join(out_dir, "report.json"), json.dumps(_jsonable(report.to_dict()), indent=2))
    report.artifacts.append("summary.txt")
    atomic_write(os.path.join(out_dir, "summary.txt"), report.summary() + "\n")
    return report


def _run_regularity(cfg: RunConfig, rep: SolveReport, report: RunReport, pending: dict) -> None:
    try:
        reg = _regularity_of(cfg, rep)
    except FlatField as exc:
        report.messages.append(f"regularity: flat field, no fit ({exc})")
        reg = None
    except DomainError as exc:
        raise StageError("regularity", str(exc), EXIT_CONFIG) from None
    digest = {"flat": True} if reg is None else reg.digest()
    tu = None if reg is None else reg.alpha_time_u
    if reg is not None:
        pending["regularity.csv"] = oscillation_csv([reg])
    if cfg.check_enabled("time_modulus") and tu is not None and tu.predicted is not None:
        report.assertions.append(AssertionOutcome(
            "time_modulus", tu.exponent >= tu.predicted - 0.1, tu.exponent, tu.predicted - 0.1, 0.1,
            {"predicted": tu.predicted}).to_dict())
    if cfg.check_enabled("dichotomy"):
        try:
            trace, scaling = _dichotomy(cfg, rep)
        except (DomainError, ValueError, FlatField) as exc:
            raise StageError("dichotomy", str(exc), EXIT_CONFIG) from None
        digest["dichotomy"] = trace.digest()
        digest["dichotomy_scale"] = scaling.M
        pending["dichotomy.csv"] = dichotomy_csv(trace)
        report.assertions.append(AssertionOutcome(
            "dichotomy_consistency", trace.consistent, float(trace.checked_levels()), 0.0, trace.tol,
            {"m": trace.m, "m1": trace.m1, "m2": trace.m2, "stop": trace.stop_reason}).to_dict())
    report.regularity = digest


def _run_cascade(cfg: RunConfig, problem: DirichletProblem, report: RunReport, pending: dict,
                 threads: int) -> None:
    eq = cfg.equation
    if not eq.epsilons:
        raise StageError("cascade", "set [equation] epsilons to run a cascade", EXIT_CONFIG)
    if eq.mode == "singular":
        problem = problem.with_profile(DegeneracyProfile(eq.gamma, eq.epsilons[0]))
    try:
        res = solve_cascade(problem, eq.epsilons, eq.thetas or None, workers=threads)
    except ValueError as exc:
        raise StageError("cascade", str(exc), EXIT_CONFIG) from None
    report.cascade = res.digest()
    failed = [e for e in res.errors if e]
    if failed:
        raise StageError("cascade", "; ".join(failed), EXIT_ABORT)
    if "dump" in set(cfg.output.formats):
        for e, r in zip(res.epsilons, res.reports):
            pending[f"solution_eps{e:g}.grid"] = format_grid_dump(r.solution)
    rg = cfg.regularity
    try:
        if len(res.epsilons) == 1:
            reps = [_regularity_of(cfg, res.reports[0], f"epsilon={res.epsilons[0]}")]
            report.regularity = reps[0].digest()
        else:
            verdict = measure_uniform_holder(res, rg.center or None, rg.r0, clip=rg.clip)
            reps = verdict.reports
            report.regularity = verdict.digest()
            if cfg.check_enabled("uniformity"):
                lim = cfg.checks.spread_limit
                report.assertions.append(AssertionOutcome(
                    "uniform_holder_spread", verdict.passed(lim), verdict.spread, lim, 0.0,
                    {"alpha_spread": verdict.alpha_spread, "C_spread": verdict.C_spread}).to_dict())
                d = res.consecutive_distances()
                report.assertions.append(AssertionOutcome(
                    "cascade_distances_decreasing", all(b < a for a, b in zip(d, d[1:])),
                    d[-1], d[0], 0.0, {"distances": d}).to_dict())
    except FlatField as exc:
        report.messages.append(f"regularity: flat field, no fit ({exc})")
        report.regularity = {"flat": True}
        return
    except DomainError as exc:
        raise StageError("regularity", str(exc), EXIT_CONFIG) from None
    pending["regularity.csv"] = oscillation_csv(reps)


# -- entry point ----------------------------------------------------------------------------------

def resolve_threads(arg: int | None, env=None) -> int:
    env = os.environ if env is None else env
    if arg is not None:
        value = arg
    elif env.get("VISPAR_THREADS"):
        try:
            value = int(env["VISPAR_THREADS"])
        except ValueError:
            raise ConfigError([f"VISPAR_THREADS must be an integer, got {env['VISPAR_THREADS']!r}"]) from None
    else:
        value = 1
    if value < 1:
        raise ConfigError([f"thread count must be positive, got {value}"])
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vispar", description="Regularized fully nonlinear parabolic solver.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI-like run configuration")
    p.add_argument("--out", default=None, help="output directory (default: [output] directory)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (fallback: VISPAR_THREADS)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomised boundary data")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        threads = resolve_threads(args.threads)
        cfg = load_config(args.config)
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    report = run(args.command, cfg, args.out, threads, args.seed)
    print(report.summary())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
