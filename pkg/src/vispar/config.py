"""Run configuration: flat INI-like sections with typed values.

Every key has a declared kind and default. Parsing reports every problem at
once; rendering writes every key, defaults included, so a rendered config is
a complete echo and ``parse_config(render_config(c)) == c``.
"""

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "render_config",
    "load_config",
    "PHI_CATALOG",
    "OPERATOR_CATALOG",
]

PHI_CATALOG = ("linear", "caloric", "degenerate_profile", "smooth", "bowl", "random_fourier", "grid_file")
OPERATOR_CATALOG = ("linear", "pucci_plus", "pucci_minus", "bellman")
CHECKS = ("max_principle", "gradient_max", "barrier", "exact", "compatibility", "uniformity", "dichotomy",
          "time_modulus")


class ConfigError(ValueError):
    """Carries every validation message found in one pass."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _kind(kind: str, default, **extra):
    return field(default=default, metadata={"kind": kind, **extra})


# -- sections ----------------------------------------------------------------------------------

@dataclass(frozen=True)
class EquationSection:
    gamma: float = _kind("float", 0.0)
    epsilon: float = _kind("float", 0.0)
    epsilons: tuple = _kind("floats", ())
    thetas: tuple = _kind("floats", ())
    mode: str = _kind("choice", "regularized", choices=("regularized", "singular"))
    operator: str = _kind("choice", "linear", choices=OPERATOR_CATALOG)
    matrices: tuple = _kind("matrices", ())
    lam: float = _kind("float", 1.0)
    Lam: float = _kind("float", 1.0)
    theta: float = _kind("float", 0.1)
    source: float = _kind("float", 0.0)


@dataclass(frozen=True)
class DomainSection:
    dim: int = _kind("int", 1)
    shape: str = _kind("choice", "box", choices=("box", "ball"))
    lower: tuple = _kind("floats", (-1.0,))
    upper: tuple = _kind("floats", (1.0,))
    center: tuple = _kind("floats", ())
    radius: float = _kind("float", 1.0)
    n: int = _kind("int", 65)
    t0: float = _kind("float", -1.0)
    t1: float = _kind("float", 0.0)
    steps: int = _kind("int", 16)


@dataclass(frozen=True)
class BoundarySection:
    phi: str = _kind("choice", "caloric", choices=PHI_CATALOG)
    a: tuple = _kind("floats", ())
    b: float = _kind("float", 0.0)
    quad: tuple = _kind("matrices", ())
    c: float = _kind("float", 1.0)
    shift: float = _kind("float", 0.0)
    axis: int = _kind("int", 0)
    amplitude: float = _kind("float", 1.0)
    modes: int = _kind("int", 4)
    file: str = _kind("str", "")


@dataclass(frozen=True)
class SchemeSection:
    stencil: str = _kind("choice", "centered", choices=("centered", "wide"))
    gradient: str = _kind("choice", "default", choices=("default", "centered", "forward", "upwind"))
    cfl_safety: float = _kind("float", 0.9)
    engine: str = _kind("choice", "compiled", choices=("compiled", "reference"))


@dataclass(frozen=True)
class ChecksSection:
    enabled: tuple = _kind("names", ("max_principle",), choices=CHECKS)
    tol_max_principle: float = _kind("float", 1e-12)
    tol_exact: float = _kind("float", 1e-10)
    tol_barrier: float = _kind("float", 1e-8)
    tol_compatibility: float = _kind("float", 1e-6)
    gradient_C: float = _kind("float", 1.0)
    barrier_x0: tuple = _kind("floats", ())
    spread_limit: float = _kind("float", 0.2)


@dataclass(frozen=True)
class RegularitySection:
    center: tuple = _kind("floats", ())
    r0: float = _kind("float", 0.5)
    clip: bool = _kind("bool", False)
    l: float = _kind("float", 0.75)
    mu: float = _kind("float", 0.01)
    delta: float = _kind("float", 0.1)
    tau: float = _kind("float", 0.25)
    eps0: float = _kind("float", 0.1)
    eps1: float = _kind("float", 0.0)  # 0 means 0.01 |Q_1|
    eta: float = _kind("float", 0.05)
    angles: int = _kind("int", 16)


@dataclass(frozen=True)
class OutputSection:
    directory: str = _kind("str", "vispar-out")
    formats: tuple = _kind("names", ("dump", "csv", "json"), choices=("dump", "csv", "json"))


@dataclass(frozen=True)
class RunConfig:
    equation: EquationSection = field(default_factory=EquationSection)
    domain: DomainSection = field(default_factory=DomainSection)
    boundary: BoundarySection = field(default_factory=BoundarySection)
    scheme: SchemeSection = field(default_factory=SchemeSection)
    checks: ChecksSection = field(default_factory=ChecksSection)
    regularity: RegularitySection = field(default_factory=RegularitySection)
    output: OutputSection = field(default_factory=OutputSection)

    def check_enabled(self, name: str) -> bool:
        return name in self.checks.enabled

    def with_values(self, section: str, **values) -> "RunConfig":
        return replace(self, **{section: replace(getattr(self, section), **values)})


SECTIONS = {f.name: f.default_factory for f in fields(RunConfig)}


# -- value codecs ----------------------------------------------------------------------------------

def _parse_float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _parse_matrices(text: str) -> tuple:
    """Matrices separated by '|', rows by ';', entries by spaces or commas."""
    out = []
    for block in text.split("|"):
        if not block.strip():
            continue
        rows = [tuple(_parse_float(v) for v in row.replace(",", " ").split()) for row in block.split(";")]
        if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
            raise ValueError("each matrix must be square")
        out.append(tuple(rows))
    return tuple(out)


def _decode(kind: str, text: str, meta):
    text = text.strip()
    if kind == "float":
        return _parse_float(text)
    if kind == "int":
        return int(text)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError("expected true or false")
    if kind == "str":
        return text
    if kind == "choice":
        if text not in meta["choices"]:
            raise ValueError(f"unknown name {text!r}, expected one of {', '.join(meta['choices'])}")
        return text
    if kind == "floats":
        return tuple(_parse_float(v) for v in text.replace(",", " ").split())
    if kind == "names":
        names = tuple(v for v in text.replace(",", " ").split())
        bad = [v for v in names if v not in meta["choices"]]
        if bad:
            raise ValueError(f"unknown name(s) {', '.join(bad)}, expected from {', '.join(meta['choices'])}")
        return names
    if kind == "matrices":
        return _parse_matrices(text)
    raise AssertionError(kind)


def _encode(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind in ("int", "str", "choice"):
        return str(value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "floats":
        return " ".join(repr(float(v)) for v in value)
    if kind == "names":
        return " ".join(value)
    if kind == "matrices":
        return " | ".join("; ".join(" ".join(repr(float(v)) for v in row) for row in m) for m in value)
    raise AssertionError(kind)


# -- parse / render --------------------------------------------------------------------------------

def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem."""
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\x00none")
    parser.optionxform = str  # keys are case sensitive (lam vs Lam)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    errors: list[str] = []
    built = {}
    for name in parser.sections():
        if name not in SECTIONS:
            errors.append(f"[{name}]: unknown section")
    for name, factory in SECTIONS.items():
        section = factory()
        values = {}
        spec = {f.name: f for f in fields(section)}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in spec:
                    errors.append(f"[{name}] {key}: unknown key")
                    continue
                meta = spec[key].metadata
                try:
                    values[key] = _decode(meta["kind"], raw, meta)
                except ValueError as exc:
                    errors.append(f"[{name}] {key}: {exc}")
        built[name] = replace(section, **values)
    cfg = RunConfig(**built)
    errors += validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def render_config(cfg: RunConfig) -> str:
    lines = []
    for name in SECTIONS:
        section = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(section):
            lines.append(f"{f.name} = {_encode(f.metadata['kind'], getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from None
    return parse_config(text)


# -- validation ---------------------------------------------------------------------------------------

def validate(cfg: RunConfig) -> list[str]:
    """Cross-field rules; each message names the rule it enforces."""
    err = []
    eq, dom, bd, ck, rg = cfg.equation, cfg.domain, cfg.boundary, cfg.checks, cfg.regularity
    dim = dom.dim
    if dim not in (1, 2):
        err.append("[domain] dim: must be 1 or 2")
        return err
    # equation
    if eq.epsilon < 0 or any(e <= 0 for e in eq.epsilons):
        err.append("[equation] epsilon: must be nonnegative (cascade members positive)")
    if any(b >= a for a, b in zip(eq.epsilons, eq.epsilons[1:])):
        err.append("[equation] epsilons: must be strictly decreasing")
    if eq.thetas and len(eq.thetas) != len(eq.epsilons):
        err.append("[equation] thetas: one temperature per cascade epsilon")
    if eq.mode == "regularized" and eq.gamma < 0 and eq.epsilon == 0 and not eq.epsilons:
        err.append("[equation] epsilon: DegeneracyProfile invariant, a regularized direct solve "
                   "with gamma < 0 needs epsilon > 0")
    if eq.mode == "singular" and not eq.epsilons:
        err.append("[equation] mode: singular profile is solved only through a cascade (set epsilons)")
    if eq.gamma <= -2:
        err.append("[equation] gamma: the Dirichlet problem needs gamma > -2")
    if eq.operator in ("pucci_plus", "pucci_minus"):
        if not (eq.lam > 0 and eq.Lam >= eq.lam):
            err.append("[equation] lam/Lam: ellipticity needs 0 < lam <= Lam")
    else:
        want = 1 if eq.operator == "linear" else None
        if not eq.matrices:
            err.append(f"[equation] matrices: operator {eq.operator} needs coefficient matrices")
        elif want is not None and len(eq.matrices) != want:
            err.append("[equation] matrices: linear operator takes exactly one matrix")
        else:
            for m in eq.matrices:
                a = np.asarray(m)
                if a.shape != (dim, dim):
                    err.append(f"[equation] matrices: expected {dim}x{dim} matrices")
                    break
                if not np.allclose(a, a.T) or np.linalg.eigvalsh(a).min() <= 0:
                    err.append("[equation] matrices: coefficient matrices must be symmetric positive definite")
                    break
        if eq.operator == "bellman" and not eq.theta > 0:
            err.append("[equation] theta: smoothing temperature must be positive")
    # domain
    if dom.shape == "box":
        if len(dom.lower) != dim or len(dom.upper) != dim:
            err.append("[domain] lower/upper: need one value per dimension")
        elif any(u <= l for l, u in zip(dom.lower, dom.upper)):
            err.append("[domain] lower/upper: upper must exceed lower")
    else:
        if dom.center and len(dom.center) != dim:
            err.append("[domain] center: need one value per dimension")
        if not dom.radius > 0:
            err.append("[domain] radius: must be positive")
    if dom.n < 3:
        err.append("[domain] n: need at least 3 nodes")
    if dom.steps < 1:
        err.append("[domain] steps: need at least one time step")
    if not dom.t1 > dom.t0:
        err.append("[domain] t1: must exceed t0")
    # boundary
    if bd.phi == "linear" and len(bd.a) != dim:
        err.append("[boundary] a: linear data needs one slope per dimension")
    if bd.phi == "caloric":
        if eq.gamma != 0:
            err.append("[boundary] phi: caloric data solves the equation only for gamma = 0")
        if len(bd.quad) != 1 or np.asarray(bd.quad[0]).shape != (dim, dim):
            err.append(f"[boundary] quad: caloric data needs one {dim}x{dim} matrix")
        if bd.a and len(bd.a) != dim:
            err.append("[boundary] a: need one slope per dimension")
    if bd.phi == "degenerate_profile":
        if not eq.gamma > -1:
            err.append("[boundary] phi: the degenerate profile needs gamma > -1")
        if not bd.c > 0:
            err.append("[boundary] c: the profile time slope must be positive")
        if not 0 <= bd.axis < dim:
            err.append("[boundary] axis: out of range")
    if bd.phi == "random_fourier" and bd.modes < 1:
        err.append("[boundary] modes: need at least one mode")
    if bd.phi == "grid_file" and not bd.file:
        err.append("[boundary] file: grid_file data needs a path")
    # checks
    for f in fields(ck):
        if f.name.startswith("tol_") or f.name in ("gradient_C", "spread_limit"):
            if not getattr(ck, f.name) > 0:
                err.append(f"[checks] {f.name}: tolerances must be positive")
    if "barrier" in ck.enabled:
        if dom.shape != "ball":
            err.append("[checks] barrier: the boundary barrier needs a ball domain")
        if ck.barrier_x0 and len(ck.barrier_x0) != dim:
            err.append("[checks] barrier_x0: need one value per dimension")
    if "exact" in ck.enabled and bd.phi not in ("linear", "caloric", "degenerate_profile"):
        err.append("[checks] exact: needs closed-form data (linear, caloric or degenerate_profile)")
    # regularity
    if rg.center and len(rg.center) != dim:
        err.append("[regularity] center: need one value per dimension")
    for name in ("r0", "mu", "delta", "tau", "eps0", "eta"):
        if not getattr(rg, name) > 0:
            err.append(f"[regularity] {name}: must be positive")
    if rg.eps1 < 0:
        err.append("[regularity] eps1: must be nonnegative")
    if not 0.5 < rg.l < 1:
        err.append("[regularity] l: must lie in (1/2, 1)")
    if rg.angles < 0:
        err.append("[regularity] angles: must be nonnegative")
    if "dichotomy" in ck.enabled and 0 < rg.delta < 1:
        bound = min(1 - rg.delta, (1 - rg.delta) ** (1 + eq.gamma))
        if not rg.tau < bound:
            err.append(f"[regularity] tau: cond:tau violated, need tau < min(1-delta, (1-delta)^(1+gamma))"
                       f" = {bound:.6g}, got {rg.tau}")
    return err


def config_echo(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)
