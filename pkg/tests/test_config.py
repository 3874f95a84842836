import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vispar.config import (
    ConfigError,
    RunConfig,
    config_echo,
    load_config,
    parse_config,
    render_config,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

HEAT = """
[equation]
gamma = 0
matrices = 1
[domain]
n = 33
[boundary]
phi = caloric
quad = 1
"""


def test_minimal_heat_config_is_valid():
    cfg = parse_config(HEAT)
    assert cfg.equation.operator == "linear"
    assert cfg.equation.matrices == (((1.0,),),)
    assert cfg.domain.n == 33
    # untouched keys keep their defaults
    assert cfg.scheme.cfl_safety == 0.9
    assert cfg.check_enabled("max_principle")


def test_shipped_configs_parse():
    names = sorted(p.name for p in CONFIGS.glob("*.ini"))
    assert names
    for path in CONFIGS.glob("*.ini"):
        cfg = load_config(path)
        assert parse_config(render_config(cfg)) == cfg


def test_tau_condition_rejected():
    text = """
[equation]
gamma = 1
epsilon = 0.1
matrices = 1
[boundary]
phi = smooth
[checks]
enabled = dichotomy
[regularity]
tau = 0.95
delta = 0.1
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert any("cond:tau" in e and "0.81" in e for e in info.value.errors)


def test_negative_gamma_without_epsilon_rejected():
    text = """
[equation]
gamma = -1
epsilon = 0
matrices = 1
[boundary]
phi = smooth
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert any("DegeneracyProfile" in e for e in info.value.errors)


def test_all_errors_reported_together():
    text = """
[equation]
gamma = oops
colour = blue
matrices = 1 0; 0 1
[domain]
n = 2
t1 = -5
[boundary]
phi = teapot
[extra]
x = 1
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    errs = info.value.errors
    joined = "\n".join(errs)
    for needle in ("[equation] gamma", "[equation] colour: unknown key", "[domain] n",
                   "[domain] t1", "[boundary] phi", "[extra]: unknown section"):
        assert needle in joined, needle
    assert len(errs) >= 6


def test_malformed_text():
    with pytest.raises(ConfigError):
        parse_config("no section header")
    with pytest.raises(ConfigError):
        parse_config("[equation]\ngamma = 1\ngamma = 2\n")


def test_keys_are_case_sensitive():
    cfg = parse_config(HEAT.replace("[equation]", "[equation]\noperator = pucci_plus\nlam = 1\nLam = 2"))
    assert (cfg.equation.lam, cfg.equation.Lam) == (1.0, 2.0)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/vispar.ini")


def test_non_finite_rejected():
    with pytest.raises(ConfigError):
        parse_config(HEAT.replace("gamma = 0", "gamma = nan"))


def test_render_echoes_every_default():
    cfg = parse_config(HEAT)
    text = render_config(cfg)
    echo = config_echo(cfg)
    for section, values in echo.items():
        assert f"[{section}]" in text
        for key in values:
            assert f"\n{key} = " in text


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
positive = st.floats(1e-9, 1e3, allow_nan=False)


@st.composite
def run_configs(draw):
    cfg = parse_config(HEAT)
    dim = draw(st.sampled_from([1, 2]))
    eps = sorted(draw(st.lists(positive, min_size=0, max_size=4, unique=True)), reverse=True)
    diag = [draw(st.floats(0.1, 10)) for _ in range(dim)]
    mat = tuple(tuple(diag[i] if i == j else 0.0 for j in range(dim)) for i in range(dim))
    lo = [draw(st.floats(-5, 0)) for _ in range(dim)]
    cfg = cfg.with_values("domain", dim=dim, lower=tuple(lo), upper=tuple(v + 2.0 for v in lo),
                          n=draw(st.integers(3, 400)), steps=draw(st.integers(1, 100)),
                          t0=draw(st.floats(-2, -0.01)), t1=0.0)
    cfg = cfg.with_values("equation", epsilon=draw(st.floats(0, 2)), epsilons=tuple(eps), matrices=(mat,),
                          theta=draw(positive), source=draw(finite))
    cfg = cfg.with_values("boundary", phi=draw(st.sampled_from(["smooth", "bowl", "random_fourier", "caloric"])),
                          quad=(mat,), amplitude=draw(finite), modes=draw(st.integers(1, 9)),
                          file=draw(st.text("abc_/.", max_size=10).map(str.strip)))
    cfg = cfg.with_values("scheme", stencil=draw(st.sampled_from(["centered", "wide"])),
                          cfl_safety=draw(st.floats(0.01, 0.99)))
    cfg = cfg.with_values("checks", enabled=tuple(draw(st.lists(
        st.sampled_from(["max_principle", "gradient_max", "uniformity", "time_modulus", "compatibility"]),
        unique=True))), tol_exact=draw(positive))
    cfg = cfg.with_values("regularity", clip=draw(st.booleans()), r0=draw(positive),
                          center=tuple(draw(finite) for _ in range(dim)))
    return cfg


@settings(max_examples=60, deadline=None)
@given(run_configs())
def test_round_trip(cfg):
    assert parse_config(render_config(cfg)) == cfg


def test_with_values_is_functional():
    cfg = parse_config(HEAT)
    other = cfg.with_values("domain", n=129)
    assert cfg.domain.n == 33 and other.domain.n == 129
    assert isinstance(other, RunConfig)
    assert math.isclose(other.domain.t1, cfg.domain.t1)
