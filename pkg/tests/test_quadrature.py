import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from cpnquant import closed_forms, quadrature
from cpnquant.cpn_core import QuantizationConfig


def test_rule_size_and_positivity():
    rule = quadrature.build_rule(QuantizationConfig(1, 2), params={"R": 16, "T": 16})
    assert len(rule) == 256
    assert np.all(rule.weights > 0)


@pytest.mark.parametrize("f,expected", [(lambda nu: 1.0, 2 * math.pi / 3),
                                         (lambda nu: np.abs(nu[:, 0]) ** 2, math.pi / 3),
                                         (lambda nu: 0.0, 0.0)])
def test_weighted_integrals_n1_m2(f, expected):
    cfg = QuantizationConfig(1, 2)
    rule = quadrature.build_rule(cfg, params={"R": 16, "T": 16})
    assert abs(quadrature.integrate_weighted(f, cfg, rule) - expected) < 1e-10


@pytest.mark.parametrize("m", [0, 1, 3, 7])
def test_radial_integrals_against_adaptive_quadrature(m):
    cfg = QuantizationConfig(1, m)
    rule = quadrature.build_rule(cfg)
    for k in range(m + 1):
        ours = quadrature.integrate_weighted(lambda nu: np.abs(nu[:, 0]) ** (2 * k), cfg, rule)
        assert ours.real == pytest.approx(oracles.weighted_integral_n1(lambda t: t**k, m), rel=1e-10)


def test_n2_integral_against_adaptive_quadrature():
    cfg = QuantizationConfig(2, 3)
    rule = quadrature.build_rule(cfg)
    ours = quadrature.integrate_weighted(lambda nu: np.abs(nu[:, 0]) ** 2 * np.abs(nu[:, 1]) ** 4, cfg, rule)
    assert ours.real == pytest.approx(oracles.weighted_integral_n2(lambda a, b: a * b * b, 3), rel=1e-9)


@pytest.mark.parametrize("m,expected", [(1, 1 / math.pi), (2, 3 / (2 * math.pi))])
def test_c_constant(m, expected):
    cfg = QuantizationConfig(1, m)
    assert quadrature.c_constant(cfg) == pytest.approx(expected, abs=1e-12)
    assert closed_forms.c_constant_exact(cfg) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("q,m,expected", [((0,), 5, 1.0), ((1,), 2, 0.5)])
def test_normalization_values(q, m, expected):
    assert quadrature.normalization_D(q, QuantizationConfig(1, m)) == pytest.approx(expected, abs=1e-12)


def test_normalization_n2_mixed_index():
    D = quadrature.normalization_D((1, 1), QuantizationConfig(2, 2))
    assert abs(D - float(oracles.dirichlet_D((1, 1), 2))) < 1e-8


@given(st.integers(1, 3), st.integers(0, 7), st.data())
def test_D_matches_dirichlet(n, m, data):
    q = data.draw(st.lists(st.integers(0, m), min_size=n, max_size=n).filter(lambda v: sum(v) <= m))
    cfg = QuantizationConfig(n, m)
    D = quadrature.normalization_D(q, cfg)
    assert D == pytest.approx(float(oracles.dirichlet_D(q, m)), rel=1e-10)
    assert closed_forms.dirichlet_D(q, m) == pytest.approx(float(oracles.dirichlet_D(q, m)), rel=1e-12)


@given(st.integers(1, 3), st.integers(0, 6))
def test_total_volume(n, m):
    cfg = QuantizationConfig(n, m)
    rule = quadrature.build_rule(cfg)
    assert np.sum(rule.weights) == pytest.approx((2 * math.pi) ** n / math.factorial(n), rel=1e-12)


def test_bad_inputs():
    cfg = QuantizationConfig(1, 2)
    with pytest.raises(ValueError, match="basis bound"):
        quadrature.normalization_D((3,), cfg)
    with pytest.raises(ValueError):
        quadrature.normalization_D((-1,), cfg)
    with pytest.raises(ValueError):
        quadrature.build_rule(cfg, params={"R": 2})
    with pytest.raises(ValueError, match="seed"):
        quadrature.build_rule(cfg, "monte_carlo")
    with pytest.raises(ValueError):
        quadrature.build_rule(cfg, "monte_carlo", {"S": 10, "seed": 1})


def test_non_finite_integrand_names_node():
    cfg = QuantizationConfig(1, 2)
    rule = quadrature.build_rule(cfg)
    with pytest.raises(quadrature.QuadratureError, match="node"):
        quadrature.integrate_weighted(lambda nu: np.where(np.abs(nu[:, 0]) > 1, np.inf, 1.0), cfg, rule)


def test_monte_carlo_is_deterministic():
    cfg = QuantizationConfig(1, 2)
    a = quadrature.build_rule(cfg, "monte_carlo", {"S": 5000, "seed": 42})
    b = quadrature.build_rule(cfg, "monte_carlo", {"S": 5000, "seed": 42})
    f = lambda nu: np.abs(nu[:, 0]) ** 2
    assert quadrature.integrate_weighted(f, cfg, a) == quadrature.integrate_weighted(f, cfg, b)


def test_monte_carlo_within_three_standard_errors():
    cfg = QuantizationConfig(2, 2)
    exact = oracles.weighted_integral_n2(lambda a, b: a, 2)
    f = lambda nu: np.abs(nu[:, 0]) ** 2
    misses = 0
    for seed in range(20):
        rule = quadrature.build_rule(cfg, "monte_carlo", {"S": 4000, "seed": seed})
        est = quadrature.integrate_weighted(f, cfg, rule).real
        misses += abs(est - exact) > 3 * quadrature.monte_carlo_stderr(f, cfg, rule)
    assert misses <= 1


def test_large_n_falls_back_to_monte_carlo():
    cfg = QuantizationConfig(4, 1)
    rule = quadrature.build_rule(cfg)
    assert rule.kind == "monte_carlo"
    assert quadrature.c_constant(cfg, rule) > 0
