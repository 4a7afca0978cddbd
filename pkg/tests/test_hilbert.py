import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from cpnquant import hilbert, quadrature
from cpnquant.cpn_core import QuantizationConfig
from cpnquant.hilbert import BasisSpec


def basis(n, m):
    return BasisSpec.build(QuantizationConfig(n, m))


@pytest.mark.parametrize("n,m,dim", [(1, 2, 3), (2, 2, 6), (1, 0, 1), (3, 4, 35)])
def test_dimension(n, m, dim):
    assert hilbert.basis_dim(QuantizationConfig(n, m)) == dim
    assert len(basis(n, m)) == dim


def test_ordering_is_graded():
    assert basis(2, 2).indices == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def test_basis_evaluation_values():
    b = basis(1, 2)
    assert hilbert.eval_basis((0,), [0.7 - 2j], b) == pytest.approx(1.0)
    assert hilbert.eval_basis((1,), [1.0], b) == pytest.approx(math.sqrt(2))
    assert hilbert.eval_basis((1,), [0.0], b) == 0
    with pytest.raises(ValueError):
        hilbert.eval_basis((3,), [1.0], b)


def test_quadrature_basis_matches_closed_form():
    cfg = QuantizationConfig(2, 4)
    assert np.allclose(BasisSpec.from_quadrature(cfg).D, BasisSpec.build(cfg).D, rtol=1e-12)


@pytest.mark.parametrize("n,m", [(1, 5), (2, 3), (3, 2)])
def test_orthonormal_by_quadrature(n, m):
    b = basis(n, m)
    G = hilbert.gram_quadrature(b, quadrature.build_rule(b.cfg))
    assert np.max(np.abs(G - np.eye(len(b)))) < 1e-8


def test_inner_product_basics(rng):
    b = basis(1, 3)
    f = rng.normal(size=4) + 1j * rng.normal(size=4)
    assert hilbert.inner_product(np.zeros(4), f, b) == 0
    assert hilbert.inner_product(f, f, b).real > 0
    assert abs(hilbert.inner_product(f, f, b).imag) < 1e-15
    with pytest.raises(ValueError):
        hilbert.inner_product(f, np.ones(3), b)


def test_coherent_state_at_origin():
    cs = hilbert.coherent_state([0.0, 0.0], basis(2, 3))
    assert cs[0] == 1 and np.all(cs[1:] == 0)


def test_kernel_values():
    b = basis(1, 2)
    assert hilbert.evaluate_section(hilbert.coherent_state([1.0], b), [1.0], b) == pytest.approx(4.0)
    assert hilbert.kernel_L([0.0], [0.0], b) == 1


cpx = st.complex_numbers(max_magnitude=2.5, allow_nan=False, allow_infinity=False)


@given(st.integers(1, 2), st.integers(0, 8), st.lists(cpx, min_size=4, max_size=4))
def test_kernel_sum_matches_oracle(n, m, z):
    b = basis(n, m)
    mu, nu = np.array(z[:n]), np.array(z[2:2 + n])
    ref = oracles.kernel(mu, nu, m)
    assert abs(hilbert.kernel_L(mu, nu, b, "sum") - ref) < 1e-10 * max(1, abs(ref))
    assert abs(hilbert.kernel_L(mu, nu, b, "closed") - oracles.kernel_by_multinomial(mu, nu, m)) < 1e-10 * max(1, abs(ref))
    # coherent states evaluate to the kernel
    assert abs(hilbert.evaluate_section(hilbert.coherent_state(nu, b), mu, b) - ref) < 1e-10 * max(1, abs(ref))


@given(st.integers(1, 2), st.integers(0, 6), st.lists(cpx, min_size=2, max_size=2))
def test_kernel_diagonal_and_symmetry(n, m, z):
    b = basis(n, m)
    mu = np.array(z[:n])
    nu = np.array(z[::-1][:n])
    assert hilbert.kernel_L(mu, mu, b, "sum").real == pytest.approx((1 + np.sum(np.abs(mu) ** 2)) ** m, rel=1e-12)
    assert hilbert.kernel_L(mu, nu, b, "sum") == pytest.approx(np.conj(hilbert.kernel_L(nu, mu, b, "sum")), rel=1e-12)


def test_reproducing_exact_in_coefficients(rng):
    b = basis(2, 4)
    for _ in range(100):
        psi = rng.normal(size=len(b)) + 1j * rng.normal(size=len(b))
        mu = rng.normal(size=2) + 1j * rng.normal(size=2)
        scale = np.linalg.norm(psi) * (1 + np.sum(np.abs(mu) ** 2)) ** 2
        assert hilbert.reproducing_check(psi, mu, b) < 1e-10 * scale


@pytest.mark.parametrize("m", [1, 3, 6])
def test_reproducing_by_quadrature(m, rng):
    b = basis(1, m)
    rule = quadrature.build_rule(b.cfg)
    for I in b.indices:
        assert hilbert.reproducing_check(b.unit(I), [0.4 + 0.3j], b, rule) < 1e-12
    nu = np.array([0.8 - 0.5j])
    psi = hilbert.coherent_state(nu, b)
    assert hilbert.reproducing_check(psi, [-0.2 + 1j], b, rule) < 1e-8


def test_resolution_of_identity(rng):
    b = basis(1, 2)
    rule = quadrature.build_rule(b.cfg)
    assert hilbert.resolution_identity_residual(b.unit((0,)), b.unit((0,)), b, rule) < 1e-8
    assert hilbert.resolution_identity_residual(b.unit((0,)), b.unit((2,)), b, rule) < 1e-8
    nu = np.array([1.3 + 0.4j])
    psi = hilbert.coherent_state(nu, b)
    assert hilbert.resolution_identity_residual(psi, psi, b, rule) < 1e-6 * (1 + abs(nu[0]) ** 2) ** 2


@given(st.lists(cpx, min_size=3, max_size=12, unique=True))
def test_gram_matrix_psd(z):
    G = hilbert.gram_matrix(np.array(z)[:, None], basis(1, 4))
    scale = np.max(np.abs(np.diag(G)))
    assert np.allclose(G, G.conj().T)
    assert np.min(np.linalg.eigvalsh(G)) > -1e-10 * scale


def test_coherent_states_overcomplete(rng):
    b = basis(1, 4)
    pts = rng.normal(size=(12, 1)) + 1j * rng.normal(size=(12, 1))
    G = hilbert.gram_matrix(pts, b)
    assert np.linalg.matrix_rank(G, tol=1e-8 * np.max(np.abs(G))) == len(b)


def test_kernel_sum_error_is_at_rounding_level(rng):
    # unbounded points: the error is a few ulps of the term magnitude (1 + |mu||nu|)^m
    for n, m in [(1, 8), (2, 7), (3, 5)]:
        b = basis(n, m)
        mu = rng.normal(size=(200, n)) + 1j * rng.normal(size=(200, n))
        nu = rng.normal(size=(200, n)) + 1j * rng.normal(size=(200, n))
        ref = np.array([oracles.kernel(x, y, m) for x, y in zip(mu, nu)])
        size = (1 + np.linalg.norm(mu, axis=1) * np.linalg.norm(nu, axis=1)) ** m
        err = np.abs(hilbert.kernel_L(mu, nu, b, "sum") - ref) / size
        assert np.max(err) < 20 * np.finfo(float).eps
