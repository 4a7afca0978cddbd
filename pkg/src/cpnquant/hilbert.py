"""The level-m Hilbert space of holomorphic sections on U_0.

Sections are stored as coefficient vectors in the orthonormal monomial basis
``Phi_I = nu^I / sqrt(D_I)`` (graded-lexicographic order); operators are
square matrices in the same ordering. The inner product is conjugate-linear in
its first argument.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import closed_forms, quadrature
from .cpn_core import QuantizationConfig, as_points, norm_sq


def basis_dim(cfg: QuantizationConfig) -> int:
    """Number of monomials of degree <= m in n variables, C(n+m, n)."""
    return math.comb(cfg.n + cfg.m, cfg.n)


def multi_indices(n: int, m: int) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree <= m, graded by degree, lex-descending within."""
    out = []
    for q in range(m + 1):
        level = [e for e in itertools.product(range(q, -1, -1), repeat=n) if sum(e) == q]
        out.extend(level)
    return out


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Ordered orthonormal monomial basis of the level-m space.

    ``D`` defaults to the Dirichlet closed form; ``from_quadrature`` rebuilds
    it from a quadrature rule instead.
    """

    cfg: QuantizationConfig
    indices: tuple
    log_D: np.ndarray

    @classmethod
    def build(cls, cfg: QuantizationConfig) -> "BasisSpec":
        idx = tuple(multi_indices(cfg.n, cfg.m))
        log_D = np.array([closed_forms.log_dirichlet_D(I, cfg.m) for I in idx])
        return cls(cfg, idx, log_D)

    @classmethod
    def from_quadrature(cls, cfg: QuantizationConfig, rule=None) -> "BasisSpec":
        rule = rule if rule is not None else quadrature.build_rule(cfg)
        idx = tuple(multi_indices(cfg.n, cfg.m))
        log_D = np.log([quadrature.normalization_D(I, cfg, rule) for I in idx])
        return cls(cfg, idx, log_D)

    def __len__(self):
        return len(self.indices)

    @property
    def D(self) -> np.ndarray:
        return np.exp(self.log_D)

    @cached_property
    def exponents(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(len(self.indices), self.cfg.n)

    @cached_property
    def position(self) -> dict:
        return {I: k for k, I in enumerate(self.indices)}

    @property
    def c(self) -> float:
        return closed_forms.c_constant_exact(self.cfg)

    def index_of(self, I) -> int:
        I = tuple(int(e) for e in I)
        try:
            return self.position[I]
        except KeyError:
            raise ValueError(f"multi-index {I} is not in the level-{self.cfg.m} basis") from None

    def unit(self, I) -> np.ndarray:
        v = np.zeros(len(self), dtype=complex)
        v[self.index_of(I)] = 1.0
        return v

    def check(self, vec) -> np.ndarray:
        vec = np.asarray(vec, dtype=complex)
        if vec.shape[-1] != len(self):
            raise ValueError(f"vector of length {vec.shape[-1]} does not match basis dimension {len(self)}")
        return vec


def basis_values(mu, basis: BasisSpec) -> np.ndarray:
    """Matrix ``[Phi_I(mu)]`` of shape ``(..., dim)``."""
    mu = as_points(mu, basis.cfg.n)
    powers = np.prod(mu[..., None, :] ** basis.exponents, axis=-1)
    return powers * np.exp(-0.5 * basis.log_D)


def normalized_basis_values(mu, basis: BasisSpec) -> np.ndarray:
    """``Phi_I(mu) / (1+|mu|^2)^{m/2}``, computed in log space (bounded by 1)."""
    mu = as_points(mu, basis.cfg.n)
    s0 = 1.0 / (1.0 + norm_sq(mu))
    s = np.abs(mu) ** 2 * s0[..., None]
    theta = np.angle(mu)
    return _weighted_monomials(s, s0, theta, basis)


def _weighted_monomials(s, s0, theta, basis):
    q = basis.exponents
    deg = q.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_s = np.log(s)
        # 0 * log 0 must vanish for the zero exponent
        log_mod = np.where(q > 0, 0.5 * q * log_s[..., None, :], 0.0).sum(axis=-1)
    log_mod = log_mod + 0.5 * (basis.cfg.m - deg) * np.log(s0)[..., None] - 0.5 * basis.log_D
    phase = np.exp(1j * (theta @ q.T))
    return np.exp(log_mod) * phase


def weighted_basis_matrix(basis: BasisSpec, rule) -> np.ndarray:
    """``E[k, I] = Phi_I(nu_k) e^{-m Phi(nu_k)/2}`` on the nodes of ``rule``."""
    return _weighted_monomials(rule.s, rule.s0, rule.theta, basis)


def eval_basis(I, mu, basis: BasisSpec) -> complex:
    """Phi_I(mu) = mu^I / sqrt(D_I)."""
    k = basis.index_of(I)
    return basis_values(mu, basis)[..., k]


def evaluate_section(coeffs, mu, basis: BasisSpec):
    """Pointwise value ``sum_I coeffs_I Phi_I(mu)``."""
    return basis_values(mu, basis) @ basis.check(coeffs)


def inner_product(f, g, basis: BasisSpec) -> complex:
    """<f, g> = sum conj(f_I) g_I in the orthonormal basis."""
    return complex(np.vdot(basis.check(f), basis.check(g)))


def inner_product_quadrature(f, g, basis: BasisSpec, rule) -> complex:
    """<f, g> = c(m) int conj(f) g e^{-m Phi} dV evaluated on ``rule``."""
    E = weighted_basis_matrix(basis, rule)
    fv = E @ basis.check(f)
    gv = E @ basis.check(g)
    return complex(basis.c * np.sum(rule.weights * np.conj(fv) * gv))


def gram_quadrature(basis: BasisSpec, rule) -> np.ndarray:
    """Matrix of quadrature inner products <Phi_I, Phi_J>."""
    E = weighted_basis_matrix(basis, rule)
    return basis.c * (np.conj(E).T * rule.weights) @ E


def coherent_state(mu, basis: BasisSpec) -> np.ndarray:
    """Coefficient vector of psi_mu: entry I is conj(Phi_I(mu))."""
    return np.conj(basis_values(mu, basis))


def kernel_closed_form(mu, nu, m: int):
    """psi_nu(mu) = (1 + conj(nu) . mu)^m."""
    mu = as_points(mu)
    nu = as_points(nu)
    return (1.0 + np.sum(np.conj(nu) * mu, axis=-1)) ** m


def kernel_L(mu, nu, basis: BasisSpec, method: str = "closed"):
    """L(mu, nubar) = <psi_mu, psi_nu> = psi_nu(mu).

    ``method="sum"`` evaluates the basis expansion, ``"closed"`` the binomial
    closed form.
    """
    if method == "closed":
        return kernel_closed_form(mu, nu, basis.cfg.m)
    if method == "sum":
        return np.sum(basis_values(mu, basis) * np.conj(basis_values(nu, basis)), axis=-1)
    raise ValueError(f"unknown kernel method {method!r}")


def reproducing_check(psi, mu, basis: BasisSpec, rule=None) -> float:
    """|<psi_mu, Psi> - Psi(mu)|.

    Without ``rule`` the inner product is taken in coefficient space; with a
    rule it is the weighted integral.
    """
    psi = basis.check(psi)
    cs = coherent_state(mu, basis)
    if rule is None:
        lhs = inner_product(cs, psi, basis)
    else:
        lhs = inner_product_quadrature(cs, psi, basis, rule)
    return float(abs(lhs - evaluate_section(psi, mu, basis)))


def resolution_identity_residual(psi1, psi2, basis: BasisSpec, rule) -> float:
    """|c(m) int <Psi1, psi_mu><psi_mu, Psi2> e^{-m Phi} dV - <Psi1, Psi2>|.

    Uses <psi_mu, Psi> = Psi(mu), so the integrand is conj(Psi1(mu)) Psi2(mu).
    """
    E = weighted_basis_matrix(basis, rule)
    left = np.conj(E @ basis.check(psi1))
    right = E @ basis.check(psi2)
    integral = basis.c * np.sum(rule.weights * left * right)
    return float(abs(integral - inner_product(psi1, psi2, basis)))


def gram_matrix(points, basis: BasisSpec) -> np.ndarray:
    """Kernel Gram matrix ``[L(mu_i, mu_j)]`` over a point set."""
    pts = as_points(points, basis.cfg.n)
    return kernel_closed_form(pts[:, None, :], pts[None, :, :], basis.cfg.m)
