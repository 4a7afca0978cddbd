"""Quadrature on U_0 = C^n against e^{-m Phi_FS} dV.

Write ``t_i = |nu_i|^2`` and map R_+^n onto the unit simplex by
``s_i = t_i / (1 + sum t)``, ``s_0 = 1 - sum s_i = 1 / (1 + |nu|^2)``.
Under the default measure this turns ``dV`` into ``ds dtheta`` and
``e^{-m Phi}`` into ``s_0^m``, so weighted integrals of band-limited
functions become polynomial integrals on the simplex times trigonometric
polynomials on the torus. The simplex is collapsed onto a cube (Duffy map)
and integrated with Gauss-Jacobi rules; angles use the periodic trapezoid
rule. For n = 1 the radial variable ``s_1`` is just ``u = r^2 / (1 + r^2)``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from . import closed_forms
from .cpn_core import QuantizationConfig

log = logging.getLogger(__name__)

TENSOR_MAX_N = 3
KINDS = ("gauss_radial_x_angular", "monte_carlo")


class QuadratureError(FloatingPointError):
    """Non-finite integrand values on a quadrature node."""


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes on U_0 with positive weights for ``dV``.

    ``s`` and ``s0`` carry the simplex coordinates of every node
    (``s0 = 1 / (1 + |nu|^2)``) and ``theta`` its angles, which lets callers
    evaluate weighted monomials in log space.
    """

    nodes: np.ndarray
    weights: np.ndarray
    s: np.ndarray
    s0: np.ndarray
    theta: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.nodes) != len(self.weights):
            raise ValueError("node/weight count mismatch")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self):
        return len(self.weights)


def default_params(cfg: QuantizationConfig) -> dict:
    """Node counts that integrate every level-m inner-product integrand exactly."""
    return {"R": max(4, cfg.m + 4), "T": max(4, 2 * cfg.m + 6)}


def _unit_jacobi(order: int, alpha: int):
    """Gauss-Jacobi nodes/weights on [0, 1] for the weight (1 - y)^alpha."""
    x, w = roots_jacobi(order, alpha, 0)
    return (1 + x) / 2, w / 2 ** (alpha + 1)


def _collapsed_simplex(n: int, order: int):
    """Tensor Gauss rule on the n-simplex via the Duffy map; weights sum to 1/n!."""
    factors = [_unit_jacobi(order, n - 1 - k) for k in range(n)]
    grids = np.meshgrid(*[f[0] for f in factors], indexing="ij")
    wgrids = np.meshgrid(*[f[1] for f in factors], indexing="ij")
    y = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    s = np.empty_like(y)
    rest = np.ones(len(y))
    for k in range(n):
        s[:, k] = rest * y[:, k]
        rest = rest * (1 - y[:, k])
    return s, rest, w


def _nodes_from_simplex(s, s0, theta):
    radius = np.sqrt(s / s0[:, None])
    return radius * np.exp(1j * theta)


def build_rule(cfg: QuantizationConfig, kind: str = "gauss_radial_x_angular", params: dict | None = None) -> QuadratureRule:
    """Build a quadrature rule for ``int_{U_0} (.) dV``.

    ``params`` keys: ``R`` (Gauss order per simplex coordinate), ``T``
    (trapezoid points per angle) for the tensor rule; ``S`` (sample count) and
    ``seed`` for Monte Carlo. Tensor rules are only built for n <= 3; larger
    n falls back to Monte Carlo.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown quadrature kind {kind!r}; expected one of {KINDS}")
    params = dict(params or {})
    n = cfg.n
    scale = cfg.measure_scale / 2**n
    if kind == "gauss_radial_x_angular" and n > TENSOR_MAX_N:
        log.warning("tensor rule unsupported for n=%d; falling back to monte_carlo", n)
        kind = "monte_carlo"
        params.setdefault("seed", 0)

    if kind == "gauss_radial_x_angular":
        full = {**default_params(cfg), **params}
        R, T = int(full["R"]), int(full["T"])
        if R < 4 or T < 4:
            raise ValueError(f"tensor rule needs R, T >= 4 (got R={R}, T={T})")
        s_simplex, s0_simplex, w_simplex = _collapsed_simplex(n, R)
        angles = 2 * np.pi * np.arange(T) / T
        theta_grid = np.array(list(itertools.product(angles, repeat=n)))
        ns, na = len(w_simplex), len(theta_grid)
        s = np.repeat(s_simplex, na, axis=0)
        s0 = np.repeat(s0_simplex, na)
        theta = np.tile(theta_grid, (ns, 1))
        weights = np.repeat(w_simplex, na) * (2 * np.pi / T) ** n * scale
        nodes = _nodes_from_simplex(s, s0, theta)
        return QuadratureRule(nodes, weights, s, s0, theta, kind, {"R": R, "T": T})

    S = int(params.get("S", 20000))
    if S < 1000:
        raise ValueError(f"monte_carlo rule needs S >= 1000 (got S={S})")
    if params.get("seed") is None:
        raise ValueError("monte_carlo quadrature requires an explicit seed")
    seed = int(params["seed"])
    rng = np.random.default_rng(seed)
    bary = rng.dirichlet(np.ones(n + 1), size=S)
    s0, s = bary[:, 0], bary[:, 1:]
    theta = rng.uniform(0.0, 2 * np.pi, size=(S, n))
    volume = closed_forms.fs_volume(cfg)
    weights = np.full(S, volume / S)
    nodes = _nodes_from_simplex(s, s0, theta)
    return QuadratureRule(nodes, weights, s, s0, theta, "monte_carlo", {"S": S, "seed": seed})


def _check_finite(values, rule):
    bad = ~np.isfinite(values)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise QuadratureError(f"integrand is not finite at node {k}: nu={rule.nodes[k]}")


def weighted_values(f, cfg: QuantizationConfig, rule: QuadratureRule) -> np.ndarray:
    """Per-node contributions ``w_k f(nu_k) e^{-m Phi(nu_k)}``."""
    values = np.asarray(f(rule.nodes), dtype=complex)
    if values.ndim == 0:
        values = np.full(len(rule), values)
    _check_finite(values, rule)
    return rule.weights * values * rule.s0 ** cfg.m


def integrate_weighted(f, cfg: QuantizationConfig, rule: QuadratureRule) -> complex:
    """Approximate ``int_{U_0} f(nu) e^{-m Phi_FS(nu)} dV(nu)``.

    ``f`` is vectorised: it receives the ``(N, n)`` node array.
    """
    return complex(np.sum(weighted_values(f, cfg, rule)))


def monte_carlo_stderr(f, cfg: QuantizationConfig, rule: QuadratureRule) -> float:
    """Standard error of a Monte Carlo estimate (equal weights assumed)."""
    if rule.kind != "monte_carlo":
        raise ValueError("standard error is only defined for monte_carlo rules")
    contrib = weighted_values(f, cfg, rule) * len(rule)
    return float(np.std(contrib, ddof=1) / math.sqrt(len(rule)))


def c_constant(cfg: QuantizationConfig, rule: QuadratureRule | None = None) -> float:
    """c(m) = 1 / int e^{-m Phi} dV, computed on ``rule``."""
    if rule is None:
        rule = build_rule(cfg)
    return 1.0 / integrate_weighted(lambda nu: 1.0, cfg, rule).real


def normalization_D(exponents, cfg: QuantizationConfig, rule: QuadratureRule | None = None) -> float:
    """D_I = c(m) int prod |nu_i|^{2 q_i} e^{-m Phi} dV by quadrature."""
    exponents = tuple(int(e) for e in exponents)
    if len(exponents) != cfg.n:
        raise ValueError(f"multi-index {exponents} does not have n={cfg.n} entries")
    if any(e < 0 for e in exponents):
        raise ValueError(f"multi-index {exponents} has negative entries")
    if sum(exponents) > cfg.m:
        raise ValueError(f"basis bound exceeded: degree {sum(exponents)} > m={cfg.m}")
    if rule is None:
        rule = build_rule(cfg)
    q = np.asarray(exponents)
    # prod |nu_i|^{2 q_i} s0^m = prod s_i^{q_i} s0^{m - q}; stay in simplex variables
    vals = np.prod(rule.s**q, axis=1) * rule.s0 ** (cfg.m - q.sum())
    moment = float(np.sum(rule.weights * vals))
    return c_constant(cfg, rule) * moment
