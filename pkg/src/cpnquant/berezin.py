"""Covariant symbols, the star-product integral and correspondence studies.

Operators are complex matrices in the :class:`~cpnquant.hilbert.BasisSpec`
ordering. Coherent states are handled through their normalised coefficient
vectors ``conj(Phi(mu)) / (1+|mu|^2)^{m/2}`` so nothing overflows at large m.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import quadrature
from .cpn_core import QuantizationConfig, SmoothField, as_points, norm_sq, poisson_bracket_fs
from .hilbert import BasisSpec, normalized_basis_values, weighted_basis_matrix

log = logging.getLogger(__name__)

# relative size of <psi_nu, psi_mu> below which the pair counts as a kernel zero
KERNEL_ZERO = 1e-12
# brackets below this are treated as identically zero (no kappa fit)
BRACKET_ZERO = 1e-12


class SymbolError(ZeroDivisionError):
    """The coherent-state overlap vanishes at the requested pair."""


def _check_operator(A, basis: BasisSpec) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    d = len(basis)
    if A.shape != (d, d):
        raise ValueError(f"operator of shape {A.shape} does not match basis dimension {d}")
    return A


def normalized_overlap(nu, mu, m: int):
    """<psi_nu, psi_mu> / (|psi_nu| |psi_mu|) = ((1 + conj(mu).nu) / sqrt((1+|nu|^2)(1+|mu|^2)))^m."""
    nu, mu = as_points(nu), as_points(mu)
    w = 1.0 + np.sum(np.conj(mu) * nu, axis=-1)
    return (w / np.sqrt((1.0 + norm_sq(nu)) * (1.0 + norm_sq(mu)))) ** m


def covariant_symbol(A, nu, mu, basis: BasisSpec):
    """A(nu, mubar) = <psi_nu, A psi_mu> / <psi_nu, psi_mu>.

    Raises :class:`SymbolError` where the overlap vanishes, which can happen
    off the diagonal since (1 + conj(mu).nu)^m has zeros.
    """
    A = _check_operator(A, basis)
    phi_nu = normalized_basis_values(nu, basis)
    phi_mu = normalized_basis_values(mu, basis)
    num = np.einsum("...i,ij,...j->...", phi_nu, A, np.conj(phi_mu))
    den = normalized_overlap(nu, mu, basis.cfg.m)
    if np.any(np.abs(den) < KERNEL_ZERO):
        raise SymbolError(f"coherent-state overlap vanishes at nu={nu}, mu={mu}")
    return num / den


@dataclass(frozen=True)
class SymbolFunction:
    """Off-diagonal symbol ``(nu, mu) -> A(nu, mubar)``.

    When built from an operator (``operator`` set) the star product uses the
    pole-free numerator ``<psi_nu, A psi_mu>`` directly.
    """

    func: Callable
    operator: Optional[np.ndarray] = None
    basis: Optional[BasisSpec] = field(default=None, compare=False)

    def __call__(self, nu, mu):
        return self.func(nu, mu)

    def diag(self, mu):
        return self.func(mu, mu)


def symbol_of(A, basis: BasisSpec) -> SymbolFunction:
    A = _check_operator(A, basis)
    return SymbolFunction(lambda nu, mu: covariant_symbol(A, nu, mu, basis), A, basis)


def _kernel_weight_identity(rule, m):
    """max |L(nu, nubar) e^{-m Phi(nu)} - 1| over the nodes, in log form."""
    log_L = m * np.log1p(norm_sq(rule.nodes))
    return float(np.max(np.abs(np.expm1(log_L + m * np.log(rule.s0))))) if len(rule) else 0.0


def star_product(A1: SymbolFunction, A2: SymbolFunction, mu, basis: BasisSpec, rule) -> complex:
    r"""(A1 * A2)(mu, mubar) as the weighted integral over nu.

    The integrand is

        A1(mu, nubar) A2(nu, mubar) L(mu, nubar) L(nu, mubar) / (L(mu, mubar) L(nu, nubar))
        * L(nu, nubar) e^{-m Phi(nu)}

    For operator-derived symbols the kernel factors are absorbed into
    ``<psi_mu, A1 psi_nu><psi_nu, A2 psi_mu>`` so kernel zeros never appear.
    For bare symbol functions the kernel factors combine to ``|a(mu, nu)|^2``
    and nodes where a symbol is not finite raise.
    """
    m = basis.cfg.m
    mu = as_points(mu, basis.cfg.n)
    drift = _kernel_weight_identity(rule, m)
    if drift > 1e-8:
        raise quadrature.QuadratureError(f"L(nu,nubar) e^(-m Phi) deviates from 1 by {drift:.3e}")
    if A1.operator is not None and A2.operator is not None:
        E = weighted_basis_matrix(basis, rule)
        phi_mu = normalized_basis_values(mu, basis)
        left = (phi_mu @ A1.operator) @ np.conj(E).T
        right = E @ (A2.operator @ np.conj(phi_mu))
        integrand = left * right
    else:
        nodes = rule.nodes
        a = normalized_overlap(mu[None, :], nodes, m)
        with np.errstate(all="ignore"):
            v1 = np.asarray(A1(mu[None, :], nodes), dtype=complex)
            v2 = np.asarray(A2(nodes, mu[None, :]), dtype=complex)
        integrand = v1 * v2 * np.abs(a) ** 2
        bad = ~np.isfinite(integrand)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise quadrature.QuadratureError(
                f"symbol undefined at node {k} (nu={nodes[k]}); pass operator-derived symbols"
            )
    return complex(basis.c * np.sum(rule.weights * integrand))


def star_via_composition(A1, A2, mu, basis: BasisSpec) -> complex:
    """Symbol of the composition A1 A2 on the diagonal; the exact oracle for :func:`star_product`."""
    A1 = _check_operator(A1, basis)
    A2 = _check_operator(A2, basis)
    return complex(covariant_symbol(A1 @ A2, mu, mu, basis))


def toeplitz_operator(f, basis: BasisSpec, rule) -> np.ndarray:
    """T_f = c(m) int f(nu) |psi_nu><psi_nu| e^{-m Phi} dV as a basis matrix."""
    vals = np.asarray(f(rule.nodes), dtype=complex)
    if vals.ndim == 0:
        vals = np.full(len(rule), vals)
    if not np.all(np.isfinite(vals)):
        k = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise quadrature.QuadratureError(f"f is not finite at node {k}: nu={rule.nodes[k]}")
    E = weighted_basis_matrix(basis, rule)
    return basis.c * (np.conj(E).T * (rule.weights * vals)) @ E


def benchmark_pair() -> tuple[SmoothField, SmoothField]:
    """Re nu / (1+|nu|^2) and Im nu / (1+|nu|^2) on CP^1 with analytic partials."""

    def f1(nu):
        z = nu[..., 0]
        return z.real / (1 + abs(z) ** 2)

    def f2(nu):
        z = nu[..., 0]
        return z.imag / (1 + abs(z) ** 2)

    def d(nu, num):
        z = nu[..., 0]
        return (num(z) / (1 + abs(z) ** 2) ** 2)[..., None]

    return (
        SmoothField(
            f1,
            d_holo=lambda nu: d(nu, lambda z: (1 - np.conj(z) ** 2) / 2),
            d_antiholo=lambda nu: d(nu, lambda z: (1 - z**2) / 2),
            name="re_nu_over_1p",
        ),
        SmoothField(
            f2,
            d_holo=lambda nu: d(nu, lambda z: (1 + np.conj(z) ** 2) / 2j),
            d_antiholo=lambda nu: d(nu, lambda z: -(1 + z**2) / 2j),
            name="im_nu_over_1p",
        ),
    )


def fit_loglog(ms, errs):
    """Least-squares slope and R^2 of log(err) against log(m); ``(None, None)`` if not fittable."""
    ms = np.asarray(ms, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if len(ms) < 2 or np.any(~np.isfinite(errs)) or np.any(errs <= 0):
        return None, None
    x, y = np.log(ms), np.log(errs)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


@dataclass
class ConvergenceReport:
    """Per-m errors of the correspondence principle plus fitted rates.

    ``e0[k] = |(A1*A2)(mu) - A1(mu) A2(mu)|`` and
    ``e1[k] = |m (A1*A2 - A2*A1)(mu) - kappa {f1, f2}_FS(mu)|`` where
    ``kappa`` is the intercept of a polynomial fit (in 1/m) of the scaled
    commutator, divided by the bracket.
    """

    m: list
    e0: list
    e1: list
    commutator: list
    bracket: complex
    kappa_fit: Optional[complex]
    slope_e0: Optional[float]
    slope_e1: Optional[float]
    r2: Optional[float]
    r2_e1: Optional[float]
    oracle_gap: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def cx(z):
            return None if z is None else [float(np.real(z)), float(np.imag(z))]

        return {
            "m": [int(v) for v in self.m],
            "e0": [None if v is None else float(v) for v in self.e0],
            "e1": [None if v is None else float(v) for v in self.e1],
            "commutator": [cx(z) for z in self.commutator],
            "bracket": cx(self.bracket),
            "kappa_fit": cx(self.kappa_fit),
            "slope_e0": self.slope_e0,
            "slope_e1": self.slope_e1,
            "r2": self.r2,
            "r2_e1": self.r2_e1,
            "oracle_gap": [None if v is None else float(v) for v in self.oracle_gap],
            "flags": {str(k): v for k, v in self.flags.items()},
        }


@dataclass(frozen=True)
class StudyPoint:
    """Symbols of one Toeplitz pair at a single level."""

    m: int
    a1: complex
    a2: complex
    star12: complex
    star21: complex
    oracle_gap: float


def _ambient_point(f1, f2, mu, cfg, rule_params):
    basis = BasisSpec.build(cfg)
    rule = quadrature.build_rule(cfg, params=rule_params)
    T1 = toeplitz_operator(f1, basis, rule)
    T2 = toeplitz_operator(f2, basis, rule)
    s1, s2 = symbol_of(T1, basis), symbol_of(T2, basis)
    star12 = star_product(s1, s2, mu, basis, rule)
    star21 = star_product(s2, s1, mu, basis, rule)
    gap = abs(star12 - star_via_composition(T1, T2, mu, basis))
    return StudyPoint(cfg.m, complex(s1.diag(mu)), complex(s2.diag(mu)), star12, star21, gap)


def summarize_study(points, bracket, flags=None) -> ConvergenceReport:
    """Turn per-level symbol data into a :class:`ConvergenceReport`."""
    flags = dict(flags or {})
    ms = [p.m for p in points]
    e0 = [abs(p.star12 - p.a1 * p.a2) for p in points]
    comm = [p.m * (p.star12 - p.star21) for p in points]
    bracket = complex(bracket)
    kappa = None
    if abs(bracket) > BRACKET_ZERO and points:
        if len(points) == 1:
            kappa = comm[0] / bracket
        else:
            # comm(m) ~ kappa * bracket + b / m (+ c / m^2 once there are enough levels)
            inv_m = 1.0 / np.asarray(ms, dtype=float)
            cols = [np.full(len(ms), bracket)] + [inv_m**j for j in range(1, min(len(ms), 3))]
            design = np.column_stack(cols).astype(complex)
            sol, *_ = np.linalg.lstsq(design, np.asarray(comm), rcond=None)
            kappa = complex(sol[0])
    limit = (kappa if kappa is not None else 0.0) * bracket
    e1 = [abs(c - limit) for c in comm]
    slope_e0, r2 = fit_loglog(ms, e0)
    slope_e1, r2_e1 = fit_loglog(ms, e1)
    return ConvergenceReport(
        m=ms, e0=e0, e1=e1, commutator=comm, bracket=bracket, kappa_fit=kappa,
        slope_e0=slope_e0, slope_e1=slope_e1, r2=r2, r2_e1=r2_e1,
        oracle_gap=[p.oracle_gap for p in points], flags=flags,
    )


def run_levels(task, m_list, executor=None):
    """Evaluate ``task(m)`` for each level, collecting numerical failures as flags.

    Results come back in ``m_list`` order regardless of the executor.
    """
    m_list = list(m_list)
    if any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("m_list must be strictly ascending")
    mapper = executor.map if executor is not None else map

    def guarded(m):
        try:
            return task(m), None
        except (FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    points, flags = [], {}
    for m, (pt, err) in zip(m_list, mapper(guarded, m_list)):
        if err is None:
            points.append(pt)
        else:
            log.warning("level m=%d failed: %s", m, err)
            flags[m] = err
    return points, flags


def correspondence_study(f1: SmoothField, f2: SmoothField, mu, m_list, cfg: QuantizationConfig | None = None,
                         rule_params: dict | None = None, executor=None) -> ConvergenceReport:
    """Correspondence-principle study for the Toeplitz families of ``f1`` and ``f2``.

    At each level the star products come from the quadrature integral; the
    composition oracle gap is recorded alongside. ``rule_params`` may be a
    dict or a callable ``m -> dict``.
    """
    mu = as_points(mu)
    base = cfg if cfg is not None else QuantizationConfig(n=mu.shape[-1], m=2)
    if any(m < 2 for m in m_list):
        raise ValueError("correspondence studies need every level m >= 2")

    def task(m):
        params = rule_params(m) if callable(rule_params) else rule_params
        return _ambient_point(f1, f2, mu, base.with_m(m), params)

    points, flags = run_levels(task, m_list, executor)
    return summarize_study(points, poisson_bracket_fs(f1, f2, mu), flags)
