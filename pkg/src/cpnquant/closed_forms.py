"""Beta/Dirichlet closed forms for the weighted integrals over U_0.

With ``t_i = |nu_i|^2`` every weighted monomial moment reduces to

    int_{R_+^n} prod t_i^{q_i} (1 + sum t)^{-(m+n+1)} dt
        = prod(q_i!) (m - q)! / (m + n)!

(a Dirichlet integral of the second kind), times ``(2 pi)^n`` from the angles
and ``measure_scale / 2^n`` from the measure convention. These functions never
touch a quadrature rule; they exist so the quadrature path can be checked
against something independent.
"""

from __future__ import annotations

import math

from scipy.special import gammaln


def _check_exponents(exponents, m):
    q = sum(exponents)
    if any(int(e) != e or e < 0 for e in exponents):
        raise ValueError(f"exponents must be nonnegative integers, got {tuple(exponents)}")
    if q > m:
        raise ValueError(f"degree {q} of {tuple(exponents)} exceeds level m={m}")
    return q


def log_weighted_moment(exponents, cfg) -> float:
    """log of ``int prod |nu_i|^{2 q_i} e^{-m Phi} dV`` for ``sum q_i <= m``."""
    n, m = cfg.n, cfg.m
    q = _check_exponents(exponents, m)
    log_dirichlet = sum(gammaln(e + 1) for e in exponents) + gammaln(m - q + 1) - gammaln(m + n + 1)
    return float(
        log_dirichlet + n * math.log(2 * math.pi) + math.log(cfg.measure_scale) - n * math.log(2.0)
    )


def weighted_moment(exponents, cfg) -> float:
    return math.exp(log_weighted_moment(exponents, cfg))


def c_constant_exact(cfg) -> float:
    """c(m) = 1 / int e^{-m Phi} dV; equals (m+1)/(2 pi) for n = 1 and the default measure."""
    return math.exp(-log_weighted_moment((0,) * cfg.n, cfg))


def log_dirichlet_D(exponents, m: int) -> float:
    q = _check_exponents(exponents, m)
    return float(sum(gammaln(e + 1) for e in exponents) + gammaln(m - q + 1) - gammaln(m + 1))


def dirichlet_D(exponents, m: int) -> float:
    """prod(q_i!) (m - q)! / m!, the squared norm of the monomial nu^I."""
    return math.exp(log_dirichlet_D(exponents, m))


def fs_volume(cfg) -> float:
    """Total volume int_{U_0} dV = (2 pi)^n / n! under the default measure."""
    return (2 * math.pi) ** cfg.n / math.factorial(cfg.n) * cfg.measure_scale / 2**cfg.n
