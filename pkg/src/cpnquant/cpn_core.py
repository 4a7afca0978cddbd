"""Fubini-Study data on the affine chart U_0 = {mu_0 != 0} of CP^n.

Points of U_0 are complex numpy arrays of shape ``(n,)`` (or ``(..., n)`` for
batches) holding the inhomogeneous coordinates ``mu = (mu_1, ..., mu_n)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)

FD_STEP = 1e-5


@dataclass(frozen=True)
class QuantizationConfig:
    """Dimension ``n`` of CP^n, level ``m`` (hbar = 1/m) and conventions.

    ``measure_scale`` converts ``|dmu ^ dmubar|`` into Lebesgue measure on
    C^n = R^{2n}; the default ``2**n`` makes each ``|dmu_i ^ dmubar_i|``
    equal ``2 dx dy``.
    """

    n: int
    m: int
    measure_scale: Optional[float] = None
    tol: float = 1e-10
    weight_potential: str = "fubini_study"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"m must be a nonnegative integer, got {self.m!r}")
        if self.measure_scale is None:
            object.__setattr__(self, "measure_scale", float(2**self.n))
        if not self.measure_scale > 0:
            raise ValueError("measure_scale must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.weight_potential != "fubini_study":
            raise ValueError(
                "weight_potential: only 'fubini_study' is defined on U_0"
            )

    @property
    def hbar(self) -> float:
        return 1.0 / self.m

    def with_m(self, m: int) -> "QuantizationConfig":
        return QuantizationConfig(self.n, m, self.measure_scale, self.tol, self.weight_potential)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "measure_scale": self.measure_scale,
            "tol": self.tol,
            "weight_potential": self.weight_potential,
        }


def as_points(mu, n: Optional[int] = None) -> np.ndarray:
    """Coerce ``mu`` to a complex array whose last axis is the coordinate axis."""
    arr = np.asarray(mu, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if n is not None and arr.shape[-1] != n:
        raise ValueError(f"expected points with {n} coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def norm_sq(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=complex)
    return np.sum(mu.real**2 + mu.imag**2, axis=-1)


def fs_potential(mu):
    """log(1 + |mu|^2), the level-independent Fubini-Study potential."""
    return np.log1p(norm_sq(as_points(mu)))


def kahler_potential(mu, cfg: QuantizationConfig):
    """m * log(1 + |mu|^2), i.e. the level-m potential with e^{m Phi} = (1+|mu|^2)^m."""
    return cfg.m * fs_potential(as_points(mu, cfg.n))


def fs_metric_matrix(mu) -> np.ndarray:
    r"""Hermitian matrix ``g[i, j] = d^2 log(1+|mu|^2) / dmu_i dmubar_j``.

    Explicitly ``((1+|mu|^2) delta_ij - conj(mu_i) mu_j) / (1+|mu|^2)^2``.
    """
    mu = as_points(mu)
    s = 1.0 + norm_sq(mu)
    n = mu.shape[-1]
    outer = np.conj(mu)[..., :, None] * mu[..., None, :]
    eye = np.eye(n)
    s_ = s[..., None, None]
    return (s_ * eye - outer) / s_**2


def fs_metric_inverse(mu) -> np.ndarray:
    """Closed-form inverse of :func:`fs_metric_matrix`: ``(1+|mu|^2)(delta_ij + conj(mu_i) mu_j)``."""
    mu = as_points(mu)
    s = 1.0 + norm_sq(mu)
    n = mu.shape[-1]
    outer = np.conj(mu)[..., :, None] * mu[..., None, :]
    return s[..., None, None] * (np.eye(n) + outer)


def volume_density(mu):
    """(1+|mu|^2)^{-(n+1)}, the density of dV against |dmu ^ dmubar|."""
    mu = as_points(mu)
    n = mu.shape[-1]
    return (1.0 + norm_sq(mu)) ** (-(n + 1))


@dataclass(frozen=True)
class SmoothField:
    """A (vectorised) function on U_0 together with its Wirtinger partials.

    ``func`` maps an array of points ``(..., n)`` to values ``(...)``.
    ``d_holo`` / ``d_antiholo`` return ``(..., n)`` arrays of d/dmu_j and
    d/dmubar_j; when absent, central differences with step ``h`` are used.
    """

    func: Callable[[np.ndarray], np.ndarray]
    d_holo: Optional[Callable[[np.ndarray], np.ndarray]] = None
    d_antiholo: Optional[Callable[[np.ndarray], np.ndarray]] = None
    h: float = FD_STEP
    name: str = field(default="field", compare=False)

    def __call__(self, mu):
        return np.asarray(self.func(as_points(mu)), dtype=complex)

    def partials(self, mu):
        """Return ``(d/dmu, d/dmubar)`` at ``mu``, each of shape ``(..., n)``."""
        mu = as_points(mu)
        if self.d_holo is not None and self.d_antiholo is not None:
            return (
                np.asarray(self.d_holo(mu), dtype=complex),
                np.asarray(self.d_antiholo(mu), dtype=complex),
            )
        return _fd_wirtinger(self.func, mu, self.h)

    @classmethod
    def constant(cls, c: complex) -> "SmoothField":
        c = complex(c)
        return cls(
            func=lambda mu: np.full(mu.shape[:-1], c, dtype=complex),
            d_holo=lambda mu: np.zeros(mu.shape, dtype=complex),
            d_antiholo=lambda mu: np.zeros(mu.shape, dtype=complex),
            name=f"const({c})",
        )


def _fd_wirtinger(func, mu: np.ndarray, h: float):
    n = mu.shape[-1]
    d_holo = np.empty(mu.shape, dtype=complex)
    d_anti = np.empty(mu.shape, dtype=complex)
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = h
        dx = (np.asarray(func(mu + e), dtype=complex) - np.asarray(func(mu - e), dtype=complex)) / (2 * h)
        dy = (np.asarray(func(mu + 1j * e), dtype=complex) - np.asarray(func(mu - 1j * e), dtype=complex)) / (2 * h)
        d_holo[..., j] = 0.5 * (dx - 1j * dy)
        d_anti[..., j] = 0.5 * (dx + 1j * dy)
    return d_holo, d_anti


def poisson_bracket_fs(t: SmoothField, s: SmoothField, mu):
    r"""Fubini-Study Poisson bracket of ``t`` and ``s`` at ``mu``.

    .. math::
        \{t, s\} = \sum_{i,j} W_{ij} (\bar\partial_i t \, \partial_j s
                   - \bar\partial_i s \, \partial_j t)

    with ``W`` the inverse of :func:`fs_metric_matrix` (no extra factor of
    ``i``). The first index of ``W`` pairs with the antiholomorphic
    derivative, which makes the bracket U(n)-covariant. For ``n = 1`` this is the textbook expression
    ``(1+|mu|^2)^2 (t_mubar s_mu - s_mubar t_mu)``.
    """
    mu = as_points(mu)
    w = fs_metric_inverse(mu)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError(f"degenerate Fubini-Study form at {mu}")
    t_h, t_a = t.partials(mu)
    s_h, s_a = s.partials(mu)
    first = np.einsum("...ij,...i,...j->...", w, t_a, s_h)
    second = np.einsum("...ij,...i,...j->...", w, s_a, t_h)
    return first - second
