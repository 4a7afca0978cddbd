"""Odzijewicz-type data on U_0 and its pullback to embedded manifolds.

The kernel coefficient on U_0 is ``K_00(mubar, nu) = (1 + conj(mu).nu)^e`` with
``e = m`` by default; ``LineBundleKernel.twisted`` uses ``e = m + n + 1``
instead. Transition amplitudes are assembled in log form: the Lagrange
identity

    (1+|mu|^2)(1+|nu|^2) - |1 + conj(mu).nu|^2 = |mu - nu|^2 + sum_{i<j} |mu_i nu_j - mu_j nu_i|^2

gives ``log|a|`` as a log1p of a nonpositive quantity, so ``|a| <= 1`` holds
in floating point as well.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from .cpn_core import QuantizationConfig, as_points, fs_metric_matrix, norm_sq


@dataclass(frozen=True)
class LineBundleKernel:
    """Kernel coefficient K_00 on U_0 with chart bookkeeping for covers of CP^n."""

    n: int
    exponent: int

    @classmethod
    def for_config(cls, cfg: QuantizationConfig) -> "LineBundleKernel":
        return cls(cfg.n, cfg.m)

    @classmethod
    def twisted(cls, cfg: QuantizationConfig) -> "LineBundleKernel":
        """Exponent m + n + 1, the alternative reading with the canonical-bundle twist."""
        return cls(cfg.n, cfg.m + cfg.n + 1)

    def K(self, mu, nu):
        """K_00(mubar, nu) = (1 + conj(mu).nu)^e."""
        mu, nu = as_points(mu, self.n), as_points(nu, self.n)
        return (1.0 + np.sum(np.conj(mu) * nu, axis=-1)) ** self.exponent

    def dbar_log_diag(self, mu):
        """d/dmubar_j log K_00(mubar, mu) = e mu_j / (1 + |mu|^2)."""
        mu = as_points(mu, self.n)
        return self.exponent * mu / (1.0 + norm_sq(mu))[..., None]

    def charts(self, mu) -> list[int]:
        """Indices alpha of the standard charts U_alpha containing [1, mu]."""
        mu = as_points(mu, self.n)
        return [0] + [j + 1 for j in range(self.n) if mu[j] != 0]

    @staticmethod
    def frame_tag(beta: int) -> str:
        return f"tau_{beta}"


def _log_modulus(mu, nu, exponent):
    mu, nu = as_points(mu), as_points(nu)
    mu, nu = np.broadcast_arrays(mu, nu)
    diff = norm_sq(mu - nu)
    n = mu.shape[-1]
    wedge = np.zeros(diff.shape)
    for i in range(n):
        for j in range(i + 1, n):
            wedge = wedge + np.abs(mu[..., i] * nu[..., j] - mu[..., j] * nu[..., i]) ** 2
    denom = (1.0 + norm_sq(mu)) * (1.0 + norm_sq(nu))
    with np.errstate(divide="ignore"):
        return 0.5 * exponent * np.log1p(-(diff + wedge) / denom)


def transition_modulus(mu, nu, kernel: LineBundleKernel):
    """|a_00(mubar, nu)|, guaranteed to lie in [0, 1]."""
    return np.exp(_log_modulus(mu, nu, kernel.exponent))


def transition_amplitude(mu, nu, kernel: LineBundleKernel):
    """a_00(mubar, nu) = K(mubar, nu) / (K(mubar, mu)^{1/2} K(nubar, nu)^{1/2})."""
    mu, nu = as_points(mu, kernel.n), as_points(nu, kernel.n)
    w = 1.0 + np.sum(np.conj(mu) * nu, axis=-1)
    return transition_modulus(mu, nu, kernel) * np.exp(1j * kernel.exponent * np.angle(w))


def cs_metric(mu, nu, kernel: LineBundleKernel):
    """Coherent-state distance sqrt(2) (1 - |a(mubar, nu)|)^{1/2}."""
    return np.sqrt(2.0 * (1.0 - transition_modulus(mu, nu, kernel)))


# --- Monge-Ampere -----------------------------------------------------------

READINGS = ("determinant", "printed")


def monge_ampere_lhs(mu, N: float, reading: str = "determinant"):
    """det[d^2 log rho / dmu_j dmubar_k] for rho = (1+|mu|^2)^{-N}.

    ``"determinant"`` is the honest determinant ``det(-N g) = (-N)^n det g``;
    ``"printed"`` is the one-dimensional value ``-N (1+|mu|^2)^{-(n+1)}``
    used for every n. The two agree for n = 1.
    """
    mu = as_points(mu)
    if reading == "determinant":
        return np.linalg.det(-N * fs_metric_matrix(mu))
    if reading == "printed":
        return -N * (1.0 + norm_sq(mu)) ** (-(mu.shape[-1] + 1))
    raise ValueError(f"unknown reading {reading!r}; expected one of {READINGS}")


def monge_ampere_rhs(mu, N: float, C: float, cfg: QuantizationConfig):
    """C (-1)^{n(n+1)/2} / n! * rho_00(mu) K_00(mubar, mu)."""
    mu = as_points(mu, cfg.n)
    n = cfg.n
    s = 1.0 + norm_sq(mu)
    sign = (-1) ** (n * (n + 1) // 2)
    return C * sign / math.factorial(n) * s ** (cfg.m - N)


def monge_ampere_residual(mu, N: float, C: float, cfg: QuantizationConfig, reading: str = "determinant"):
    """|LHS - RHS| of the Monge-Ampere equation at ``mu``."""
    return np.abs(monge_ampere_lhs(mu, N, reading) - monge_ampere_rhs(mu, N, C, cfg))


def monge_ampere_constants(cfg: QuantizationConfig, reading: str = "determinant") -> tuple[int, float]:
    """(N, C) solving the equation with rho = (1+|mu|^2)^{-N}.

    N = n + m + 1 in both readings. ``"printed"`` gives C = +-N n! with the
    sign of (-1)^{n(n+1)/2 + 1}; ``"determinant"`` gives
    C = n! (-N)^n (-1)^{n(n+1)/2}.
    """
    n, m = cfg.n, cfg.m
    N = n + m + 1
    half = n * (n + 1) // 2
    if reading == "printed":
        return N, float((-1) ** (half + 1) * N * math.factorial(n))
    if reading == "determinant":
        return N, float(math.factorial(n) * (-N) ** n * (-1) ** half)
    raise ValueError(f"unknown reading {reading!r}; expected one of {READINGS}")


# --- paths and holonomy -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathGamma:
    """Sampled path in U_0.

    Closed paths repeat their first point at the end. ``tau`` is the
    parameter at each sample and ``velocity`` (optional) is d gamma / d tau.
    """

    points: np.ndarray
    closed: bool = False
    tau: Optional[np.ndarray] = None
    velocity: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ValueError("a path needs at least two points")
        if self.closed and not np.allclose(pts[0], pts[-1], atol=1e-12):
            raise ValueError("closed paths must repeat their first point")
        if self.tau is None:
            object.__setattr__(self, "tau", np.linspace(0.0, 1.0, len(pts)))

    def __len__(self):
        return len(self.points)

    def reversed(self) -> "PathGamma":
        tau = self.tau[-1] + self.tau[0] - self.tau[::-1]
        vel = None if self.velocity is None else -self.velocity[::-1]
        return PathGamma(self.points[::-1], self.closed, tau, vel)

    def velocities(self) -> np.ndarray:
        """d gamma / d tau: stored values, spectral derivative for uniform closed paths, else finite differences."""
        if self.velocity is not None:
            return np.asarray(self.velocity, dtype=complex).reshape(self.points.shape)
        steps = np.diff(self.tau)
        if self.closed and len(self) > 2 and np.allclose(steps, steps[0]):
            z = self.points[:-1]
            M = len(z)
            period = self.tau[-1] - self.tau[0]
            k = np.fft.fftfreq(M, d=1.0 / M)
            if M % 2 == 0:
                k[M // 2] = 0.0
            dz = np.fft.ifft(np.fft.fft(z, axis=0) * (2j * np.pi * k / period)[:, None], axis=0)
            return np.vstack([dz, dz[:1]])
        return np.gradient(self.points, self.tau, axis=0)


def circle_path(center=0.0, radius: float = 1.0, turns: float = 1.0, samples: int = 64, n: int = 1,
                phase: float = 0.0) -> PathGamma:
    """Circle in the first coordinate (others held at ``center``), ``samples`` steps."""
    c = np.broadcast_to(as_points(center), (n,)).astype(complex)
    tau = phase + np.linspace(0.0, 2 * np.pi * turns, samples + 1)
    pts = np.tile(c, (samples + 1, 1))
    pts[:, 0] = c[0] + radius * np.exp(1j * tau)
    vel = np.zeros_like(pts)
    vel[:, 0] = 1j * radius * np.exp(1j * tau)
    closed = float(turns).is_integer()
    if closed:
        pts[-1] = pts[0]
    return PathGamma(pts, closed, tau, vel)


def path_from_spec(spec, n: int = 1) -> PathGamma:
    """Path from a list of complex coordinates or ``{"circle": {center, radius, turns, samples}}``."""
    if isinstance(spec, dict):
        if set(spec) != {"circle"}:
            raise ValueError(f"unknown path generator(s) {sorted(spec)}")
        c = spec["circle"]
        center = c.get("center", 0.0)
        center = complex(*center) if isinstance(center, (list, tuple)) else complex(center)
        return circle_path(center, float(c.get("radius", 1.0)), float(c.get("turns", 1.0)),
                           int(c.get("samples", 64)), n)
    pts = np.array([complex(*z) if isinstance(z, (list, tuple)) else complex(z) for z in spec])
    pts = pts.reshape(len(pts), -1)
    return PathGamma(pts, bool(np.allclose(pts[0], pts[-1])))


def holonomy_discrete(gamma: PathGamma, kernel: LineBundleKernel) -> complex:
    """prod_i a(zbar_{i+1}, z_i) along consecutive samples."""
    z = gamma.points
    log_mod = _log_modulus(z[1:], z[:-1], kernel.exponent)
    w = 1.0 + np.sum(np.conj(z[1:]) * z[:-1], axis=-1)
    phase = kernel.exponent * np.angle(w)
    return complex(np.exp(np.sum(log_mod) + 1j * np.sum(phase)))


def holonomy_phase(gamma: PathGamma, kernel: LineBundleKernel) -> float:
    """int_gamma Im(sum_j d log K / dmubar_j dmubar_j) by the composite trapezoid rule in tau."""
    z = gamma.points
    form = kernel.dbar_log_diag(z)
    integrand = np.imag(np.sum(form * np.conj(gamma.velocities()), axis=-1))
    return float(trapezoid(integrand, gamma.tau))


def holonomy_integral(gamma: PathGamma, kernel: LineBundleKernel) -> complex:
    """exp(i int_gamma Im(dbar log K))."""
    return complex(np.exp(1j * holonomy_phase(gamma, kernel)))


@dataclass
class HolonomyReport:
    rows: list
    order: Optional[float]

    CSV_COLUMNS = ("N", "discrete_re", "discrete_im", "integral_re", "integral_im", "abs_err")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r["N"]] + [repr(float(r[c])) for c in self.CSV_COLUMNS[1:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": self.rows, "order": self.order}


def holonomy_agreement(path_factory: Callable[[int], PathGamma], steps_list, kernel: LineBundleKernel) -> HolonomyReport:
    """Compare the discrete product on ``path_factory(N)`` (N steps) with the integral formula.

    The fitted order is minus the log-log slope of the error in N.
    """
    steps_list = list(steps_list)
    if any(b <= a for a, b in zip(steps_list, steps_list[1:])):
        raise ValueError("steps_list must be strictly ascending")
    rows = []
    for N in steps_list:
        gamma = path_factory(N)
        d = holonomy_discrete(gamma, kernel)
        i = holonomy_integral(gamma, kernel)
        rows.append({"N": int(N), "discrete_re": d.real, "discrete_im": d.imag,
                     "integral_re": i.real, "integral_im": i.imag, "abs_err": abs(d - i)})
    order = None
    errs = np.array([r["abs_err"] for r in rows])
    if len(rows) >= 2 and np.all(errs > 0):
        order = float(-np.polyfit(np.log(steps_list), np.log(errs), 1)[0])
    return HolonomyReport(rows, order)


# --- pullback to X ----------------------------------------------------------


def pullback_kernel_Q(p, q, manifold, kernel: LineBundleKernel):
    """Q(pbar, q) = K_00(conj(epsilon(p)), epsilon(q))."""
    return kernel.K(manifold.epsilon(p), manifold.epsilon(q))


def pullback_amplitude_A(p, q, manifold, kernel: LineBundleKernel):
    """A(pbar, q) = Q(pbar, q) / (Q(pbar, p)^{1/2} Q(qbar, q)^{1/2})."""
    return transition_amplitude(manifold.epsilon(p), manifold.epsilon(q), kernel)


def pullback_path(params, manifold, closed: bool | None = None, tau=None) -> PathGamma:
    """Push a sampled parameter path on X through epsilon."""
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    pts = manifold.epsilon(params)
    if closed is None:
        closed = bool(np.allclose(pts[0], pts[-1], atol=1e-12))
    if closed:
        pts = pts.copy()
        pts[-1] = pts[0]
    return PathGamma(pts, closed, tau)


def pullback_path_amplitude(params, manifold, kernel: LineBundleKernel, method: str = "integral",
                            closed: bool | None = None, tau=None) -> complex:
    """A(gamma, p, q) for a path given in parameters of X."""
    gamma = pullback_path(params, manifold, closed, tau)
    if method == "integral":
        return holonomy_integral(gamma, kernel)
    if method == "discrete":
        return holonomy_discrete(gamma, kernel)
    raise ValueError(f"unknown method {method!r}")


def chart_cover(manifold, kernel: LineBundleKernel) -> dict:
    """Sample indices of X falling in each W_alpha = epsilon(X) cap U_alpha."""
    cover: dict[int, list[int]] = {}
    for k, mu in enumerate(manifold.sample_points):
        for alpha in kernel.charts(mu):
            cover.setdefault(alpha, []).append(k)
    return cover
