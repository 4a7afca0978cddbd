"""Compact manifolds embedded in U_0 and the pullback Hilbert space.

A manifold X of real dimension n is given by a chart ``chi: params -> R^{2n}``;
``epsilon = i o chi`` pairs consecutive real coordinates into complex ones,
``(x1, x2, ..., x_{2n}) -> (x1 + i x2, ..., x_{2n-1} + i x_{2n})``.

The pullback space is represented through the restriction matrix
``R[j, I] = Phi_I(epsilon(p_j))`` on a finite sample of X. A pullback section
is stored as its sample values together with its minimum-norm ambient
preimage, which lies in the row space of ``R``; the quotient norm is the
norm of that preimage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from . import berezin, quadrature
from .cpn_core import QuantizationConfig, SmoothField, as_points, poisson_bracket_fs
from .hilbert import BasisSpec, basis_values, kernel_closed_form, normalized_basis_values

MANIFOLD_TYPES = ("circle", "torus", "sphere", "point", "custom")


def pair_coordinates(x) -> np.ndarray:
    """R^{2n} -> C^n, pairing consecutive real coordinates."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise ValueError("real coordinates must come in pairs")
    return x[..., 0::2] + 1j * x[..., 1::2]


@dataclass(frozen=True, eq=False)
class EmbeddedManifold:
    """Parametrised compact manifold with its embedding into U_0 = C^n.

    ``chi`` maps parameter arrays ``(..., k)`` to ``(..., 2n)`` real points;
    ``samples`` holds the parameter values of the sample nodes.
    """

    kind: str
    n: int
    dim: int
    chi: Callable[[np.ndarray], np.ndarray]
    samples: np.ndarray
    spec: dict = field(default_factory=dict)

    def epsilon(self, params) -> np.ndarray:
        return pair_coordinates(self.chi(np.asarray(params, dtype=float)))

    @property
    def sample_points(self) -> np.ndarray:
        """epsilon of the sample nodes, shape ``(P, n)``."""
        return self.epsilon(self.samples)

    def __len__(self):
        return len(self.samples)


def _circle_chi(radius, center):
    center = complex(center)

    def chi(t):
        th = t[..., 0]
        return np.stack([center.real + radius * np.cos(th), center.imag + radius * np.sin(th)], axis=-1)

    return chi


def circle(sample_count: int = 64, radius: float = 1.0, center: complex = 0.0, seed=None) -> EmbeddedManifold:
    """S^1 -> C, theta -> center + radius e^{i theta}."""
    if seed is None:
        th = 2 * np.pi * np.arange(sample_count) / sample_count
    else:
        th = np.sort(np.random.default_rng(seed).uniform(0, 2 * np.pi, sample_count))
    spec = {"type": "circle", "params": {"radius": radius, "center": [complex(center).real, complex(center).imag]},
            "sample_count": sample_count, "seed": seed}
    return EmbeddedManifold("circle", 1, 1, _circle_chi(radius, center), th[:, None], spec)


def _torus_chi(major, minor):
    def chi(t):
        th, ph = t[..., 0], t[..., 1]
        r = major + minor * np.cos(th)
        return np.stack([r * np.cos(ph), r * np.sin(ph), minor * np.sin(th), np.zeros_like(th)], axis=-1)

    return chi


def torus(sample_count: int = 64, major: float = 2.0, minor: float = 1.0, seed=None) -> EmbeddedManifold:
    """T^2 -> R^4 = C^2 via ((2+cos th) cos ph, (2+cos th) sin ph, sin th, 0)."""
    if seed is None:
        k = math.ceil(math.sqrt(sample_count))
        g = 2 * np.pi * np.arange(k) / k
        params = np.array([(a, b) for a in g for b in g])
    else:
        params = np.random.default_rng(seed).uniform(0, 2 * np.pi, (sample_count, 2))
    spec = {"type": "torus", "params": {"major": major, "minor": minor}, "sample_count": sample_count, "seed": seed}
    return EmbeddedManifold("torus", 2, 2, _torus_chi(major, minor), params, spec)


def _sphere_chi(t):
    th, ph = t[..., 0], t[..., 1]
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th), np.zeros_like(th)], axis=-1)


def sphere(sample_count: int = 64, seed=None) -> EmbeddedManifold:
    """S^2 -> R^3 padded to R^4 = C^2; parameters are (polar, azimuth)."""
    if seed is None:
        # Fibonacci lattice
        k = np.arange(sample_count) + 0.5
        th = np.arccos(1 - 2 * k / sample_count)
        ph = np.mod(np.pi * (1 + 5**0.5) * k, 2 * np.pi)
    else:
        rng = np.random.default_rng(seed)
        th = np.arccos(rng.uniform(-1, 1, sample_count))
        ph = rng.uniform(0, 2 * np.pi, sample_count)
    spec = {"type": "sphere", "params": {}, "sample_count": sample_count, "seed": seed}
    return EmbeddedManifold("sphere", 2, 2, _sphere_chi, np.stack([th, ph], axis=-1), spec)


def point(location=(0.0,), n: Optional[int] = None) -> EmbeddedManifold:
    """A single point of U_0 (zero-dimensional X)."""
    loc = as_points(location)
    n = loc.shape[-1] if n is None else n
    loc = np.broadcast_to(loc, (n,)).astype(complex)
    real = np.empty(2 * n)
    real[0::2], real[1::2] = loc.real, loc.imag
    spec = {"type": "point", "params": {"location": [[z.real, z.imag] for z in loc]}, "sample_count": 1, "seed": None}
    return EmbeddedManifold("point", n, 0, lambda t: np.broadcast_to(real, np.shape(t)[:-1] + (2 * n,)).copy(),
                            np.zeros((1, 1)), spec)


def custom(params, values) -> EmbeddedManifold:
    """Manifold known only through a table of parameter points and R^{2n} values."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if len(params) != len(values):
        raise ValueError("custom manifold: params and values must have the same length")
    if values.shape[1] % 2:
        raise ValueError("custom manifold: values must have an even number of real coordinates")
    table = {tuple(p): v for p, v in zip(params, values)}
    n = values.shape[1] // 2

    def chi(t):
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1, t.shape[-1])
        try:
            out = np.array([table[tuple(row)] for row in flat])
        except KeyError as exc:
            raise ValueError(f"custom manifold has no chart value at parameter {exc.args[0]}") from None
        return out.reshape(t.shape[:-1] + (values.shape[1],))

    spec = {"type": "custom", "params": {"points": params.tolist(), "values": values.tolist()},
            "sample_count": len(params), "seed": None}
    return EmbeddedManifold("custom", n, params.shape[1], chi, params, spec)


def manifold_from_spec(spec: dict) -> EmbeddedManifold:
    """Build a manifold from ``{type, params, sample_count, seed}``."""
    kind = spec.get("type")
    params = dict(spec.get("params") or {})
    count = int(spec.get("sample_count", 64))
    seed = spec.get("seed")
    if kind == "circle":
        c = params.get("center", 0.0)
        c = complex(*c) if isinstance(c, (list, tuple)) else complex(c)
        return circle(count, float(params.get("radius", 1.0)), c, seed)
    if kind == "torus":
        return torus(count, float(params.get("major", 2.0)), float(params.get("minor", 1.0)), seed)
    if kind == "sphere":
        return sphere(count, seed)
    if kind == "point":
        loc = params.get("location", [[0.0, 0.0]])
        return point([complex(*z) for z in loc])
    if kind == "custom":
        return custom(params["points"], params["values"])
    raise ValueError(f"unknown manifold type {kind!r}; expected one of {MANIFOLD_TYPES}")


@dataclass(frozen=True, eq=False)
class PullbackSpace:
    """SVD of the restriction matrix and the derived row/kernel splitting."""

    basis: BasisSpec
    manifold: EmbeddedManifold
    R: np.ndarray
    U: np.ndarray
    sigma: np.ndarray
    Vh: np.ndarray
    rank: int
    rank_tol: float

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def nullity(self) -> int:
        return self.dim - self.rank

    @property
    def row_basis(self) -> np.ndarray:
        """Orthonormal basis of the row space, shape ``(dim, rank)``."""
        return self.Vh[: self.rank].conj().T

    @property
    def kernel_basis(self) -> np.ndarray:
        return self.Vh[self.rank:].conj().T

    @property
    def row_projector(self) -> np.ndarray:
        V = self.row_basis
        return V @ V.conj().T

    @property
    def kernel_projector(self) -> np.ndarray:
        K = self.kernel_basis
        return K @ K.conj().T

    def lift(self, values) -> np.ndarray:
        """Minimum-norm ambient preimage of sample values (pseudoinverse of R)."""
        values = np.asarray(values, dtype=complex)
        r = self.rank
        return self.row_basis @ ((self.U[:, :r].conj().T @ values) / self.sigma[:r])

    def ambient_values(self, params) -> np.ndarray:
        return basis_values(self.manifold.epsilon(params), self.basis)


def build_pullback(manifold: EmbeddedManifold, basis: BasisSpec, rank_tol: float = 1e-10) -> PullbackSpace:
    """SVD the restriction matrix; singular values below ``rank_tol * sigma_max`` span the kernel."""
    if manifold.n != basis.cfg.n:
        raise ValueError(f"manifold lives in C^{manifold.n} but the basis is for n={basis.cfg.n}")
    pts = manifold.sample_points
    if len(np.unique(np.round(pts, 14), axis=0)) != len(pts):
        raise ValueError("sample nodes are not distinct under the embedding")
    R = basis_values(pts, basis)
    U, sigma, Vh = np.linalg.svd(R, full_matrices=True)
    rank = int(np.sum(sigma > rank_tol * sigma[0])) if sigma.size and sigma[0] > 0 else 0
    if rank == 0:
        raise np.linalg.LinAlgError("degenerate sampling: restriction matrix has rank 0")
    return PullbackSpace(basis, manifold, R, U, sigma, Vh, rank, rank_tol)


@dataclass(frozen=True, eq=False)
class PullbackSection:
    """Sample values on X plus the minimum-norm ambient representative."""

    values: np.ndarray
    rep: np.ndarray
    space: PullbackSpace

    def __call__(self, params):
        """Evaluate at arbitrary points of X through the representative."""
        return self.space.ambient_values(params) @ self.rep


def pullback_of(coeffs, space: PullbackSpace) -> PullbackSection:
    """epsilon^* of an ambient section given by basis coefficients."""
    coeffs = space.basis.check(coeffs)
    return PullbackSection(space.R @ coeffs, space.row_projector @ coeffs, space)


def section_from_values(values, space: PullbackSpace) -> PullbackSection:
    values = np.asarray(values, dtype=complex)
    rep = space.lift(values)
    return PullbackSection(values, rep, space)


def pullback_norm(s: PullbackSection, space: PullbackSpace | None = None) -> float:
    """Quotient norm: the ambient norm of the minimum-norm preimage."""
    return float(np.linalg.norm(s.rep))


def inner_product_X(s1: PullbackSection, s2: PullbackSection) -> complex:
    return complex(np.vdot(s1.rep, s2.rep))


def pullback_coherent_state(p, space: PullbackSpace) -> PullbackSection:
    """Psi_p = epsilon^* psi_{epsilon(p)}; sample values are (1 + conj(epsilon(p)).epsilon(q))^m."""
    mu = space.manifold.epsilon(p)
    coeffs = np.conj(basis_values(mu, space.basis))
    values = kernel_closed_form(space.manifold.sample_points, mu, space.basis.cfg.m)
    return PullbackSection(values, space.row_projector @ coeffs, space)


def orthonormal_pullback_basis(space: PullbackSpace, cond_max: float = 1e12) -> np.ndarray:
    """Representatives of an orthonormal basis eta of the pullback space, shape ``(dim, rank)``.

    Gram-Schmidt in basis order over the projected vectors P e_I (dependent
    ones skipped), finished by a Cholesky factorisation of their Gram matrix.
    """
    P = space.row_projector
    chosen, q = [], []
    thresh = math.sqrt(space.rank_tol)
    for I in range(space.dim):
        v = P[:, I].copy()
        for u in q:
            v -= np.vdot(u, v) * u
        nv = np.linalg.norm(v)
        if nv > thresh * max(1.0, np.linalg.norm(P[:, I])):
            chosen.append(I)
            q.append(v / nv)
        if len(chosen) == space.rank:
            break
    cols = P[:, chosen]
    G = cols.conj().T @ cols
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_max:
        raise np.linalg.LinAlgError(f"ill-conditioned pullback Gram matrix (condition number {cond:.3e})")
    L = np.linalg.cholesky(G)
    return scipy.linalg.solve_triangular(L.conj(), cols.T, lower=True).T


def rawnsley_pullback_state(p, space: PullbackSpace, eta: np.ndarray | None = None) -> PullbackSection:
    """Phi_p = sum_k conj(eta_k(p)) eta_k built from an orthonormal pullback basis."""
    eta = orthonormal_pullback_basis(space) if eta is None else eta
    eta_at_p = space.ambient_values(p) @ eta
    rep = eta @ np.conj(eta_at_p)
    return PullbackSection(space.R @ rep, rep, space)


@dataclass(frozen=True, eq=False)
class PullbackOperator:
    """Operator on the pullback space, as a matrix in row-space coordinates."""

    matrix: np.ndarray
    space: PullbackSpace

    def __call__(self, s: PullbackSection) -> PullbackSection:
        V = self.space.row_basis
        rep = V @ (self.matrix @ (V.conj().T @ s.rep))
        return PullbackSection(self.space.R @ rep, rep, self.space)

    def __matmul__(self, other: "PullbackOperator") -> "PullbackOperator":
        return PullbackOperator(self.matrix @ other.matrix, self.space)

    @property
    def ambient(self) -> np.ndarray:
        """The Frobenius-minimal ambient operator A with epsilon^*(A s) = B(epsilon^* s)."""
        V = self.space.row_basis
        return V @ self.matrix @ V.conj().T


def induced_operator(A, space: PullbackSpace) -> PullbackOperator:
    """B(epsilon^* s) = epsilon^*(A lift(s)) with the minimum-norm lift."""
    A = np.asarray(A, dtype=complex)
    V = space.row_basis
    return PullbackOperator(V.conj().T @ A @ V, space)


def lift_operator(B: PullbackOperator) -> dict:
    """Minimal ambient preimage of ``B`` with its Frobenius and operator norms."""
    A = B.ambient
    return {"operator": A, "frobenius_norm": float(np.linalg.norm(A, "fro")), "operator_norm": float(np.linalg.norm(A, 2))}


def invariance_defect(A, space: PullbackSpace) -> float:
    """||P_ker A P_ker - A P_ker||: zero iff A maps the kernel of R into itself."""
    Pk = space.kernel_projector
    A = np.asarray(A, dtype=complex)
    return float(np.linalg.norm(Pk @ A @ Pk - A @ Pk, 2))


def x_symbol(B: PullbackOperator, p, q, space: PullbackSpace | None = None, method: str = "evaluation") -> complex:
    """X-symbol B(p, q) of an operator on the pullback space.

    ``"evaluation"`` uses B(Psi_q)(p) / Psi_q(p), with the denominator taken
    from the closed-form kernel (exact on X); ``"inner_product"`` uses
    <Psi_p, B Psi_q>_X / <Psi_p, Psi_q>_X. Both work with normalised
    coherent vectors.
    """
    space = B.space if space is None else space
    P = space.row_projector
    V = space.row_basis
    eps_p, eps_q = space.manifold.epsilon(p), space.manifold.epsilon(q)
    phi_p = normalized_basis_values(eps_p, space.basis)
    phi_q = normalized_basis_values(eps_q, space.basis)
    lift_q = P @ np.conj(phi_q)
    image = V @ (B.matrix @ (V.conj().T @ lift_q))
    if method == "evaluation":
        num, den = phi_p @ image, berezin.normalized_overlap(eps_p, eps_q, space.basis.cfg.m)
    elif method == "inner_product":
        lift_p = P @ np.conj(phi_p)
        num, den = np.vdot(lift_p, image), np.vdot(lift_p, lift_q)
    else:
        raise ValueError(f"unknown x_symbol method {method!r}")
    if abs(den) < berezin.KERNEL_ZERO:
        raise berezin.SymbolError(f"Psi_q(p) vanishes at p={p}, q={q}")
    return complex(num / den)


def _induced_point(f1, f2, p, manifold, cfg, rule_params, rank_tol):
    basis = BasisSpec.build(cfg)
    rule = quadrature.build_rule(cfg, params=rule_params)
    T1 = berezin.toeplitz_operator(f1, basis, rule)
    T2 = berezin.toeplitz_operator(f2, basis, rule)
    space = build_pullback(manifold, basis, rank_tol)
    B1, B2 = induced_operator(T1, space), induced_operator(T2, space)
    star12 = x_symbol(B1 @ B2, p, p)
    star21 = x_symbol(B2 @ B1, p, p)
    mu = manifold.epsilon(p)
    ambient = berezin.star_product(berezin.symbol_of(T1, basis), berezin.symbol_of(T2, basis), mu, basis, rule)
    return berezin.StudyPoint(cfg.m, x_symbol(B1, p, p), x_symbol(B2, p, p), star12, star21, abs(star12 - ambient))


def induced_correspondence_study(f1: SmoothField, f2: SmoothField, p, m_list, manifold: EmbeddedManifold,
                                 cfg: QuantizationConfig | None = None, rule_params: dict | None = None,
                                 rank_tol: float = 1e-10, executor=None) -> berezin.ConvergenceReport:
    """Correspondence study through X-symbols of the induced Toeplitz operators.

    ``oracle_gap`` records the distance to the ambient star-product integral
    at epsilon(p); the bracket is evaluated at epsilon(p).
    """
    base = cfg if cfg is not None else QuantizationConfig(n=manifold.n, m=2)
    if any(m < 2 for m in m_list):
        raise ValueError("correspondence studies need every level m >= 2")

    def task(m):
        params = rule_params(m) if callable(rule_params) else rule_params
        return _induced_point(f1, f2, p, manifold, base.with_m(m), params, rank_tol)

    points, flags = berezin.run_levels(task, m_list, executor)
    return berezin.summarize_study(points, poisson_bracket_fs(f1, f2, manifold.epsilon(p)), flags)
