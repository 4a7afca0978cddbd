import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from cpnquant import berezin, embedding as emb
from cpnquant.cpn_core import QuantizationConfig
from cpnquant.hilbert import BasisSpec


def space_for(manifold, m):
    return emb.build_pullback(manifold, BasisSpec.build(QuantizationConfig(manifold.n, m)))


def hermitian(rng, d):
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (G + G.conj().T) / 2


@pytest.mark.parametrize("P,m", [(64, 4), (64, 8), (3, 4), (5, 4)])
def test_circle_rank_matches_vandermonde(P, m):
    S = emb.circle(P)
    sp = space_for(S, m)
    assert sp.rank == oracles.vandermonde_rank(S.sample_points[:, 0], m)
    assert sp.rank + sp.nullity == m + 1


def test_point_rank_and_generic_interpolation(rng):
    assert space_for(emb.point([0.3 + 0.1j]), 5).rank == 1
    vals = rng.normal(size=(4, 4))
    M = emb.custom(np.arange(4.0)[:, None], vals)
    assert space_for(M, 4).rank == 4  # 4 generic points in C^2, 15 monomials


def test_manifold_factories():
    T = emb.torus(100)
    assert T.n == 2 and T.dim == 2 and len(T) == 100
    z = T.epsilon([0.0, 0.0])
    assert np.allclose(z, [3.0, 0.0])
    Sph = emb.sphere(50)
    assert np.allclose(np.sum(np.abs(Sph.sample_points) ** 2, axis=1), 1.0)
    spec = {"type": "circle", "params": {"radius": 0.5, "center": [0.1, 0.0]}, "sample_count": 8, "seed": None}
    assert np.allclose(np.abs(emb.manifold_from_spec(spec).sample_points - 0.1), 0.5)
    with pytest.raises(ValueError):
        emb.manifold_from_spec({"type": "klein"})
    with pytest.raises(ValueError):
        emb.custom([[0.0]], [[1.0, 2.0, 3.0]])


def test_build_pullback_errors():
    with pytest.raises(ValueError):
        emb.build_pullback(emb.circle(8), BasisSpec.build(QuantizationConfig(2, 2)))
    dup = emb.custom([[0.0], [1.0]], [[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValueError):
        emb.build_pullback(dup, BasisSpec.build(QuantizationConfig(1, 2)))


def test_quotient_norms():
    sp = space_for(emb.circle(64), 4)
    b = sp.basis
    for I in b.indices:
        assert emb.pullback_norm(emb.pullback_of(b.unit(I), sp)) == pytest.approx(1.0, abs=1e-12)
    assert emb.pullback_norm(emb.pullback_of(np.zeros(len(b)), sp)) == 0.0


def test_quotient_norm_ignores_kernel(rng):
    sp = space_for(emb.circle(3), 4)
    assert sp.nullity == 2
    s = rng.normal(size=5) + 1j * rng.normal(size=5)
    k = sp.kernel_basis @ (rng.normal(size=2) + 1j * rng.normal(size=2))
    a, b = emb.pullback_of(s, sp), emb.pullback_of(s + k, sp)
    assert np.allclose(a.values, b.values)
    assert emb.pullback_norm(a) == pytest.approx(emb.pullback_norm(b), rel=1e-12)
    assert emb.pullback_norm(a) <= np.linalg.norm(s) + 1e-12
    lifted = emb.section_from_values(a.values, sp)
    assert np.allclose(lifted.rep, a.rep, atol=1e-10)


def test_pullback_coherent_states(rng):
    origin = emb.point([0.0])
    sp0 = space_for(origin, 3)
    assert np.allclose(emb.pullback_coherent_state([0.0], sp0).values, 1.0)
    S = emb.circle(40, radius=0.8, center=0.2)
    sp = space_for(S, 5)
    for _ in range(50):
        i, j = rng.integers(0, 40, 2)
        Pi = emb.pullback_coherent_state(S.samples[i], sp)
        Pj = emb.pullback_coherent_state(S.samples[j], sp)
        assert Pi.values[j] == pytest.approx(np.conj(Pj.values[i]), rel=1e-12)
        assert Pi.values[i].real == pytest.approx((1 + abs(S.sample_points[i, 0]) ** 2) ** 5, rel=1e-12)
        assert Pi(S.samples[j]) == pytest.approx(Pi.values[j], rel=1e-10)


def test_pullback_kernel_gram_psd():
    S = emb.circle(20, radius=1.3)
    sp = space_for(S, 6)
    G = np.array([emb.pullback_coherent_state(p, sp).values for p in S.samples])
    assert np.min(np.linalg.eigvalsh((G + G.conj().T) / 2)) > -1e-10 * np.max(np.abs(G))


def test_rawnsley_states():
    sp = space_for(emb.point([0.4 - 0.3j]), 3)
    eta = emb.orthonormal_pullback_basis(sp)
    phi = emb.rawnsley_pullback_state([0.0], sp, eta)
    assert np.allclose(phi.values, abs(sp.ambient_values([0.0]) @ eta[:, 0]) ** 2)

    S = emb.circle(32, radius=0.7)
    sp = space_for(S, 4)
    eta = emb.orthonormal_pullback_basis(sp)
    assert np.allclose(eta.conj().T @ eta, np.eye(sp.rank), atol=1e-10)
    p = S.samples[5]
    phi = emb.rawnsley_pullback_state(p, sp, eta)
    for k in range(sp.rank):
        assert np.vdot(phi.rep, eta[:, k]) == pytest.approx(sp.ambient_values(p) @ eta[:, k], abs=1e-8)
    # with trivial kernel both coherent families span the same sample-value space
    A = np.array([emb.rawnsley_pullback_state(q, sp, eta).values for q in S.samples]).T
    B = np.array([emb.pullback_coherent_state(q, sp).values for q in S.samples]).T
    Qa, _ = np.linalg.qr(A)
    Qb, _ = np.linalg.qr(B)
    ra, rb = Qa[:, :sp.rank], Qb[:, :sp.rank]
    assert np.linalg.norm(ra - rb @ (rb.conj().T @ ra)) < 1e-8


def test_induced_operators(rng):
    S = emb.circle(64)
    sp = space_for(S, 4)
    assert np.allclose(emb.induced_operator(np.eye(5), sp).matrix, np.eye(5))
    assert np.allclose(emb.induced_operator(3j * np.eye(5), sp).matrix, 3j * np.eye(5))
    A = hermitian(rng, 5)
    B = emb.induced_operator(A, sp)
    for I in sp.basis.indices:
        e = sp.basis.unit(I)
        out = B(emb.pullback_of(e, sp))
        assert np.allclose(out.values, emb.pullback_of(A @ e, sp).values, atol=1e-10)
    lift = emb.lift_operator(B)
    assert np.allclose(lift["operator"], A, atol=1e-10)
    assert lift["operator_norm"] <= lift["frobenius_norm"] + 1e-12
    assert emb.invariance_defect(A, sp) == 0.0


def test_invariance_defect_with_kernel(rng):
    sp = space_for(emb.circle(3), 4)
    assert emb.invariance_defect(np.eye(5), sp) < 1e-12
    assert emb.invariance_defect(hermitian(rng, 5), sp) > 1e-3
    B = emb.induced_operator(hermitian(rng, 5), sp)
    lift = emb.lift_operator(B)
    assert np.allclose(sp.kernel_projector @ lift["operator"], 0, atol=1e-10)


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_x_symbol_identity_and_transfer(p, q):
    S = emb.circle(64, radius=0.6)
    sp = space_for(S, 5)
    A = hermitian(np.random.default_rng(3), 6)
    B = emb.induced_operator(A, sp)
    assert emb.x_symbol(emb.induced_operator(np.eye(6), sp), [p], [q]) == pytest.approx(1.0, abs=1e-9)
    ref = berezin.covariant_symbol(A, S.epsilon([p]), S.epsilon([q]), sp.basis)
    assert abs(emb.x_symbol(B, [p], [q]) - ref) < 1e-8 * max(1, abs(ref))
    assert abs(emb.x_symbol(B, [p], [q], method="inner_product") - ref) < 1e-8 * max(1, abs(ref))


def test_x_symbol_diagonal_defined_with_kernel(rng):
    sp = space_for(emb.circle(3), 4)
    B = emb.induced_operator(hermitian(rng, 5), sp)
    for p in np.linspace(0, 2 * np.pi, 7):
        assert np.isfinite(emb.x_symbol(B, [p], [p]))


def test_induced_study_matches_ambient():
    f1, f2 = berezin.benchmark_pair()
    S = emb.circle(128, radius=0.5)
    ind = emb.induced_correspondence_study(f1, f2, [0.7], [4, 8, 16], S)
    amb = berezin.correspondence_study(f1, f2, S.epsilon([0.7]), [4, 8, 16])
    for key in ("e0", "e1"):
        assert np.allclose(getattr(ind, key), getattr(amb, key), atol=1e-8, rtol=0)
    assert abs(ind.kappa_fit - amb.kappa_fit) < 1e-8
    same = emb.induced_correspondence_study(f1, f1, [0.7], [4, 8], S)
    assert max(abs(c) for c in same.commutator) < 1e-12
