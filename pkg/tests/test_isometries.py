import random

import pytest

from hermlat.errors import DegeneratePair, MismatchedPlane, NotSkew, ScaleViolation
from hermlat.isometries import (
    EichlerIsometry,
    Symmetry,
    apply_generator,
    compose_eichler,
    det_of,
    eichler_exists,
    eichler_to_symmetries,
    in_unitary_group,
    make_eichler,
    make_symmetry,
    matrix_of,
    symmetry_between,
    twist_by_skew,
)
from hermlat.lattice import HermitianLattice, orthogonal_sum, standard_H
from hermlat.linalg import (
    basis_vector,
    identity,
    mat_eq,
    mat_inv,
    mat_mul,
    vec_add,
    vec_scale,
)
from hermlat.oracle import random_unitary, random_symmetry, random_vector


def test_symmetry_action_examples(Q2sqrt2):
    H0 = standard_H(Q2sqrt2, 0)
    u, v = basis_vector(Q2sqrt2, 2, 0), basis_vector(Q2sqrt2, 2, 1)
    s = vec_add(u, v)
    g = make_symmetry(H0, s, Q2sqrt2.one)
    img = apply_generator(H0, g, u)
    assert all((a + b).is_zero() for a, b in zip(img, v))  # u -> -v
    # vectors orthogonal to s are fixed
    from hermlat.linalg import vec_sub

    w = vec_sub(u, v)
    assert H0.inner(w, s).is_zero()
    assert all((a - b).is_zero()
               for a, b in zip(apply_generator(H0, g, w), w))


def test_eichler_action(Q2sqrt2):
    L = orthogonal_sum(standard_H(Q2sqrt2, 0),
                       HermitianLattice(Q2sqrt2, ((Q2sqrt2.from_int(2),),)))
    u, v, w = (basis_vector(Q2sqrt2, 3, i) for i in range(3))
    e = make_eichler(L, u, v, w)
    assert all((a - b).is_zero() for a, b in zip(apply_generator(L, e, u), u))
    img = apply_generator(L, e, v)
    expect = vec_add(vec_add(vec_scale(e.mu, u), v), w)
    assert all((a - b).is_zero() for a, b in zip(img, expect))
    assert in_unitary_group(L, e)


def test_determinants(Q2sqrt2):
    L = orthogonal_sum(standard_H(Q2sqrt2, 0),
                       HermitianLattice(Q2sqrt2, ((Q2sqrt2.from_int(2),),)))
    u, v, w = (basis_vector(Q2sqrt2, 3, i) for i in range(3))
    e = make_eichler(L, u, v, w)
    assert det_of(L, e) == 1
    # hermitian sigma on an anisotropic vector: det = -1
    g = make_symmetry(L, w, Q2sqrt2.one)
    assert det_of(L, g) == -1
    # isotropic s: det = 1
    om = Q2sqrt2.special_skew(1)
    gi = make_symmetry(L, u, om)
    assert det_of(L, gi) == 1


def test_symmetry_inverse_law(Q2sqrt2):
    L = orthogonal_sum(standard_H(Q2sqrt2, 0),
                       HermitianLattice(Q2sqrt2, ((Q2sqrt2.from_int(2),),)))
    rng = random.Random(2)
    for _ in range(10):
        g = random_symmetry(L, rng)
        m = matrix_of(L, g)
        minv = matrix_of(L, g.inverse())
        assert mat_eq(mat_mul(m, minv), identity(Q2sqrt2, 3))


def test_conjugation_normality_law(Q2sqrt2):
    # f S_{s,sigma} f^{-1} = S_{f(s), sigma}
    L = orthogonal_sum(standard_H(Q2sqrt2, 0),
                       HermitianLattice(Q2sqrt2, ((Q2sqrt2.from_int(2),),)))
    rng = random.Random(6)
    for _ in range(6):
        g = random_symmetry(L, rng)
        f, _ = random_unitary(L, 2, rng.randrange(10 ** 6))
        lhs = mat_mul(mat_mul(f, matrix_of(L, g)), mat_inv(f))
        from hermlat.linalg import mat_vec

        moved = Symmetry(mat_vec(f, g.s), g.sigma)
        assert mat_eq(lhs, matrix_of(L, moved))


def test_in_unitary_group_counterexample(Q2i):
    H0 = standard_H(Q2i, 0)
    u, v = basis_vector(Q2i, 2, 0), basis_vector(Q2i, 2, 1)
    s = vec_add(u, v)
    # Tr(sigma) = 2 = <s,s> but sigma sits deeper than <L,s>: non-integral map
    sigma = Q2i.element(Q2i.base.from_int(2), Q2i.base.one)
    assert sigma.trace() == 2
    assert Q2i.vP(sigma) > 0
    g = Symmetry(s, sigma)
    assert not in_unitary_group(H0, g)


def test_symmetry_between(Q2sqrt2):
    L = HermitianLattice(Q2sqrt2, ((Q2sqrt2.one, Q2sqrt2.zero),
                                   (Q2sqrt2.zero, Q2sqrt2.from_int(-1))))
    x = basis_vector(Q2sqrt2, 2, 0)
    with pytest.raises(DegeneratePair):
        symmetry_between(L, x, x)
    # map e1 to -e1
    g = symmetry_between(L, x, vec_scale(Q2sqrt2.from_int(-1), x))
    assert g is not None
    img = apply_generator(L, g, x)
    assert all((a + b).is_zero() for a, b in zip(img, x))


def test_compose_and_twist(Q2sqrt2):
    L = orthogonal_sum(standard_H(Q2sqrt2, 0),
                       HermitianLattice(Q2sqrt2, ((Q2sqrt2.from_int(2), Q2sqrt2.zero),
                                                  (Q2sqrt2.zero, Q2sqrt2.from_int(6)))))
    u, v = basis_vector(Q2sqrt2, 4, 0), basis_vector(Q2sqrt2, 4, 1)
    w1, w2 = basis_vector(Q2sqrt2, 4, 2), basis_vector(Q2sqrt2, 4, 3)
    e1 = make_eichler(L, u, v, w1)
    e2 = make_eichler(L, u, v, w2)
    prod = compose_eichler(L, e1, e2)  # matrix identity checked inside
    assert mat_eq(mat_mul(matrix_of(L, e1), matrix_of(L, e2)),
                  matrix_of(L, prod))
    # identity composition
    e0 = EichlerIsometry(u, v, (Q2sqrt2.zero,) * 4, Q2sqrt2.zero)
    assert mat_eq(matrix_of(L, compose_eichler(L, e1, e0)), matrix_of(L, e1))
    # inverse through the composition formula
    inv = e1.inverse(L)
    prod2 = compose_eichler(L, e1, inv)
    assert all(c.is_zero() for c in prod2.y) and prod2.mu.is_zero()
    # skew twist: trace invariant of the new parameter is unchanged
    om = Q2sqrt2.special_skew(3)
    e3 = twist_by_skew(L, e1, om)
    puv = L.inner(u, v)
    assert ((e3.mu * puv).trace() - (e1.mu * puv).trace()).is_zero()
    with pytest.raises(NotSkew):
        twist_by_skew(L, e1, Q2sqrt2.zero)
    with pytest.raises(MismatchedPlane):
        compose_eichler(L, e1, EichlerIsometry(w1, v, (Q2sqrt2.zero,) * 4,
                                               Q2sqrt2.zero))


def test_eichler_exists_iff(Q2sqrt2):
    # w with Q(w) generating exactly the trace ideal: exists; one deeper
    # on the wrong side: does not
    e = Q2sqrt2.e
    L = orthogonal_sum(standard_H(Q2sqrt2, 0),
                       HermitianLattice(Q2sqrt2, ((Q2sqrt2.from_int(2), Q2sqrt2.zero),
                                                  (Q2sqrt2.zero, Q2sqrt2.from_int(1)))))
    u, v = basis_vector(Q2sqrt2, 4, 0), basis_vector(Q2sqrt2, 4, 1)
    w_good = basis_vector(Q2sqrt2, 4, 2)   # Q = 2, v_p = 1 = floor((0+e)/2)
    ok, mu = eichler_exists(L, u, v, w_good)
    assert ok and mu is not None
    w_bad = basis_vector(Q2sqrt2, 4, 3)    # Q = 1, below the trace ideal
    ok2, mu2 = eichler_exists(L, u, v, w_bad)
    assert not ok2
    # zero vector always works
    ok3, mu3 = eichler_exists(L, u, v, (Q2sqrt2.zero,) * 4)
    assert ok3 and mu3.is_zero()


def test_eichler_to_symmetries_unit_case(Q2sqrt2):
    L = orthogonal_sum(standard_H(Q2sqrt2, 0),
                       HermitianLattice(Q2sqrt2, ((Q2sqrt2.from_int(2),),)))
    u, v, w = (basis_vector(Q2sqrt2, 3, i) for i in range(3))
    e = make_eichler(L, u, v, w)
    syms = eichler_to_symmetries(L, e)
    assert syms is not None and len(syms) == 2
    prod = identity(Q2sqrt2, 3)
    for g in syms:
        assert isinstance(g, Symmetry)
        assert in_unitary_group(L, g)
        prod = mat_mul(prod, matrix_of(L, g))
    assert mat_eq(prod, matrix_of(L, e))


def test_eichler_reduction_residue_two_fallthrough(Q2sqrt2, Q2i):
    # crafted irreducible inputs: parity of the pair scale differs from e
    L = orthogonal_sum(standard_H(Q2sqrt2, 0), standard_H(Q2sqrt2, 0))
    u, v, w = (basis_vector(Q2sqrt2, 4, i) for i in (0, 1, 2))
    e = make_eichler(L, u, v, w, Q2sqrt2.special_skew(1))
    assert in_unitary_group(L, e)
    assert eichler_to_symmetries(L, e) is None
    L2 = orthogonal_sum(standard_H(Q2i, 1), standard_H(Q2i, 1))
    u2, v2, w2 = (basis_vector(Q2i, 4, i) for i in (0, 1, 2))
    e2 = make_eichler(L2, u2, v2, w2)
    assert in_unitary_group(L2, e2)
    assert eichler_to_symmetries(L2, e2) is None


def test_eichler_reduction_f4(F4ram):
    L = orthogonal_sum(standard_H(F4ram, 0), standard_H(F4ram, 0))
    u, v, w = (basis_vector(F4ram, 4, i) for i in (0, 1, 2))
    e = make_eichler(L, u, v, w, F4ram.special_skew(1))
    syms = eichler_to_symmetries(L, e)
    assert syms is not None
    prod = identity(F4ram, 4)
    for g in syms:
        prod = mat_mul(prod, matrix_of(L, g))
    assert mat_eq(prod, matrix_of(L, e))


def test_form_preservation_random(Q2sqrt2, inert2):
    rng = random.Random(12)
    for alg in (Q2sqrt2, inert2):
        L = orthogonal_sum(standard_H(alg, 0),
                           HermitianLattice(alg, ((alg.from_int(2),),)))
        for _ in range(5):
            g = random_symmetry(L, rng)
            x, y = random_vector(L, rng), random_vector(L, rng)
            gx = apply_generator(L, g, x)
            gy = apply_generator(L, g, y)
            assert (L.inner(gx, gy) - L.inner(x, y)).is_zero()


def test_fast_path_implies_exact_membership(Q2sqrt2, inert2):
    # whenever the ideal-theoretic sufficient condition accepts a symmetry,
    # the exact matrix test must accept it too
    from hermlat.isometries import gram_preserved
    from hermlat.linalg import is_integral_matrix

    rng = random.Random(77)
    for alg in (Q2sqrt2, inert2):
        L = orthogonal_sum(standard_H(alg, 0),
                           HermitianLattice(alg, ((alg.from_int(2),),)))
        for _ in range(8):
            g = random_symmetry(L, rng)
            vs = alg.valuation_P(g.sigma)
            fast = True
            for i in range(L.n):
                e = L.inner(basis_vector(alg, L.n, i), g.s)
                if e.is_zero():
                    continue
                ve = alg.valuation_P(e)
                if ve.a < vs.a or ve.b < vs.b:
                    fast = False
                    break
            if fast:
                m = matrix_of(L, g)
                assert is_integral_matrix(m) and gram_preserved(L, m)
