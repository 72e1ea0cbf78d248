import random

import pytest

from hermlat.errors import RangeViolation
from hermlat.etale import NONNORM, NORM
from hermlat.lattice import (
    HermitianLattice,
    orthogonal_sum,
    standard_A,
    standard_H,
    standard_Hik,
)
from hermlat.linalg import basis_vector, cols_of, identity, mat_eq, mat_mul


def _unit_basis_change(lat, rng):
    """A random unimodular basis change (identity plus a nilpotent part)."""
    alg = lat.alg
    K = alg.base
    n = lat.n
    m = [[alg.one if i == j else alg.zero for j in range(n)] for i in range(n)]
    for _ in range(2 * n):
        i, j = rng.randrange(n), rng.randrange(n)
        if i == j:
            continue
        c = alg.element(K.from_int(rng.randrange(-3, 4)),
                        K.from_int(rng.randrange(-3, 4)))
        for k in range(n):
            m[k][j] = m[k][j] + c * m[k][i]
    return tuple(tuple(row) for row in m)


def transformed(lat, t):
    g = mat_mul(mat_mul(tuple(zip(*t)), lat.gram),
                tuple(tuple(e.conj() for e in row) for row in t))
    return HermitianLattice(lat.alg, g)


def test_inner_examples(Q2sqrt2):
    H0 = standard_H(Q2sqrt2, 0)
    u, v = basis_vector(Q2sqrt2, 2, 0), basis_vector(Q2sqrt2, 2, 1)
    assert H0.inner(u, u).is_zero()
    assert H0.inner(u, v) == Q2sqrt2.one
    from hermlat.linalg import vec_add

    assert H0.q_value(vec_add(u, v)) == 2


def test_scale_norm(Q2sqrt2):
    H1 = standard_H(Q2sqrt2, 1)
    assert H1.scale_exp() == 1
    assert H1.norm_exp() == (1 + Q2sqrt2.e) // 2
    one = HermitianLattice(Q2sqrt2, ((Q2sqrt2.one,),))
    assert one.scale_exp() == 0 and one.norm_exp() == 0
    g = ((Q2sqrt2.from_int(2), Q2sqrt2.from_int(1)),
         (Q2sqrt2.from_int(1), Q2sqrt2.from_int(2)))
    L = HermitianLattice(Q2sqrt2, g)
    assert L.scale_exp() == 0 and L.norm_exp() == 1


def test_scale_norm_inclusions(Q2sqrt2, Q2i, Q3sqrt3):
    # scale * different <= norm * O <= scale
    a_params = {3: (0, 1), 2: (1, 1), 1: (0, 0)}
    for alg in (Q2sqrt2, Q2i, Q3sqrt3):
        ai, ak = a_params[alg.e]
        for L in (standard_H(alg, 0), standard_H(alg, 2),
                  standard_A(alg, ai, ak),
                  HermitianLattice(alg, ((alg.from_int(3),),))):
            s, n = L.scale_exp(), L.norm_exp()
            assert s + alg.e >= alg.vK_in_P(n) >= s


def test_dual(Q2sqrt2, inert3):
    one = HermitianLattice(Q2sqrt2, ((Q2sqrt2.one, Q2sqrt2.zero),
                                     (Q2sqrt2.zero, Q2sqrt2.one)))
    t, gram = one.dual_sublattice(0)
    assert mat_eq(gram, one.gram)
    D = HermitianLattice(inert3, ((inert3.one, inert3.zero),
                                  (inert3.zero, inert3.from_int(3))))
    t, gram = D.dual_sublattice(1)
    assert gram[0][0] == 9 and gram[1][1] == 3
    # A containing the scale gives back L
    t, gram = D.dual_sublattice(0)
    assert mat_eq(gram, D.gram)


def test_is_modular(Q2sqrt2, inert3):
    assert standard_H(Q2sqrt2, 2).is_modular(2)
    D = HermitianLattice(inert3, ((inert3.one, inert3.zero),
                                  (inert3.zero, inert3.from_int(3))))
    assert not D.is_modular(0)
    assert not D.is_modular(1)
    line = HermitianLattice(Q2sqrt2, ((Q2sqrt2.from_int(2),),))
    assert line.is_modular(2)


def test_jordan_examples(Q2sqrt2, inert3):
    D = HermitianLattice(inert3, ((inert3.one, inert3.zero),
                                  (inert3.zero, inert3.from_int(3))))
    js = D.jordan_split()
    assert js.jordan_type() == ((1, 0, True), (1, 1, True))
    H1 = standard_H(Q2sqrt2, 1)
    assert H1.jordan_split().jordan_type() == ((2, 1, False),)
    g = ((Q2sqrt2.from_int(2), Q2sqrt2.from_int(1)),
         (Q2sqrt2.from_int(1), Q2sqrt2.from_int(2)))
    js2 = HermitianLattice(Q2sqrt2, g).jordan_split()
    assert js2.jordan_type() == ((2, 0, False),)


@pytest.mark.parametrize("mk", [
    lambda alg: standard_H(alg, 1),
    lambda alg: orthogonal_sum(standard_H(alg, 0),
                               HermitianLattice(alg, ((alg.from_int(2),),))),
    lambda alg: orthogonal_sum(standard_A(alg, 1, 1),
                               HermitianLattice(alg, ((alg.from_int(8),),))),
])
def test_jordan_roundtrip(Q2sqrt2, mk):
    L = mk(Q2sqrt2)
    rng = random.Random(7)
    t = _unit_basis_change(L, rng)
    L2 = transformed(L, t)
    js = L2.jordan_split()
    tt = js.transform
    g = mat_mul(mat_mul(tuple(zip(*tt)), L2.gram),
                tuple(tuple(e.conj() for e in row) for row in tt))
    assert mat_eq(g, js.block_diagonal())


def test_det_class(Q2sqrt2):
    H0 = standard_H(Q2sqrt2, 0)
    v, cls = H0.det_class()
    assert v == 0 and cls == NORM  # det = -1, and -1 is a norm here
    one2 = HermitianLattice(Q2sqrt2, ((Q2sqrt2.one, Q2sqrt2.zero),
                                      (Q2sqrt2.zero, Q2sqrt2.one)))
    assert one2.det_class() == (0, NORM)
    A = standard_A(Q2sqrt2, 0, 1)
    v, cls = A.det_class()
    assert v == 0 and cls == NONNORM  # -(1 + u0) with -1 a norm


def test_det_class_basis_invariance(Q2sqrt2, Q2i):
    rng = random.Random(21)
    for alg in (Q2sqrt2, Q2i):
        for L in (standard_H(alg, 1),
                  orthogonal_sum(standard_H(alg, 0),
                                 HermitianLattice(alg, ((alg.from_int(3),),)))):
            base = L.det_class()
            for _ in range(5):
                assert transformed(L, _unit_basis_change(L, rng)).det_class() \
                    == base


def test_standard_forms(Q2sqrt2):
    H0 = standard_H(Q2sqrt2, 0)
    assert H0.gram[0][0].is_zero() and H0.gram[0][1] == 1
    Hik = standard_Hik(Q2sqrt2, 1, 2)
    assert Hik.gram[0][0] == 4
    assert Hik.gram[1][1].is_zero()
    A = standard_A(Q2sqrt2, 0, 1)
    corner = A.gram[1][1].as_K()
    assert corner.valuation() == Q2sqrt2.e - 1 - 1  # v(u0 p^{-1}) = 1
    with pytest.raises(RangeViolation):
        standard_A(Q2sqrt2, 0, 2)
    with pytest.raises(RangeViolation):
        standard_Hik(Q2sqrt2, 0, 4)


def test_rescale(Q2sqrt2):
    H0 = standard_H(Q2sqrt2, 0)
    assert mat_eq(H0.rescale(1).gram, H0.gram)
    Lp = H0.rescale(2)
    assert Lp.scale_exp() == H0.scale_exp() + Q2sqrt2.vK_in_P(1)
    # unit rescale keeps scale and normality
    Lu = H0.rescale(3)
    assert Lu.scale_exp() == H0.scale_exp()
    assert Lu.is_normal() == H0.is_normal()


def test_normal_flag(Q2sqrt2):
    assert HermitianLattice(Q2sqrt2, ((Q2sqrt2.one,),)).is_normal()
    assert not standard_H(Q2sqrt2, 0).is_normal()
    assert not standard_A(Q2sqrt2, 0, 1).is_normal()


def test_primitive(Q2sqrt2, split2):
    H0 = standard_H(Q2sqrt2, 0)
    u = basis_vector(Q2sqrt2, 2, 0)
    assert H0.is_primitive(u)
    from hermlat.linalg import vec_scale

    assert not H0.is_primitive(vec_scale(Q2sqrt2.gen(), u))
    Ls = HermitianLattice(split2, ((split2.one, split2.zero),
                                   (split2.zero, split2.from_int(2))))
    e1 = basis_vector(split2, 2, 0)
    assert Ls.is_primitive(e1)
    assert not Ls.is_primitive(
        vec_scale(split2.element(split2.base.from_int(2), split2.base.one), e1))
