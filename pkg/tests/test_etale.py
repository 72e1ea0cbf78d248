import math
import random

import pytest

from hermlat.errors import ParityMismatch, WrongKind
from hermlat.etale import INF, NONNORM, NORM, EtaleAlgebra
from hermlat.oracle import enumerate_trace_image


def test_split_structure(split2, Q2):
    x = split2.element(Q2.from_int(3), Q2.from_int(5))
    assert x.conj().x0 == 5 and x.conj().x1 == 3
    assert x.trace() == 8
    assert x.norm() == 15


def test_ramified_norm_example(Q2sqrt2):
    s2 = Q2sqrt2.gen()
    assert (Q2sqrt2.one + s2).norm() == -1
    assert Q2sqrt2.one.trace() == 2
    assert Q2sqrt2.one.norm() == 1


def test_valuation_P(Q2sqrt2, inert3, split2, Q2, Q3):
    assert Q2sqrt2.vP(Q2sqrt2.gen()) == 1
    assert inert3.vP(inert3.from_int(3)) == 1
    v = split2.valuation_P(split2.element(Q2.from_int(2), Q2.one))
    assert (v.a, v.b) == (1, 0)


def test_different_exponents(Q3sqrt3, Q2i, Q2sqrt2):
    assert Q3sqrt3.e == 1
    assert Q2i.e == 2
    assert Q2sqrt2.e == 3  # = 2 v(2) + 1
    with pytest.raises(WrongKind):
        EtaleAlgebra.split(Q3sqrt3.base).u0()


def test_trace_ideal_closed_form(Q2sqrt2, Q2i, Q3sqrt3):
    assert Q2sqrt2.trace_ideal(0) == 1
    assert Q2i.trace_ideal(1) == 1
    assert Q3sqrt3.trace_ideal(0) == 0


@pytest.mark.parametrize("alg_name", ["Q2sqrt2", "Q2i", "Q3sqrt3"])
def test_trace_ideal_vs_enumeration(alg_name, request):
    alg = request.getfixturevalue(alg_name)
    for i in range(0, alg.e + 2):
        assert enumerate_trace_image(alg, i, alg.e + 3) == alg.trace_ideal(i)


def test_rho(Q2sqrt2, Q2i, Q3sqrt3, inert2):
    for alg in (Q2sqrt2, Q2i, Q3sqrt3):
        rho = alg.rho()
        assert rho.trace() == 1
        assert alg.vP(rho) == 1 - alg.e
    # maximal different exponent: rho = 1/2 exactly
    assert Q2sqrt2.rho() == Q2sqrt2.from_K(Q2sqrt2.base.one / 2)
    # inert: a unit of trace one exists
    assert inert2.rho().is_unit()


def test_skew_elements(Q2sqrt2, Q2i, inert2):
    om = Q2sqrt2.special_skew(1)
    assert om.trace().is_zero() and Q2sqrt2.vP(om) == 1
    with pytest.raises(ParityMismatch):
        Q2sqrt2.special_skew(2)
    om2 = Q2i.special_skew(2)
    assert om2.trace().is_zero() and Q2i.vP(om2) == 2
    eta = inert2.eta()
    assert eta.trace().is_zero() and eta.is_unit()


def test_u0(Q2sqrt2, Q2i):
    for alg in (Q2sqrt2, Q2i):
        u0 = alg.u0()
        assert u0.valuation() == alg.e - 1
        assert alg.norm_class(alg.base.one + u0) == NONNORM


def test_norm_class(Q2sqrt2, split2, inert2):
    assert split2.norm_class(split2.base.from_int(7)) == NORM
    assert inert2.norm_class(inert2.base.from_int(3)) == NORM
    assert Q2sqrt2.norm_class(Q2sqrt2.base.from_int(-1)) == NORM
    assert Q2sqrt2.norm_class(Q2sqrt2.base.from_int(3)) == NONNORM


def test_norm_class_coset_invariance(Q2sqrt2):
    rng = random.Random(5)
    K = Q2sqrt2.base
    for _ in range(10):
        a = K.from_int(2 * rng.randrange(0, 50) + 1)
        u = Q2sqrt2.element(K.from_int(2 * rng.randrange(0, 20) + 1),
                            K.from_int(rng.randrange(0, 20)))
        if not u.is_unit():
            continue
        assert Q2sqrt2.norm_class(a) == Q2sqrt2.norm_class(a * u.norm())


def test_normic_defect(Q2sqrt2):
    K = Q2sqrt2.base
    beta = Q2sqrt2.element(K.from_int(3), K.from_int(1))
    assert Q2sqrt2.normic_defect(beta.norm()) == INF
    u0 = Q2sqrt2.u0()
    assert Q2sqrt2.normic_defect(K.one + u0) == Q2sqrt2.e - 1 == 2
    assert Q2sqrt2.normic_defect(K.from_int(3)) == 2
    assert Q2sqrt2.normic_defect(K.from_int(-1)) == INF


def test_solve_trace(Q2sqrt2, split2, inert2):
    alg = Q2sqrt2
    assert alg.solve_trace(alg.one, alg.base.zero).is_zero()
    c = split2.element(split2.base.one, split2.base.one)
    mu = split2.solve_trace(c, split2.base.from_int(7))
    assert (mu * c).trace() == 7
    mu2 = inert2.solve_trace(inert2.one, inert2.base.one)
    assert mu2.trace() == 1


def test_units_approximated_by_norms(Q2sqrt2, Q2i):
    # every unit is congruent to a unit norm modulo p^(e-1)
    rng = random.Random(3)
    for alg in (Q2sqrt2, Q2i):
        K = alg.base
        for _ in range(8):
            a = K.from_int(2 * rng.randrange(0, 100) + 1)
            eps = alg.solve_norm_approx(a, alg.e - 1)
            diff = a - eps.norm()
            assert diff.is_zero() or diff.valuation() >= alg.e - 1


def test_residue_one_iff_norm_residue_one(Q2sqrt2):
    # alpha = 1 mod P iff Nr(alpha) = 1 mod p
    rng = random.Random(9)
    K = Q2sqrt2.base
    for _ in range(20):
        alpha = Q2sqrt2.element(K.from_int(rng.randrange(-20, 20)),
                                K.from_int(rng.randrange(-20, 20)))
        if alpha.is_zero():
            continue
        one_side = False
        d = alpha - Q2sqrt2.one
        lhs = d.is_zero() or Q2sqrt2.vP(d) >= 1
        n = alpha.norm() - K.one
        rhs = n.is_zero() or n.valuation() >= 1
        assert lhs == rhs


def test_conj_involution_random(Q2i):
    rng = random.Random(1)
    K = Q2i.base
    for _ in range(20):
        x = Q2i.element(K.from_int(rng.randrange(-30, 30)),
                        K.from_int(rng.randrange(-30, 30)))
        assert x.conj().conj() == x
        assert (x.trace() - (x + x.conj()).as_K()).is_zero()
        assert (x.norm() - (x * x.conj()).as_K()).is_zero()


def test_different_exponent_method(Q2sqrt2, split2):
    assert Q2sqrt2.different_exponent() == 3
    with pytest.raises(WrongKind):
        split2.different_exponent()
