"""Generators of unitary groups: symmetries and rescaled Eichler isometries.

A symmetry S_{s,sigma} maps x to x - <x,s> sigma^{-1} s and requires
Tr(sigma) = <s,s>.  A rescaled Eichler isometry E_y^mu is attached to a
hyperbolic pair (u, v) splitting the lattice, a vector y in the orthogonal
complement of the pair with <L,y> inside <u,v>O, and mu with
Tr(mu <u,v>) = -<y,y>.

Membership in U(L) is always decided by the exact test (integral matrix that
preserves the Gram); the ideal-theoretic sufficient conditions are used as
fast paths only.
"""

from __future__ import annotations

from .errors import (
    DegeneratePair,
    HermlatError,
    InvariantViolation,
    MismatchedPlane,
    NotSkew,
    PrecisionLoss,
    ScaleViolation,
)
from .etale import EtaleAlgebra
from .linalg import (
    basis_vector,
    is_integral_matrix,
    mat_eq,
    mat_mul,
    mat_vec,
    vec_add,
    vec_scale,
    vec_sub,
)


class Symmetry:
    """Carrier for (s, sigma); the invariant Tr(sigma) = <s,s> is checked by
    make_symmetry, which knows the lattice."""

    __slots__ = ("s", "sigma")

    def __init__(self, s, sigma):
        self.s = tuple(s)
        self.sigma = sigma

    def inverse(self):
        return Symmetry(self.s, self.sigma.conj())

    def __repr__(self):
        return f"Symmetry(sigma={self.sigma.str_pair()})"


class EichlerIsometry:
    __slots__ = ("u", "v", "y", "mu")

    def __init__(self, u, v, y, mu):
        self.u = tuple(u)
        self.v = tuple(v)
        self.y = tuple(y)
        self.mu = mu

    def inverse(self, lat):
        pair = lat.inner(self.u, self.v)
        qy = lat.inner(self.y, self.y)
        mu2 = -self.mu - (qy / pair)
        return EichlerIsometry(self.u, self.v,
                               tuple(-c for c in self.y), mu2)

    def __repr__(self):
        return f"EichlerIsometry(mu={self.mu.str_pair()})"


def make_symmetry(lat, s, sigma):
    """Symmetry with the invariant Tr(sigma) = <s,s> verified against lat."""
    qs = lat.inner(s, s).as_K()
    if not (sigma.trace() - qs).is_zero():
        raise InvariantViolation("Tr(sigma) != <s,s>")
    if sigma.is_zero():
        raise InvariantViolation("sigma = 0")
    return Symmetry(s, sigma)


def apply_generator(lat, g, x):
    if isinstance(g, Symmetry):
        coeff = lat.inner(x, g.s) / g.sigma
        return vec_sub(x, vec_scale(coeff, g.s))
    if isinstance(g, EichlerIsometry):
        u, v, y, mu = g.u, g.v, g.y, g.mu
        pvu = lat.inner(v, u)
        puv = lat.inner(u, v)
        a = lat.inner(x, u) / pvu
        b = mu * a - lat.inner(x, y) / puv
        return vec_add(x, vec_add(vec_scale(a, y), vec_scale(b, u)))
    raise HermlatError(f"not a generator: {g!r}")


def _gram_conj_vec(lat, s):
    """The vector G * conj(s), so that <x, s> = sum x_i (G conj(s))_i."""
    return mat_vec(lat.gram, tuple(c.conj() for c in s))


def matrix_of(lat, g):
    alg = lat.alg
    n = lat.n
    if isinstance(g, Symmetry):
        gs = _gram_conj_vec(lat, g.s)
        sinv = alg.one / g.sigma
        coeffs = [e * sinv for e in gs]
        return tuple(tuple((alg.one if i == j else alg.zero)
                           - coeffs[j] * g.s[i]
                           for j in range(n)) for i in range(n))
    if isinstance(g, EichlerIsometry):
        gu = _gram_conj_vec(lat, g.u)
        gy = _gram_conj_vec(lat, g.y)
        pvu = lat.inner(g.v, g.u)
        puv = lat.inner(g.u, g.v)
        a = [e / pvu for e in gu]
        b = [g.mu * aj - ej / puv for aj, ej in zip(a, gy)]
        return tuple(tuple((alg.one if i == j else alg.zero)
                           + a[j] * g.y[i] + b[j] * g.u[i]
                           for j in range(n)) for i in range(n))
    raise HermlatError(f"not a generator: {g!r}")


def det_of(lat, g):
    alg = lat.alg
    if isinstance(g, EichlerIsometry):
        return alg.one
    qs = lat.inner(g.s, g.s)
    if qs.is_zero():
        return alg.one
    return -(g.sigma.conj() / g.sigma)


def gram_preserved(lat, m):
    mt = tuple(zip(*m))
    mc = tuple(tuple(e.conj() for e in row) for row in m)
    return mat_eq(mat_mul(mat_mul(mt, lat.gram), mc), lat.gram)


def in_unitary_group(lat, g_or_matrix):
    """Exact membership test: integral matrix preserving the Gram."""
    m = g_or_matrix
    if isinstance(m, (Symmetry, EichlerIsometry)):
        # fast sufficient path for symmetries: <L, s> inside sigma * O
        if isinstance(m, Symmetry):
            alg = lat.alg
            ok_fast = True
            try:
                vs = alg.valuation_P(m.sigma)
                for i in range(lat.n):
                    e = lat.inner(basis_vector(alg, lat.n, i), m.s)
                    if e.is_zero():
                        continue
                    ve = alg.valuation_P(e)
                    if ve.a < vs.a or ve.b < vs.b:
                        ok_fast = False
                        break
            except HermlatError:
                ok_fast = False
            if ok_fast:
                return True
        m = matrix_of(lat, m)
    return is_integral_matrix(m) and gram_preserved(lat, m)


def symmetry_between(lat, x, xp):
    """Symmetry of the ambient space mapping x to xp, if it stabilizes L.

    Requires <x,x> = <xp,xp>; raises DegeneratePair when <x, x-xp> = 0."""
    s = vec_sub(x, xp)
    sigma = lat.inner(x, s)
    if sigma.is_zero():
        raise DegeneratePair("<x, x - x'> = 0")
    qdiff = lat.inner(x, x) - lat.inner(xp, xp)
    if not qdiff.is_zero():
        raise InvariantViolation("<x,x> != <x',x'>")
    g = Symmetry(s, sigma)
    if not in_unitary_group(lat, g):
        return None
    img = apply_generator(lat, g, x)
    if not all((a - b).is_zero() for a, b in zip(img, xp)):
        raise PrecisionLoss("symmetry failed to map x to x'")
    return g


def compose_eichler(lat, e1, e2):
    """E1 ∘ E2 for Eichler isometries on the same hyperbolic pair."""
    if not (_same_vec(e1.u, e2.u) and _same_vec(e1.v, e2.v)):
        raise MismatchedPlane("different hyperbolic pairs")
    puv = lat.inner(e1.u, e1.v)
    w = vec_add(e1.y, e2.y)
    mu = e1.mu + e2.mu - lat.inner(e2.y, e1.y) / puv
    out = EichlerIsometry(e1.u, e1.v, w, mu)
    lhs = mat_mul(matrix_of(lat, e1), matrix_of(lat, e2))
    if not mat_eq(lhs, matrix_of(lat, out)):
        raise PrecisionLoss("composition identity failed at precision")
    return out


def twist_by_skew(lat, e, omega):
    """S_{u,omega} ∘ E_y^mu = E_y^(mu - <v,u>/omega) for skew omega."""
    if omega.is_zero() or not omega.trace().is_zero():
        raise NotSkew("omega must be a nonzero skew element")
    mu2 = e.mu - lat.inner(e.v, e.u) / omega
    out = EichlerIsometry(e.u, e.v, e.y, mu2)
    s = Symmetry(e.u, omega)
    lhs = mat_mul(matrix_of(lat, s), matrix_of(lat, e))
    if not mat_eq(lhs, matrix_of(lat, out)):
        raise PrecisionLoss("skew twist identity failed at precision")
    return out


def _same_vec(a, b):
    return all((x - y).is_zero() for x, y in zip(a, b))


def eichler_exists(lat, u, v, w):
    """Whether some E_w^mu exists on the pair (u, v); returns (bool, mu)."""
    alg = lat.alg
    puv = lat.inner(u, v)
    vp = alg.valuation_P(puv)
    for k in range(lat.n):
        e = lat.inner(w, basis_vector(alg, lat.n, k))
        if e.is_zero():
            continue
        ve = alg.valuation_P(e)
        if ve.a < vp.a or ve.b < vp.b:
            raise ScaleViolation("<w, L> exceeds <u,v>O")
    qw = lat.inner(w, w).as_K()
    if qw.is_zero():
        return True, alg.zero
    if qw.valuation() < alg.trace_ideal_of(puv):
        return False, None
    return True, alg.solve_trace(puv, -qw)


def make_eichler(lat, u, v, y, mu=None):
    """Eichler isometry on the pair (u, v); solves for mu when not given."""
    alg = lat.alg
    puv = lat.inner(u, v)
    qy = lat.inner(y, y).as_K()
    if mu is None:
        mu = alg.solve_trace(puv, -qy)
    tri = (mu * puv).trace() + qy
    if not tri.is_zero():
        raise InvariantViolation("Tr(mu <u,v>) != -<y,y>")
    return EichlerIsometry(u, v, y, mu)


def _pair_scale(alg, puv):
    v = alg.valuation_P(puv)
    if v.a != v.b:
        raise InvariantViolation("pair product ideal is not conjugation-stable")
    return v.a


def eichler_parameters_from_matrix(lat, u, v, m):
    """Recover (y, mu) of an Eichler isometry on (u, v) from its matrix."""
    alg = lat.alg
    img_v = mat_vec(m, v)
    puv = lat.inner(u, v)
    mu = lat.inner(img_v, v) / puv.conj()
    # img_v = mu*u + v + y
    y = vec_sub(vec_sub(img_v, v), vec_scale(mu, u))
    return y, mu


def eichler_to_symmetries(lat, e, fuel=10):
    """Rewrite a rescaled Eichler isometry as a product of symmetries.

    Returns the list (product of the members' matrices equals the matrix of
    e), or None in the ramified dyadic residue-two case when no rewriting
    rule applies."""
    if not in_unitary_group(lat, e):
        raise InvariantViolation("Eichler isometry does not preserve L")
    out = _reduce_eichler(lat, e, fuel)
    if out is None:
        return None
    prod = None
    for g in out:
        mg = matrix_of(lat, g)
        prod = mg if prod is None else mat_mul(prod, mg)
        if not in_unitary_group(lat, g):
            raise PrecisionLoss("reduction produced a non-member symmetry")
    if prod is None:
        from .linalg import identity
        prod = identity(lat.alg, lat.n)
    if not mat_eq(prod, matrix_of(lat, e)):
        raise PrecisionLoss("symmetry product does not reproduce the isometry")
    return out


def _reduce_eichler(lat, e, fuel):
    alg = lat.alg
    if fuel <= 0:
        raise PrecisionLoss("Eichler reduction recursion exhausted")
    u, v, y, mu = e.u, e.v, e.y, e.mu
    puv = lat.inner(u, v)
    pvu = lat.inner(v, u)

    if all(c.is_zero() for c in y):
        if mu.is_zero():
            return []
        sigma0 = -(pvu / mu)
        s = Symmetry(u, sigma0)
        if not mat_eq(matrix_of(lat, s), matrix_of(lat, e)):
            raise PrecisionLoss("shear-to-symmetry identity failed")
        return [s]

    if mu.is_unit():
        s1 = Symmetry(vec_add(vec_scale(mu, u), y), -(mu.conj() * pvu))
        s2 = Symmetry(y, -(mu * puv))
        lhs = mat_mul(matrix_of(lat, s1), matrix_of(lat, s2))
        if not mat_eq(lhs, matrix_of(lat, e)):
            raise PrecisionLoss("two-symmetry identity failed")
        return [s1, s2]

    if alg.kind != EtaleAlgebra.RAMIFIED:
        return _reduce_unramified(lat, e, fuel)
    return _reduce_ramified(lat, e, fuel)


def _twist_and_recurse(lat, e, omega, fuel):
    e2 = twist_by_skew(lat, e, omega)
    rest = _reduce_eichler(lat, e2, fuel - 1)
    if rest is None:
        return None
    return [Symmetry(e.u, -omega)] + rest


def _reduce_unramified(lat, e, fuel):
    alg = lat.alg
    K = alg.base
    puv = lat.inner(e.u, e.v)
    pvu = lat.inner(e.v, e.u)
    i = _pair_scale(alg, puv)
    # skew elements of valuation i with a free unit multiple
    for lam in K.residue_lifts():
        if lam.is_zero():
            continue
        if alg.kind == EtaleAlgebra.SPLIT:
            a = lam * K.uniformizer_pow(i)
            omega = alg.element(a, -a)
        else:
            omega = alg.eta() * alg.from_K(lam * K.uniformizer_pow(i))
        mu2 = e.mu - pvu / omega
        if mu2.is_unit():
            return _twist_and_recurse(lat, e, omega, fuel)
    if alg.kind != EtaleAlgebra.SPLIT:
        raise PrecisionLoss("no unit-producing skew twist found (inert)")
    # split residue field F_2, mu congruent to the twist unit in one slot:
    # compose with the idempotent-weighted symmetry from the four-case proof
    one, zero = K.one, K.zero
    for idem, sig in (((zero, one), (-1, 1)), ((one, zero), (1, -1))):
        s = vec_add(e.u, vec_scale(alg.element(*idem), e.y))
        sigma = alg.element(K.from_int(sig[0]), K.from_int(sig[1]))
        qs = lat.inner(s, s).as_K()
        if not (sigma.trace() - qs).is_zero():
            continue
        g = Symmetry(s, sigma)
        if not in_unitary_group(lat, g):
            continue
        m2 = mat_mul(matrix_of(lat, g), matrix_of(lat, e))
        y2, mu2 = eichler_parameters_from_matrix(lat, e.u, e.v, m2)
        e2 = EichlerIsometry(e.u, e.v, y2, mu2)
        if not mat_eq(matrix_of(lat, e2), m2):
            continue
        if not mu2.is_unit():
            continue
        rest = _reduce_eichler(lat, e2, fuel - 1)
        if rest is None:
            return None
        return [g.inverse()] + rest
    raise PrecisionLoss("split residue-two reduction failed")


def _reduce_ramified(lat, e, fuel):
    alg = lat.alg
    puv = lat.inner(e.u, e.v)
    pvu = lat.inner(e.v, e.u)
    i = _pair_scale(alg, puv)
    e_exp = alg.e

    # (e): <y, L> strictly inside P^i
    wl = None
    for k in range(lat.n):
        q = lat.inner(e.y, basis_vector(alg, lat.n, k))
        if q.is_zero():
            continue
        vq = alg.vP(q)
        wl = vq if wl is None else min(wl, vq)
    if wl is not None and wl > i:
        if alg.vP(e.mu) <= 1:
            s1 = Symmetry(vec_add(vec_scale(e.mu, e.u), e.y),
                          -(e.mu.conj() * pvu))
            s2 = Symmetry(e.y, -(e.mu * puv))
            if in_unitary_group(lat, s2):
                lhs = mat_mul(matrix_of(lat, s1), matrix_of(lat, s2))
                if mat_eq(lhs, matrix_of(lat, e)):
                    return [s1, s2]
        for t in (i, i - 1):
            if (t - e_exp) % 2 == 0:
                omega = alg.special_skew(t)
                return _twist_and_recurse(lat, e, omega, fuel)

    # (c): matching parity lets a skew twist shift mu to a unit
    if (i - e_exp) % 2 == 0:
        omega = alg.special_skew(i)
        mu2 = e.mu - pvu / omega
        if mu2.is_unit():
            return _twist_and_recurse(lat, e, omega, fuel)
        raise PrecisionLoss("parity twist failed to produce a unit")

    if alg.base.q >= 4:
        return _split_vector_reduction(lat, e, fuel)
    return None


def _split_vector_reduction(lat, e, fuel):
    """Residue field >= 4: split y into two pieces whose form values generate
    the full trace ideal, reduce each piece through the unit case."""
    alg = lat.alg
    K = alg.base
    u, v, w = e.u, e.v, e.y
    puv = lat.inner(u, v)
    pvu = lat.inner(v, u)
    i = _pair_scale(alg, puv)
    t_exp = alg.trace_ideal(i)

    # projection of the ambient basis onto the orthogonal complement of (u,v)
    perp = []
    for k in range(lat.n):
        b = basis_vector(alg, lat.n, k)
        m = vec_sub(b, vec_add(vec_scale(lat.inner(b, u) / pvu, v),
                               vec_scale(lat.inner(b, v) / puv, u)))
        perp.append(m)
    t_vec = None
    for m in perp:
        q = lat.inner(w, m)
        if q.is_zero():
            continue
        if alg.trace_ideal_of(q) == t_exp:
            lam = alg.solve_trace(q, K.uniformizer_pow(t_exp))
            cand = vec_scale(lam.conj(), m)
            val = lat.inner(w, cand).trace()
            if not val.is_zero() and val.valuation() == t_exp:
                t_vec = cand
                break
    if t_vec is None:
        raise PrecisionLoss("no trace-attaining partner for the split step")

    zeta = None
    for lam in K.residue_lifts():
        if lam.is_zero() or (lam - 1).is_zero():
            continue
        if lam.residue() != tuple([0] * K.f) and (lam - 1).valuation() == 0:
            zeta = lam
            break
    if zeta is None:
        raise PrecisionLoss("residue field too small for the zeta scan")

    qw = lat.q_value(w)
    qt = lat.q_value(t_vec)
    trwt = lat.inner(w, t_vec).trace()
    vqt = None if qt.is_zero() else qt.valuation()
    if vqt is not None and vqt < t_exp:
        j = t_exp - vqt
        wp = vec_add(w, vec_scale(alg.uniformizer_pow(j), t_vec))
    elif vqt is None or vqt > t_exp:
        wp = vec_add(vec_scale(alg.from_K(zeta), w), t_vec)
    else:
        theta = trwt / qt
        alpha = None
        for lam in K.residue_lifts():
            if lam.is_zero():
                continue
            c1 = lam + zeta * theta
            c2 = lam + (zeta - 1) * theta
            if (not c1.is_zero() and c1.valuation() == 0
                    and not c2.is_zero() and c2.valuation() == 0):
                alpha = lam
                break
        if alpha is None:
            raise PrecisionLoss("no alpha avoiding both residue constraints")
        wp = vec_add(vec_scale(alg.from_K(zeta), w),
                     vec_scale(alg.from_K(alpha), t_vec))

    w2 = vec_sub(w, wp)
    for piece in (wp, w2):
        qp = lat.q_value(piece)
        if qp.is_zero() or qp.valuation() != t_exp:
            raise PrecisionLoss("split piece misses the trace ideal exactly")
    mu1 = alg.solve_trace(puv, -lat.q_value(wp))
    mu2 = alg.solve_trace(puv, -lat.q_value(w2))
    e1 = EichlerIsometry(u, v, wp, mu1)
    e2 = EichlerIsometry(u, v, w2, mu2)
    estar = compose_eichler(lat, e2, e1)
    head = []
    dmu = estar.mu - e.mu
    if not dmu.is_zero():
        omega = pvu / dmu
        if not omega.trace().is_zero():
            raise PrecisionLoss("connection element is not skew")
        e_check = twist_by_skew(lat, estar, omega)
        if not mat_eq(matrix_of(lat, e_check), matrix_of(lat, e)):
            raise PrecisionLoss("connection twist failed")
        head = [Symmetry(u, omega)]
    r1 = _reduce_eichler(lat, e2, fuel - 1)
    r2 = _reduce_eichler(lat, e1, fuel - 1)
    if r1 is None or r2 is None:
        return None
    return head + r1 + r2
