"""Constructive factorization of unitary-group elements into symmetries and
rescaled Eichler isometries.

The driver peels the lattice one hyperbolic plane, line, or subnormal plane
at a time, emitting generators that align the images of the peeled basis
vectors; the remaining map fixes the peeled part pointwise and the recursion
continues on the orthogonal complement.  Every emitted generator is verified
for membership, and the final product is checked against the input matrix.
"""

from __future__ import annotations

from .errors import (
    NotAnIsometry,
    PrecisionLoss,
    UnsupportedCase,
    VerificationFailed,
)
from .etale import EtaleAlgebra
from .classify import (
    _arrange_first_block,
    _block_scale,
    _cross_block_attempt,
    _jordan_cols,
    isotropy_refine,
    normalize_plane,
    peel_lines_and_planes,
    plane_standard_form,
    split_off_pair,
)
from .isometries import (
    EichlerIsometry,
    Symmetry,
    _pair_scale,
    apply_generator,
    det_of,
    eichler_to_symmetries,
    in_unitary_group,
    make_eichler,
    make_symmetry,
    matrix_of,
)
from .lattice import _gram_of, _norm_attainer, _norm_exp_of_gram
from .linalg import (
    cols_of,
    identity,
    is_integral_matrix,
    mat_mul,
    mat_vec,
    vec_add,
    vec_scale,
    vec_sub,
)


class Factorization:
    """Ordered generator list with a verification certificate."""

    def __init__(self, lattice, generators, residual_precision,
                 symmetries_only, contains_eichler):
        self.lattice = lattice
        self.generators = list(generators)
        self.residual_precision = residual_precision
        self.symmetries_only = symmetries_only
        self.contains_eichler = contains_eichler

    def matrix(self):
        prod = identity(self.lattice.alg, self.lattice.n)
        for g in self.generators:
            prod = mat_mul(prod, matrix_of(self.lattice, g))
        return prod

    def __len__(self):
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)

    def __repr__(self):
        kinds = "".join("S" if isinstance(g, Symmetry) else "E"
                        for g in self.generators)
        return f"Factorization([{kinds}])"


def _residual_precision(lat, diff):
    """Smallest absolute precision among the entries of a matrix that is zero
    at working precision."""
    best = None
    for row in diff:
        for e in row:
            for comp in (e.x0, e.x1):
                ap = comp.field.d * (comp.shift + comp.ncap)
                best = ap if best is None else min(best, ap)
    return best


def verify_factorization(lat, phi, factorization):
    """Recompute the product, check each factor's membership and determinant
    consistency; returns a certificate dict or raises VerificationFailed."""
    prod = identity(lat.alg, lat.n)
    for idx, g in enumerate(factorization):
        if not in_unitary_group(lat, g):
            raise VerificationFailed(
                f"factor {idx} is not in U(L)", factor_index=idx)
        prod = mat_mul(prod, matrix_of(lat, g))
    diff = tuple(tuple(a - b for a, b in zip(r1, r2))
                 for r1, r2 in zip(prod, phi))
    for row in diff:
        for e in row:
            if not e.is_zero():
                raise VerificationFailed("product does not reproduce the input")
    det_prod = None
    for g in factorization:
        d = det_of(lat, g)
        det_prod = d if det_prod is None else det_prod * d
    if det_prod is None:
        det_prod = lat.alg.one
    from .linalg import mat_det

    det_phi = mat_det(phi)
    if not (det_phi - det_prod).is_zero():
        raise VerificationFailed("determinant mismatch")
    return {
        "residual_precision": _residual_precision(lat, diff),
        "factors": len(factorization.generators),
        "det_consistent": True,
    }


def _check_input(lat, phi):
    if len(phi) != lat.n or any(len(r) != lat.n for r in phi):
        raise NotAnIsometry("matrix size does not match the lattice rank")
    if not is_integral_matrix(phi):
        raise NotAnIsometry("matrix is not integral")
    if not in_unitary_group(lat, phi):
        raise NotAnIsometry("matrix does not preserve the hermitian form")


class _Driver:
    def __init__(self, lat):
        self.lat = lat
        self.out = []

    def emit(self, g, phi):
        """Record g (its inverse joins the output word) and return g * phi."""
        lat = self.lat
        mg = matrix_of(lat, g)
        if not in_unitary_group(lat, mg):
            raise PrecisionLoss("constructed generator does not preserve L")
        inv = g.inverse(lat) if isinstance(g, EichlerIsometry) else g.inverse()
        self.out.append(inv)
        return mat_mul(mg, phi)

    def emit_symmetries(self, syms, phi):
        """Apply a product s_1 ∘ ... ∘ s_r to phi, emitting inverses."""
        for g in reversed(syms):
            phi = self.emit(g, phi)
        return phi


def factor_unitary(lat, phi, reduce_eichler=True):
    """Factor phi in U(L) into symmetries and rescaled Eichler isometries.

    When reduce_eichler is set, a final pass rewrites Eichler factors as
    symmetries wherever the rewriting rules apply (always possible except in
    the ramified dyadic residue-two case)."""
    _check_input(lat, phi)
    drv = _Driver(lat)
    cols = list(cols_of(identity(lat.alg, lat.n)))
    _drive(drv, cols, phi)
    gens = drv.out
    if reduce_eichler:
        gens = _reduction_pass(lat, gens)
    prod = identity(lat.alg, lat.n)
    for g in gens:
        prod = mat_mul(prod, matrix_of(lat, g))
    diff = tuple(tuple(a - b for a, b in zip(r1, r2))
                 for r1, r2 in zip(prod, phi))
    for row in diff:
        for e in row:
            if not e.is_zero():
                raise PrecisionLoss("driver product does not match the input")
    has_eichler = any(isinstance(g, EichlerIsometry) for g in gens)
    return Factorization(lat, gens, _residual_precision(lat, diff),
                         symmetries_only=not has_eichler,
                         contains_eichler=has_eichler)


def _reduction_pass(lat, gens):
    out = []
    for g in gens:
        if isinstance(g, EichlerIsometry):
            syms = eichler_to_symmetries(lat, g)
            if syms is not None:
                out.extend(syms)
                continue
        out.append(g)
    return out


def _is_identity_on(lat, phi, cols):
    for c in cols:
        img = mat_vec(phi, c)
        if not all((a - b).is_zero() for a, b in zip(img, c)):
            return False
    return True


def _drive(drv, cols, phi):
    lat = drv.lat
    while cols:
        if _is_identity_on(lat, phi, cols):
            return phi
        if lat.alg.kind == EtaleAlgebra.RAMIFIED:
            cols, phi = _drive_ramified_step(drv, cols, phi)
        else:
            cols, phi = _drive_unramified_step(drv, cols, phi)
    return phi


# ---------------------------------------------------------------------------
# unramified driver
# ---------------------------------------------------------------------------


def _drive_unramified_step(drv, cols, phi):
    lat = drv.lat
    alg = lat.alg
    arr = _arrange_first_block(lat, cols)
    if arr["pair"] is not None:
        u, v = arr["pair"]
        phi = _peel_hyperbolic_unramified(drv, cols, phi, u, v)
        rest = split_off_pair(lat, cols, u, v)
        return rest, phi
    lines = arr["lines"]
    a = lines[0]
    phi = _peel_unramified_line(drv, cols, phi, a)
    rest = _complement_of_vector(lat, cols, a)
    return rest, phi


def _complement_of_vector(lat, cols, x):
    qx = lat.inner(x, x)
    alg = lat.alg
    cg = _gram_of(lat, cols)
    from .linalg import mat_solve

    coords = mat_solve(tuple(zip(*cg)), tuple(lat.inner(x, c) for c in cols))
    keep = None
    for idx, c in enumerate(coords):
        if not c.is_zero() and c.is_unit():
            keep = [col for j, col in enumerate(cols) if j != idx]
            break
    if keep is None and alg.kind == EtaleAlgebra.SPLIT:
        # the unit coordinate may sit in different slots; swap in a mixed
        # idempotent column so each slot drops its own direction
        i1 = next((i for i, c in enumerate(coords)
                   if not c.x0.is_zero() and c.x0.valuation() == 0), None)
        i2 = next((i for i, c in enumerate(coords)
                   if not c.x1.is_zero() and c.x1.valuation() == 0), None)
        if i1 is not None and i2 is not None and i1 != i2:
            K = alg.base
            mixed = vec_add(vec_scale(alg.element(K.one, K.zero), cols[i2]),
                            vec_scale(alg.element(K.zero, K.one), cols[i1]))
            keep = [col for j, col in enumerate(cols) if j not in (i1, i2)]
            keep.append(mixed)
    if keep is None:
        raise PrecisionLoss("vector is not part of a basis of the span")
    rest = []
    for c in keep:
        coeff = lat.inner(c, x) / qx
        rest.append(vec_sub(c, vec_scale(coeff, x)))
    return rest


def map_isotropic(lat, cols, u_from, u_to):
    """Product of at most two symmetries of L mapping u_from to u_to, for
    isotropic vectors pairing onto the scale of span(cols); unramified kinds."""
    alg = lat.alg
    scale = _block_scale_sym(alg, _gram_of(lat, cols))
    pair = lat.inner(u_from, u_to)
    if _attains(alg, pair, scale):
        s = vec_sub(u_from, u_to)
        sigma = lat.inner(u_from, s)
        g = make_symmetry(lat, s, sigma)
        if not in_unitary_group(lat, g):
            raise PrecisionLoss("direct isotropic symmetry not in U(L)")
        return [g]
    y = _isotropic_bridge(lat, cols, u_from, u_to, scale)
    g1 = map_isotropic(lat, cols, u_from, y)
    g2 = map_isotropic(lat, cols, y, u_to)
    return g2 + g1  # composition order: apply g1 first


def _attains(alg, val, scale):
    if val.is_zero():
        return False
    v = alg.valuation_P(val)
    return v.a == scale and v.b == scale


def _block_scale_sym(alg, gram):
    from .lattice import _min_vP_sym

    return _min_vP_sym(alg, gram)


def _isotropic_bridge(lat, cols, u, up, scale):
    """Isotropic y with <u,y> and <u',y> both attaining the scale."""
    alg = lat.alg
    K = alg.base
    if alg.kind == EtaleAlgebra.SPLIT and scale != 0:
        # the slot bookkeeping below wants pairing value 1; rescale to scale 0
        latr = lat.rescale(K.uniformizer_pow(-scale))
        return _isotropic_bridge(latr, cols, u, up, 0)
    cands = []
    y1 = y2 = None
    for c in cols:
        if y1 is None and _attains(alg, lat.inner(u, c), scale):
            y1 = c
        if y2 is None and _attains(alg, lat.inner(up, c), scale):
            y2 = c
    if y1 is None or y2 is None:
        raise PrecisionLoss("no scale-attaining partners for the bridge")
    for x in (y1, y2, vec_add(y1, y2)):
        if _attains(alg, lat.inner(u, x), scale) and \
           _attains(alg, lat.inner(up, x), scale):
            cands.append(x)
    if not cands and alg.kind == EtaleAlgebra.SPLIT:
        # idempotent-weighted combinations reach mixed slot patterns
        one, zero = K.one, K.zero
        for lam in ((one, zero), (zero, one)):
            for mu in ((one, zero), (zero, one)):
                x = vec_add(vec_scale(alg.element(*lam), y1),
                            vec_scale(alg.element(*mu), y2))
                if _attains(alg, lat.inner(u, x), scale) and \
                   _attains(alg, lat.inner(up, x), scale):
                    cands.append(x)
                    break
            if cands:
                break
    if not cands:
        raise PrecisionLoss("bridge search failed")
    x = cands[0]
    qx = lat.q_value(x)
    if qx.is_zero():
        y = x
    elif alg.kind == EtaleAlgebra.SPLIT:
        # normalize <x,u> = 1, then shift by alpha*u with Tr(alpha) = -Q;
        # the nonzero slot of alpha goes where <u,u'> is not a unit
        xt = vec_scale(alg.one / lat.inner(x, u), x)
        qxt = lat.q_value(xt)
        puu = lat.inner(u, up)
        v0 = puu.x0.valuation_or_none()
        slot1_unit = v0 == 0
        if slot1_unit:
            alpha = alg.element(K.zero, -qxt)
        else:
            alpha = alg.element(-qxt, K.zero)
        y = vec_add(xt, vec_scale(alpha, u))
    else:
        coeff = alg.rho() * alg.from_K(qx) / lat.inner(u, x)
        y = vec_sub(x, vec_scale(coeff, u))
    if not lat.q_value(y).is_zero():
        raise PrecisionLoss("bridge vector failed to become isotropic")
    if not (_attains(alg, lat.inner(u, y), scale)
            and _attains(alg, lat.inner(up, y), scale)):
        raise PrecisionLoss("bridge vector lost its pairings")
    return y


def _peel_hyperbolic_unramified(drv, cols, phi, u, v):
    lat = drv.lat
    alg = lat.alg
    phi_u = mat_vec(phi, u)
    if not all((a - b).is_zero() for a, b in zip(phi_u, u)):
        syms = map_isotropic(lat, cols, phi_u, u)
        phi = drv.emit_symmetries(syms, phi)
    phi_v = mat_vec(phi, v)
    if all((a - b).is_zero() for a, b in zip(phi_v, v)):
        return phi
    # phi(v) = mu*u + v + y with y in the complement of the pair
    puv = lat.inner(u, v)
    pvu = lat.inner(v, u)
    mu = lat.inner(phi_v, v) / puv.conj()
    y = vec_sub(vec_sub(phi_v, v), vec_scale(mu, u))
    e = make_eichler(lat, u, v, y, mu)
    syms = eichler_to_symmetries(lat, e)
    if syms is None:
        raise UnsupportedCase("unramified Eichler reduction unavailable")
    # phi = E ∘ rest: peel E off through its symmetry word
    inv_word = [s.inverse() for s in reversed(syms)]
    phi = drv.emit_symmetries(inv_word, phi)
    phi_v2 = mat_vec(phi, v)
    if not all((a - b).is_zero() for a, b in zip(phi_v2, v)):
        raise PrecisionLoss("hyperbolic peel did not fix v")
    return phi


def map_unit_vector(lat, cols, a, a_img):
    """Product of symmetries of L mapping a_img to a, where L = O a ⟂ N with
    a of unit-level form value; unramified kinds (reflection constructions).

    The word w = [g1, ..., gr] satisfies (g1 ∘ ... ∘ gr)(a_img) = a."""
    alg = lat.alg
    qa = lat.q_value(a)
    c = alg.base.one / qa
    latr = lat.rescale(c)
    word = []
    ap = a_img

    def push(s, sigma_r):
        nonlocal ap
        g = make_symmetry(lat, s, sigma_r / alg.from_K(c))
        if not in_unitary_group(lat, g):
            raise PrecisionLoss("reflection symmetry does not preserve L")
        word.insert(0, g)
        ap = apply_generator(lat, g, ap)

    fuel = 12
    while fuel > 0:
        fuel -= 1
        if all((x - y).is_zero() for x, y in zip(ap, a)):
            return word
        d = latr.inner(a, vec_sub(a, ap))
        if alg.kind == EtaleAlgebra.INERT:
            if not d.is_zero() and d.is_unit():
                s = vec_sub(ap, a)
                push(s, latr.inner(ap, s))
                continue
            s = _pairing_bridge(latr, cols, a, ap)
            push(s, alg.rho() * latr.inner(s, s))
            continue
        # split kind
        if not d.is_zero() and d.is_unit():
            s = vec_sub(ap, a)
            push(s, latr.inner(ap, s))
            continue
        if alg.base.q > 2:
            s = _pairing_bridge(latr, cols, a, ap)
            qs = latr.q_value(s)
            done = False
            for eps in alg.base.residue_lifts():
                if eps.is_zero() or (eps - 1).is_zero():
                    continue
                if (1 - eps).valuation() != 0:
                    continue
                for sigma in (alg.element(qs * eps, qs * (1 - eps)),
                              alg.element(qs * (1 - eps), qs * eps)):
                    img = apply_generator(latr, Symmetry(s, sigma), ap)
                    dd = latr.inner(a, vec_sub(a, img))
                    if not dd.is_zero() and dd.is_unit():
                        push(s, sigma)
                        done = True
                        break
                if done:
                    break
            if done:
                continue
            raise PrecisionLoss("no epsilon choice advanced the reflection")
        s_sigma = _split_residue_two_data(latr, cols, a, ap)
        push(*s_sigma)
    raise UnsupportedCase("line reflection loop did not terminate")


def _peel_unramified_line(drv, cols, phi, a):
    """Fix phi(a) back to a for the unit-norm line of an unramified lattice."""
    lat = drv.lat
    ap = mat_vec(phi, a)
    if all((x - y).is_zero() for x, y in zip(ap, a)):
        return phi
    word = map_unit_vector(lat, cols, a, ap)
    return drv.emit_symmetries(word, phi)


def _pairing_bridge(latr, cols, a, ap):
    """s with <s,a> and <s,ap> both units (scale zero, unramified)."""
    alg = latr.alg
    if alg.kind == EtaleAlgebra.SPLIT:
        # assemble one slot at a time; each slot is the classical argument
        # over the base valuation ring
        slots = []
        for comp in (0, 1):
            def vals(x, vec):
                e = latr.inner(vec, x)
                c = e.x0 if comp == 0 else e.x1
                return (not c.is_zero()) and c.valuation() == 0

            y1 = next((c for c in cols if vals(a, c)), None)
            y2 = next((c for c in cols if vals(ap, c)), None)
            if y1 is None or y2 is None:
                raise PrecisionLoss("no pairing partners for the bridge slot")
            pick = next((x for x in (y1, y2, vec_add(y1, y2))
                         if vals(a, x) and vals(ap, x)), None)
            if pick is None:
                raise PrecisionLoss("reflection bridge slot search failed")
            slots.append(pick)
        K = alg.base
        x = vec_add(vec_scale(alg.element(K.one, K.zero), slots[0]),
                    vec_scale(alg.element(K.zero, K.one), slots[1]))
        if _attains(alg, latr.inner(x, a), 0) and \
           _attains(alg, latr.inner(x, ap), 0):
            return x
        raise PrecisionLoss("reflection bridge search failed")
    y1 = y2 = None
    for cvec in cols:
        if y1 is None and _attains(alg, latr.inner(cvec, a), 0):
            y1 = cvec
        if y2 is None and _attains(alg, latr.inner(cvec, ap), 0):
            y2 = cvec
    if y1 is None or y2 is None:
        raise PrecisionLoss("no pairing partners for the reflection bridge")
    for x in (y1, y2, vec_add(y1, y2)):
        if _attains(alg, latr.inner(x, a), 0) and \
           _attains(alg, latr.inner(x, ap), 0):
            return x
    raise PrecisionLoss("reflection bridge search failed")


def _split_residue_two_data(latr, cols, a, ap):
    """One step of the residue-two split four-case analysis: the (s, sigma)
    of the next symmetry to apply (computed against the rescaled form)."""
    alg = latr.alg
    K = alg.base
    p = K.uniformizer()
    d = latr.inner(a, vec_sub(a, ap))
    iexp = d.x0.valuation_or_none()
    jexp = d.x1.valuation_or_none()
    big = 10 ** 6
    iexp = big if iexp is None else iexp
    jexp = big if jexp is None else jexp
    rest = _complement_of_vector(latr, cols, a)
    kexp = big if not rest else _block_scale_sym(alg, _gram_of(latr, rest))

    if iexp <= kexp and jexp <= kexp:
        s = vec_sub(ap, a)
        return s, latr.inner(ap, s)
    if iexp >= 2 and jexp >= 2:
        s = _pairing_bridge(latr, cols, a, ap)
        qs = latr.q_value(s)
        return s, alg.element(qs * (K.one + p) / p, -(qs / p))
    if min(iexp, jexp) < kexp < max(iexp, jexp):
        s = _pairing_bridge(latr, cols, a, ap)
        qs = latr.q_value(s)
        pk = K.uniformizer_pow(kexp)
        return s, alg.element(qs * (K.one + pk) / pk, -(qs / pk))
    # remaining shape: k = 1 and exactly one slot at valuation 1
    alpha = latr.inner(ap, a) / latr.q_value(a)
    n_part = vec_sub(ap, vec_scale(alpha, a))
    nra = alpha.norm()
    if iexp == 1 and jexp > 1:
        weight = alg.element(K.one, nra - 1)
        sigma = alg.element(K.one, K.from_int(-1))
    else:
        weight = alg.element(nra - 1, K.one)
        sigma = alg.element(K.from_int(-1), K.one)
    u = vec_add(vec_scale(weight, a), n_part)
    if not latr.q_value(u).is_zero():
        raise PrecisionLoss("four-case trick vector is not isotropic")
    return u, sigma


# ---------------------------------------------------------------------------
# ramified driver
# ---------------------------------------------------------------------------


def _drive_ramified_step(drv, cols, phi):
    lat = drv.lat
    arr = _arrange_first_block(lat, cols)
    pair_info = None
    if arr["pair"] is not None:
        u, v = arr["pair"]
        pair_info = (u, v, arr["scale"])
    else:
        cross = _cross_block_attempt(lat, arr)
        if cross is not None:
            pair_info = cross
    if pair_info is not None:
        u, v, s = pair_info
        phi = _peel_hyperbolic_ramified(drv, cols, phi, u, v, s)
        rest = split_off_pair(lat, cols, u, v)
        return rest, phi
    lines, planes = arr["lines"], arr["planes"]
    if lines:
        x = lines[0]
        if len(lines) >= 2:
            phi = _peel_normal_rk2(drv, cols, phi, x, lines[1])
        else:
            phi = _peel_normal_rk1(drv, cols, phi, x, arr["deeper"])
        rest = _complement_of_vector(lat, cols, x)
        return rest, phi
    if len(planes) != 1:
        raise UnsupportedCase(
            f"unexpected first-block shape: {len(lines)} lines, "
            f"{len(planes)} planes after hyperbolic extraction")
    x, y = planes[0]
    tag, payload, phi = _peel_subnormal(drv, cols, phi, (x, y),
                                        arr["deeper"], arr["scale"])
    if tag == "restart":
        return payload, phi
    u, v = payload
    from .classify import split_off_plane
    rest = split_off_plane(lat, cols, u, v)
    return rest, phi


def _fix_vec(lat, phi, vec):
    img = mat_vec(phi, vec)
    return all((a - b).is_zero() for a, b in zip(img, vec))


def _rot1_eichler(lat, shared, u_from, u_to):
    """Eichler isometry fixing `shared` and mapping u_from to u_to, for
    hyperbolic pairs (shared, u_from), (shared, u_to) with equal products."""
    beta = lat.inner(vec_sub(u_to, u_from), u_from) / lat.inner(shared, u_from)
    w = vec_sub(vec_sub(u_to, u_from), vec_scale(beta, shared))
    return make_eichler(lat, shared, u_from, w, beta)


def _transport_pair(drv, cols, phi, u2, v2, scale_s):
    """Emit generators aligning the phi-images of the target pair (u2, v2);
    returns the updated phi (which then fixes u2 and v2 pointwise)."""
    lat = drv.lat
    alg = lat.alg
    fuel = 8
    while fuel > 0:
        fuel -= 1
        if _fix_vec(lat, phi, u2) and _fix_vec(lat, phi, v2):
            return phi
        cur_u = mat_vec(phi, u2)
        cur_v = mat_vec(phi, v2)
        done = _postalign(drv, phi, u2, v2, scale_s)
        if done is not None:
            phi = done
            continue
        puv = lat.inner(cur_u, cur_v)
        alpha = lat.inner(u2, cur_v) / puv
        beta = lat.inner(u2, cur_u) / puv.conj()
        gamma = lat.inner(v2, cur_v) / puv
        delta = lat.inner(v2, cur_u) / puv.conj()
        if not beta.is_zero() and beta.is_unit():
            s = vec_sub(cur_u, u2)
            sigma = lat.inner(cur_u, s)
            phi = drv.emit(make_symmetry(lat, s, sigma), phi)
        elif not gamma.is_zero() and gamma.is_unit():
            s = vec_sub(cur_v, v2)
            sigma = lat.inner(cur_v, s)
            phi = drv.emit(make_symmetry(lat, s, sigma), phi)
        elif not alpha.is_zero() and alpha.is_unit():
            target = vec_scale(alg.one / alpha, u2)
            e = _rot1_eichler(lat, cur_v, cur_u, target)
            phi = drv.emit(e, phi)
        elif not delta.is_zero() and delta.is_unit():
            target = vec_scale(alg.one / delta, v2)
            e = _rot1_eichler(lat, cur_u, cur_v, target)
            phi = drv.emit(e, phi)
        else:
            w = vec_sub(vec_sub(u2, vec_scale(alpha, cur_u)),
                        vec_scale(beta, cur_v))
            wp = vec_sub(vec_sub(v2, vec_scale(gamma, cur_u)),
                         vec_scale(delta, cur_v))
            z = _isotropic_partner_in_plane(lat, w, wp, puv)
            shared = vec_add(cur_v, z)
            fac = alg.one + alpha
            target = vec_scale(alg.one / fac, u2)
            e = _rot1_eichler(lat, shared, cur_u, target)
            phi = drv.emit(e, phi)
    if _fix_vec(lat, phi, u2) and _fix_vec(lat, phi, v2):
        return phi
    raise PrecisionLoss("pair transport did not converge")


def _scalar_coeff(lat, img, target, partner):
    """If img = a * target (tested exactly), return the unit a, else None."""
    denom = lat.inner(target, partner)
    a = lat.inner(img, partner) / denom
    if a.is_zero() or not a.is_unit():
        return None
    if all((x - y).is_zero() for x, y in zip(img, vec_scale(a, target))):
        return a
    return None


def _postalign(drv, phi, u2, v2, scale_s):
    """When one image is a scalar multiple of its target, finish the job:
    rotate the other image into place and undo the unit scaling inside the
    plane.  Returns the new phi, or None when not applicable."""
    lat = drv.lat
    alg = lat.alg
    cur_u = mat_vec(phi, u2)
    cur_v = mat_vec(phi, v2)
    a = _scalar_coeff(lat, cur_u, u2, v2)
    if a is not None:
        tv = vec_scale(alg.one / a.conj(), v2)
        if not all((x - y).is_zero() for x, y in zip(cur_v, tv)):
            e = _rot1_eichler(lat, cur_u, cur_v, tv)
            phi = drv.emit(e, phi)
        if not (a - alg.one).is_zero():
            word = _scale_map_word(lat, u2, v2, scale_s, alg.one / a)
            phi = drv.emit_symmetries(word, phi)
        return phi
    b = _scalar_coeff(lat, cur_v, v2, u2)
    if b is not None:
        tu = vec_scale(alg.one / b.conj(), u2)
        if not all((x - y).is_zero() for x, y in zip(cur_u, tu)):
            e = _rot1_eichler(lat, cur_v, cur_u, tu)
            phi = drv.emit(e, phi)
        bb = alg.one / b.conj()
        if not (bb - alg.one).is_zero():
            word = _scale_map_word(lat, u2, v2, scale_s, alg.one / bb)
            phi = drv.emit_symmetries(word, phi)
        return phi
    return None


def _plane_word_beta_unit(lat, u2, v2, img_u, img_v):
    """Symmetry word for the plane map u2 -> img_u, v2 -> img_v (identity on
    the complement) in the case where img_u has a unit v2-coordinate."""
    alg = lat.alg
    s = vec_sub(u2, img_u)
    sigma = lat.inner(u2, s)
    if sigma.is_zero():
        raise PrecisionLoss("degenerate plane alignment")
    s1 = make_symmetry(lat, s, sigma)
    rv = apply_generator(lat, s1.inverse(), img_v)
    gamma = lat.inner(vec_sub(rv, v2), v2) / lat.inner(u2, v2)
    recon = vec_add(v2, vec_scale(gamma, u2))
    if not all((x - y).is_zero() for x, y in zip(rv, recon)):
        raise PrecisionLoss("plane map residual is not a shear")
    word = [s1]
    if not gamma.is_zero():
        sigma2 = -(lat.inner(v2, u2) / gamma)
        if not sigma2.trace().is_zero():
            raise PrecisionLoss("plane shear parameter is not skew")
        word.append(Symmetry(u2, sigma2))
    # verify on the pair
    iu, iv = u2, v2
    for g in reversed(word):
        iu = apply_generator(lat, g, iu)
        iv = apply_generator(lat, g, iv)
    if not (all((x - y).is_zero() for x, y in zip(iu, img_u))
            and all((x - y).is_zero() for x, y in zip(iv, img_v))):
        raise PrecisionLoss("plane word does not realize the map")
    return word


def _scale_map_word(lat, u2, v2, scale_s, a):
    """Symmetry word for the unitary plane map u2 -> a*u2, v2 -> conj(a)^-1 v2."""
    alg = lat.alg
    if (a - alg.one).is_zero():
        return []
    pi_s = alg.uniformizer_pow(scale_s)
    swap_coeff = pi_s.conj() / pi_s
    w0 = _plane_word_beta_unit(lat, u2, v2, v2, vec_scale(swap_coeff, u2))
    # compose the swap with the scaling map
    img_u = vec_scale(a, v2)
    img_v = vec_scale(swap_coeff / a.conj(), u2)
    w1 = _plane_word_beta_unit(lat, u2, v2, img_u, img_v)
    word = [g.inverse() for g in reversed(w0)] + w1
    # final check on the pair
    iu, iv = u2, v2
    for g in reversed(word):
        iu = apply_generator(lat, g, iu)
        iv = apply_generator(lat, g, iv)
    ok_u = all((x - y).is_zero() for x, y in zip(iu, vec_scale(a, u2)))
    ok_v = all((x - y).is_zero()
               for x, y in zip(iv, vec_scale(alg.one / a.conj(), v2)))
    if not (ok_u and ok_v):
        raise PrecisionLoss("plane scaling word failed")
    return word


def _isotropic_partner_in_plane(lat, w, wp, puv):
    """Isotropic z in span(w, w') with <w, z> = puv (the auxiliary plane of
    the all-coefficients-deep rotation case)."""
    alg = lat.alg
    pww = lat.inner(w, wp)
    if pww.is_zero() or alg.vP(pww) != alg.vP(puv):
        raise PrecisionLoss("auxiliary plane lost the pairing level")
    qwp = lat.q_value(wp)
    z = wp
    if not qwp.is_zero():
        lam = alg.solve_trace(pww, -qwp)
        z = vec_add(wp, vec_scale(lam, w))
    if not lat.q_value(z).is_zero():
        z = isotropy_refine(lat, z, [w, wp])
    fac = (puv / lat.inner(w, z)).conj()
    z = vec_scale(fac, z)
    if not lat.q_value(z).is_zero() or not (lat.inner(w, z) - puv).is_zero():
        raise PrecisionLoss("auxiliary isotropic vector failed its contract")
    return z




def _peel_hyperbolic_ramified(drv, cols, phi, u, v, scale_s):
    return _transport_pair(drv, cols, phi, u, v, scale_s)


def _try_direct_symmetry(drv, phi, img, target):
    """Symmetry mapping img back to target when sym:act applies and the
    lattice is stabilized; returns updated phi or None."""
    lat = drv.lat
    s = vec_sub(img, target)
    sigma = lat.inner(img, s)
    if sigma.is_zero():
        return None
    g = Symmetry(s, sigma)
    if not in_unitary_group(lat, g):
        return None
    return drv.emit(g, phi)


def _emit_scaled(drv, phi, s, sigma_r, scale_factor):
    """Emit a symmetry constructed against the rescaled form a*<,>."""
    lat = drv.lat
    g = make_symmetry(lat, s, sigma_r / lat.alg.from_K(scale_factor))
    return drv.emit(g, phi)


def _steered_sigma(latr, qs_rho, target_vals):
    """sigma = Q(s)*rho + omega with v_P(sigma) steered into target_vals."""
    alg = latr.alg
    K = alg.base
    base_val = None if qs_rho.is_zero() else alg.vP(qs_rho)
    for t in target_vals:
        cands = []
        if base_val is not None and base_val == t:
            cands.append(qs_rho)
        if (t - alg.e) % 2 == 0:
            for lam in K.residue_lifts():
                if lam.is_zero():
                    continue
                cands.append(qs_rho + alg.special_skew(t) * alg.from_K(lam))
        for sigma in cands:
            if sigma.is_zero():
                continue
            if alg.vP(sigma) == t:
                return sigma
    raise PrecisionLoss("no steered sigma reached the target window")


def _peel_normal_rk2(drv, cols, phi, x, y):
    """First block carries two norm-attaining lines; fix phi(x) back to x."""
    lat = drv.lat
    alg = lat.alg
    K = alg.base
    qx = lat.q_value(x)
    qy = lat.q_value(y)
    k = qx.valuation()
    for _ in range(8):
        phix = mat_vec(phi, x)
        if all((a - b).is_zero() for a, b in zip(phix, x)):
            return phi
        nphi = _try_direct_symmetry(drv, phi, phix, x)
        if nphi is not None:
            phi = nphi
            continue
        # 1 - alpha in P^2: build s = x + c*y with Q(s) deep, steered sigma
        c = alg.solve_norm_approx(-qx / qy, alg.e - 1)
        s = vec_add(x, vec_scale(c, y))
        qs = lat.q_value(s)
        if qs.is_zero() or qs.valuation() < k + alg.e - 1:
            raise PrecisionLoss("norm-mod combination missed its depth")
        sigma = _steered_sigma(lat, alg.from_K(qs) * alg.rho(),
                               [t for t in (2 * k, 2 * k - 1)])
        g = make_symmetry(lat, s, sigma)
        phi = drv.emit(g, phi)
    raise UnsupportedCase("normal rank-2 peel did not converge")


def _peel_normal_rk1(drv, cols, phi, x, deeper):
    """First block is a single line O*x next to a deeper part M."""
    lat = drv.lat
    alg = lat.alg
    K = alg.base
    qx = lat.q_value(x)
    k = qx.valuation()
    for _ in range(10):
        phix = mat_vec(phi, x)
        if all((a - b).is_zero() for a, b in zip(phix, x)):
            return phi
        nphi = _try_direct_symmetry(drv, phi, phix, x)
        if nphi is not None:
            phi = nphi
            continue
        alpha = lat.inner(phix, x) / qx
        one_minus = alg.one - alpha
        v_val = None if one_minus.is_zero() else alg.vP(one_minus)
        if v_val is not None and v_val >= alg.e:
            sigma = alg.from_K(qx) * alg.rho()
            g = make_symmetry(lat, x, sigma)
            phi = drv.emit(g, phi)
            continue
        if not deeper:
            raise UnsupportedCase("rank-1 peel stuck without a deeper part")
        dgram = _gram_of(lat, deeper)
        n = _norm_exp_of_gram(alg, dgram)
        y0, _ = _norm_attainer(lat, deeper, dgram, n)
        qy = lat.q_value(y0)
        c = alg.solve_norm_approx(-K.uniformizer_pow(n - k) * qx / qy,
                                  alg.e - 1)
        y = vec_scale(c, y0)
        s = vec_add(vec_scale(alg.uniformizer_pow(n - k), x), y)
        qs = lat.q_value(s)
        if qs.is_zero() or qs.valuation() < n + alg.e - 1:
            raise PrecisionLoss("rank-1 combination missed its depth")
        sigma = _steered_sigma(lat, alg.from_K(qs) * alg.rho(),
                               [n + k, n + k - 1])
        g = make_symmetry(lat, s, sigma)
        phi = drv.emit(g, phi)
    raise UnsupportedCase("normal rank-1 peel did not converge")


def _peel_subnormal(drv, cols, phi, plane, deeper, scale_i):
    """Peel a subnormal first-block plane: fix u then v, following the
    valuation-steered symmetry constructions."""
    lat = drv.lat
    alg = lat.alg
    K = alg.base
    i = scale_i
    e = alg.e
    x2, y2 = plane
    _, _, k = normalize_plane(lat, x2, y2, i)

    if deeper:
        dgram = _gram_of(lat, deeper)
        n_glob = _norm_exp_of_gram(alg, dgram)
        groups = _jordan_cols(lat, deeper)
        j = _block_scale(alg, _gram_of(lat, groups[0]))
        if 0 < j - i < n_glob - k:
            # rearrange the deeper part to norm p^(j-i+k) and restart
            from .classify import rearrange_columns
            donor, _ = _norm_attainer(lat, [x2, y2],
                                      _gram_of(lat, [x2, y2]), k)
            lines2, planes2 = peel_lines_and_planes(lat, groups[0])
            if planes2:
                p2 = normalize_plane(lat, planes2[0][0], planes2[0][1], j)
                (z, y2b), others = rearrange_columns(
                    lat, cols, donor, p2, j, i)
                return ("restart", others + [z, y2b], phi)
        # global rescale so the deep norm attainer has form value p^n exactly
        x_deep, _ = _norm_attainer(lat, deeper, dgram, n_glob)
        scale_factor = K.uniformizer_pow(n_glob) / lat.q_value(x_deep)
    else:
        x_deep = None
        n_glob = None
        j = None
        scale_factor = K.one

    latr = lat.rescale(scale_factor)
    u, v, k = plane_standard_form(latr, x2, y2, i)
    phi = _subnormal_fix_u(drv, latr, scale_factor, phi, u, v, i, k)
    phi = _subnormal_fix_v(drv, latr, scale_factor, phi, u, v, deeper,
                           x_deep, i, k, n_glob, j)
    return ("done", (u, v), phi)


def _subnormal_fix_u(drv, latr, a, phi, u, v, i, k):
    alg = latr.alg
    e = alg.e
    qv = latr.q_value(v)
    for _ in range(8):
        phiu = mat_vec(phi, u)
        if all((c - d).is_zero() for c, d in zip(phiu, u)):
            return phi
        # direct attempt
        s = vec_sub(phiu, u)
        sigma = latr.inner(phiu, s)
        if not sigma.is_zero():
            g = make_symmetry(drv.lat, s, sigma / alg.from_K(a))
            if in_unitary_group(drv.lat, g):
                phi = drv.emit(g, phi)
                continue
        # beta-deep pre-pass: S_{v, sigma} with sigma = Q(v) rho + omega
        sigma = _steered_sigma(latr, alg.from_K(qv) * alg.rho(), [i, i - 1])
        phi = _emit_scaled(drv, phi, v, sigma, a)
    raise UnsupportedCase("subnormal u-alignment did not converge")


def _subnormal_fix_v(drv, latr, a, phi, u, v, deeper, x_deep, i, k, n, j):
    alg = latr.alg
    K = alg.base
    e = alg.e
    for _ in range(10):
        phiv = mat_vec(phi, v)
        if all((c - d).is_zero() for c, d in zip(phiv, v)):
            return phi
        s = vec_sub(phiv, v)
        sigma = latr.inner(phiv, s)
        if not sigma.is_zero():
            g = make_symmetry(drv.lat, s, sigma / alg.from_K(a))
            if in_unitary_group(drv.lat, g):
                phi = drv.emit(g, phi)
                continue
        if x_deep is None:
            raise UnsupportedCase("subnormal v-alignment stuck without M")
        # the steered pass: s = eps * pi^(n-k) v' + x
        h = (j + e) // 2
        if h > n:
            eps = alg.solve_norm_approx(
                K.one - K.uniformizer_pow(h - n), e - 1)
        else:
            eps = alg.one
        vprime = vec_sub(u, vec_scale(
            alg.uniformizer_pow(i) * alg.from_K(K.uniformizer_pow(k - i)), v))
        s = vec_add(vec_scale(eps * alg.uniformizer_pow(n - k), vprime),
                    x_deep)
        qs = latr.q_value(s)
        if not qs.is_zero() and qs.valuation() < h:
            raise PrecisionLoss("steered vector misses its depth")
        sigma = _steered_sigma(latr, alg.from_K(qs) * alg.rho(),
                               [n - k + i, n - k + i - 1])
        phi = _emit_scaled(drv, phi, s, sigma, a)
    raise UnsupportedCase("subnormal v-alignment did not converge")


# ---------------------------------------------------------------------------
# public single-step peels
# ---------------------------------------------------------------------------


def peel_hyperbolic(lat, phi, pair):
    """Emit generators aligning phi on the hyperbolic pair; returns
    (generators, complement_columns, residual_phi) with
    product(generators) * residual_phi = phi."""
    _check_input(lat, phi)
    u, v = pair
    puv = lat.inner(u, v)
    s = _pair_scale(lat.alg, puv) if lat.alg.kind != EtaleAlgebra.SPLIT \
        else lat.alg.valuation_P(puv).a
    drv = _Driver(lat)
    cols = list(cols_of(identity(lat.alg, lat.n)))
    if lat.alg.kind == EtaleAlgebra.RAMIFIED:
        phi2 = _peel_hyperbolic_ramified(drv, cols, phi, u, v, s)
    else:
        phi2 = _peel_hyperbolic_unramified(drv, cols, phi, u, v)
    rest = split_off_pair(lat, cols, u, v)
    return drv.out, rest, phi2


def peel_normal_dyadic(lat, phi):
    """One normal-line peeling step of the ramified driver; returns
    (generators, complement_columns, residual_phi)."""
    _check_input(lat, phi)
    if lat.alg.kind != EtaleAlgebra.RAMIFIED:
        raise UnsupportedCase("normal peeling is for the ramified kind")
    drv = _Driver(lat)
    cols = list(cols_of(identity(lat.alg, lat.n)))
    arr = _arrange_first_block(lat, cols)
    lines = arr["lines"]
    if not lines:
        raise UnsupportedCase("first block does not start with a line")
    x = lines[0]
    if len(lines) >= 2:
        phi2 = _peel_normal_rk2(drv, cols, phi, x, lines[1])
    else:
        phi2 = _peel_normal_rk1(drv, cols, phi, x, arr["deeper"])
    rest = _complement_of_vector(lat, cols, x)
    return drv.out, rest, phi2


def peel_subnormal_dyadic(lat, phi):
    """One subnormal-plane peeling step of the ramified driver; returns
    (generators, complement_columns, residual_phi)."""
    _check_input(lat, phi)
    if lat.alg.kind != EtaleAlgebra.RAMIFIED:
        raise UnsupportedCase("subnormal peeling is for the ramified kind")
    drv = _Driver(lat)
    cols = list(cols_of(identity(lat.alg, lat.n)))
    arr = _arrange_first_block(lat, cols)
    if arr["lines"] or len(arr["planes"]) != 1:
        raise UnsupportedCase("first block is not a single subnormal plane")
    x, y = arr["planes"][0]
    tag, payload, phi2 = _peel_subnormal(drv, cols, phi, (x, y),
                                         arr["deeper"], arr["scale"])
    if tag == "restart":
        return drv.out, payload, phi2
    u, v = payload
    from .classify import split_off_plane

    rest = split_off_plane(lat, cols, u, v)
    return drv.out, rest, phi2
