"""Isometry testing, standard forms of modular lattices, hyperbolic-plane
detection, and Jordan rearrangement.

The decision side compares Jordan invariants (four conditions in the ramified
case).  The constructive side produces explicit vectors: standard bases of
modular blocks, hyperbolic pairs wherever the classification forces one, and
basis changes realizing the norm-rearrangement of a deeper Jordan block.
All constructions are verified at working precision before they are returned.
"""

from __future__ import annotations

from .errors import (
    HermlatError,
    HypothesisViolation,
    NotModular,
    PrecisionLoss,
)
from .etale import NONNORM, NORM, EtaleAlgebra
from .lattice import HermitianLattice, _gram_of, _norm_attainer, _norm_exp_of_gram
from .linalg import (
    cols_of,
    identity,
    mat_from_cols,
    mat_solve,
    vec_add,
    vec_scale,
    vec_sub,
)

# ---------------------------------------------------------------------------
# isometry decision
# ---------------------------------------------------------------------------


def isometry_conditions(m_lat, n_lat):
    """Evaluate the isometry conditions; returns (bool, failed, trace).

    `failed` is the number of the first failed condition (1..4) or None.
    Unramified kinds use Jordan type plus determinant class and report
    failures as condition 1 or 2.
    """
    if m_lat.alg is not n_lat.alg:
        raise HermlatError("lattices over different algebras")
    alg = m_lat.alg
    trace = {}
    if m_lat.n != n_lat.n:
        return False, 1, {"reason": "rank mismatch"}
    if m_lat.n == 0:
        return True, None, trace

    jm = m_lat.jordan_split()
    jn = n_lat.jordan_split()
    tm, tn = jm.jordan_type(), jn.jordan_type()
    trace["jordan_type"] = (tm, tn)
    if tm != tn:
        return False, 1, trace

    vm, cm = m_lat.det_class()
    vn, cn = n_lat.det_class()
    trace["det_class"] = ((vm, cm), (vn, cn))
    if (vm, cm) != (vn, cn):
        return False, 2, trace

    if alg.kind != EtaleAlgebra.RAMIFIED:
        return True, None, trace

    norms_m, norms_n = [], []
    for blk in jm.blocks:
        _, g = m_lat.dual_sublattice(blk.scale_exp)
        norms_m.append(_norm_exp_of_gram(alg, g))
    for blk in jn.blocks:
        _, g = n_lat.dual_sublattice(blk.scale_exp)
        norms_n.append(_norm_exp_of_gram(alg, g))
    trace["dual_norms"] = (norms_m, norms_n)
    if norms_m != norms_n:
        return False, 3, trace

    t = len(jm.blocks)
    K = alg.base
    for i in range(t - 1):
        a_exp = norms_m[i] + norms_m[i + 1] - jm.blocks[i].scale_exp
        if a_exp <= 0:
            continue
        dm = _partial_det(alg, jm.blocks[: i + 1])
        dn = _partial_det(alg, jn.blocks[: i + 1])
        quot = dm / dn
        if quot.is_zero() or quot.valuation() != 0:
            return False, 4, trace
        defect = alg.normic_defect(quot)
        trace.setdefault("partial_defects", []).append((i + 1, defect, a_exp))
        if defect < a_exp:
            return False, 4, trace
    return True, None, trace


def _partial_det(alg, blocks):
    from .linalg import mat_det

    acc = None
    for blk in blocks:
        d = mat_det(blk.gram).as_K()
        acc = d if acc is None else acc * d
    return acc


def isometric(m_lat, n_lat):
    ok, _, _ = isometry_conditions(m_lat, n_lat)
    return ok


def space_is_hyperbolic(lat):
    """Whether the ambient hermitian space of an even-rank lattice is a sum
    of hyperbolic planes."""
    if lat.n % 2:
        return False
    r = lat.n // 2
    d = lat.det().as_K()
    if r % 2:
        d = -d
    return lat.alg.in_E_norm_group(d)


def modular_standard_form(lat):
    """Classification descriptor for a modular ramified lattice.

    Odd rank m=2r+1: {"parity": "odd", "unit_class", "r"}.
    Even rank: {"parity": "even", "form": "H"|"A", "k", "r"}; "H" with
    k = floor((i+e)/2) means the block is an orthogonal sum of hyperbolic
    planes.
    """
    alg = lat.alg
    if alg.kind != EtaleAlgebra.RAMIFIED:
        raise NotModular("standard forms are for the ramified kind")
    s = lat.scale_exp()
    if not lat.is_modular(s):
        raise NotModular("lattice is not modular")
    m = lat.n
    if m % 2:
        if s % 2:
            raise NotModular("odd-rank modular lattice with odd scale")
        det, cls = lat.det_class()
        # unit class of det * p^{-m*i/2}
        K = alg.base
        u = lat.det().as_K() / K.uniformizer_pow(m * s // 2)
        ucls = alg.norm_class(u)
        return {"parity": "odd", "rank": m, "scale": s,
                "unit_class": ucls, "r": (m - 1) // 2}
    k = lat.norm_exp()
    form = "H" if space_is_hyperbolic(lat) else "A"
    return {"parity": "even", "rank": m, "scale": s, "form": form,
            "k": k, "r": (m - 2) // 2}


# ---------------------------------------------------------------------------
# constructive toolkit
# ---------------------------------------------------------------------------


def trace_kill(lat, u, y, max_rounds=64):
    """Make u isotropic by shifting along y: u' = u + lambda*y with
    <y,u> of pairing level; solves exactly or raises."""
    alg = lat.alg
    for _ in range(max_rounds):
        q = lat.inner(u, u).as_K()
        if q.is_zero():
            return u
        pair = lat.inner(y, u)
        lam = alg.solve_trace(pair, -q)
        cand = vec_add(u, vec_scale(lam, y))
        q2 = lat.q_value(cand)
        if not q2.is_zero() and q2.valuation() <= q.valuation():
            raise PrecisionLoss("isotropy refinement stalled")
        u = cand
    raise PrecisionLoss("isotropy refinement did not converge")


def isotropy_refine(lat, u, helpers, max_rounds=96):
    """Exact isotropy kill allowing both trace-dominant and norm-balanced
    corrections along the helper directions."""
    alg = lat.alg
    K = alg.base
    nrpi = alg.uniformizer().norm() if alg.kind == EtaleAlgebra.RAMIFIED else None
    for _ in range(max_rounds):
        q = lat.q_value(u)
        if q.is_zero():
            return u
        m = q.valuation()
        progressed = False
        for y in helpers:
            pair = lat.inner(y, u)
            if pair.is_zero():
                continue
            # trace-dominant: Tr(lambda * <y,u>) = -q
            try:
                lam = alg.solve_trace(pair, -q)
                cand = vec_add(u, vec_scale(lam, y))
                q2 = lat.q_value(cand)
                if q2.is_zero() or q2.valuation() > m:
                    u = cand
                    progressed = True
                    break
            except HermlatError:
                pass
            # norm-balanced: Nr(lambda)*Q(y) cancels the leading digit
            qy = lat.q_value(y)
            if alg.kind == EtaleAlgebra.RAMIFIED and not qy.is_zero():
                t = m - qy.valuation()
                if t >= 0:
                    target = -q / (qy * nrpi ** t)
                    try:
                        lam0 = alg.solve_norm_approx(target, 1)
                    except HermlatError:
                        continue
                    lam = alg.uniformizer_pow(t) * lam0
                    cand = vec_add(u, vec_scale(lam, y))
                    q2 = lat.q_value(cand)
                    if q2.is_zero() or q2.valuation() > m:
                        u = cand
                        progressed = True
                        break
        if not progressed:
            # mixed trace/norm cancellations: bounded residue search
            for y in helpers:
                for t in range(0, 4):
                    shift = alg.uniformizer_pow(t)
                    for lam0 in alg.unit_residues_O(1):
                        lam = shift * lam0
                        cand = vec_add(u, vec_scale(lam, y))
                        q2 = lat.q_value(cand)
                        if q2.is_zero() or q2.valuation() > m:
                            u = cand
                            progressed = True
                            break
                    if progressed:
                        break
                if progressed:
                    break
        if not progressed:
            raise PrecisionLoss("no isotropy progress along helper directions")
    raise PrecisionLoss("isotropy refinement did not converge")


def primitivize(lat, u):
    """Divide out the common uniformizer power of a nonzero lattice vector."""
    alg = lat.alg
    if alg.kind == EtaleAlgebra.SPLIT:
        return u
    t = None
    for c in u:
        if c.is_zero():
            continue
        v = alg.vP(c)
        t = v if t is None else min(t, v)
    if t is None or t <= 0:
        return u
    return vec_scale(alg.uniformizer_pow(-t), u)


def complete_with_partners(lat, u, candidates, scale_i):
    """Complete a primitive isotropic u to a hyperbolic pair using the first
    viable partner among the candidates."""
    u = primitivize(lat, u)
    last = None
    for w in candidates:
        try:
            return complete_hyperbolic_pair(lat, u, w, scale_i)
        except PrecisionLoss as ex:
            last = ex
    extra = []
    for a in range(len(candidates)):
        for b in range(a + 1, len(candidates)):
            extra.append(vec_add(candidates[a], candidates[b]))
    for w in extra:
        try:
            return complete_hyperbolic_pair(lat, u, w, scale_i)
        except PrecisionLoss as ex:
            last = ex
    raise last if last is not None else PrecisionLoss("no completion partner")


def complete_hyperbolic_pair(lat, u, w0, scale_i):
    """Given exact-isotropic u and a partner w0 with <u,w0> of valuation
    scale_i and Q(w0) in the trace ideal, produce (u, v) with
    <u, v> = pi^scale_i exactly and Q(v) = 0."""
    alg = lat.alg
    pair = lat.inner(u, w0)
    if pair.is_zero():
        raise PrecisionLoss("partner does not pair at the block scale")
    vp = alg.valuation_P(pair)
    if vp.a != scale_i or vp.b != scale_i:
        raise PrecisionLoss("partner does not pair at the block scale")
    q = lat.q_value(w0)
    if not q.is_zero():
        lam = alg.solve_trace(pair, -q)
        w0 = vec_add(w0, vec_scale(lam, u))
    # normalize the pairing to exactly pi^scale_i
    pair = lat.inner(u, w0)
    target = alg.uniformizer_pow(scale_i)
    factor = (target / pair).conj()
    v = vec_scale(factor, w0)
    if not lat.q_value(v).is_zero():
        raise PrecisionLoss("completion lost isotropy")
    if lat.inner(u, v) != target:
        raise PrecisionLoss("pairing normalization failed")
    return u, v


def split_off_pair(lat, cols, u, v):
    """Orthogonal complement of the plane (u, v) inside span(cols); u, v must
    lie in that span and pair onto its scale."""
    alg = lat.alg
    pg = ((lat.inner(u, u), lat.inner(v, u)),
          (lat.inner(u, v), lat.inner(v, v)))
    gmat = tuple(zip(*pg))
    # choose the columns replaced by the pair: where the coefficients of
    # (u, v) in the cols basis carry a unit 2x2 minor
    cg = _gram_of(lat, cols)
    coords_u = mat_solve(tuple(zip(*cg)), tuple(lat.inner(u, c) for c in cols))
    coords_v = mat_solve(tuple(zip(*cg)), tuple(lat.inner(v, c) for c in cols))
    keep = _pair_complement_columns(alg, cols, coords_u, coords_v)
    rest = []
    for c in keep:
        rhs = (lat.inner(c, u), lat.inner(c, v))
        ab = mat_solve(gmat, rhs)
        c2 = vec_sub(c, vec_add(vec_scale(ab[0], u), vec_scale(ab[1], v)))
        rest.append(c2)
    return rest


def _unit_minor_slotwise(vals_u, vals_v):
    n = len(vals_u)
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            d = vals_u[a] * vals_v[b] - vals_u[b] * vals_v[a]
            if not d.is_zero() and d.valuation() == 0:
                return (a, b)
    return None


def _pair_complement_columns(alg, cols, cu, cv):
    n = len(cols)
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            d = cu[a] * cv[b] - cu[b] * cv[a]
            if not d.is_zero() and d.is_unit():
                return [c for j, c in enumerate(cols) if j not in (a, b)]
    if alg.kind == EtaleAlgebra.SPLIT:
        m1 = _unit_minor_slotwise([c.x0 for c in cu], [c.x0 for c in cv])
        m2 = _unit_minor_slotwise([c.x1 for c in cu], [c.x1 for c in cv])
        if m1 is not None and m2 is not None:
            K = alg.base
            keep1 = [j for j in range(n) if j not in m1]
            keep2 = [j for j in range(n) if j not in m2]
            left = alg.element(K.one, K.zero)
            right = alg.element(K.zero, K.one)
            return [vec_add(vec_scale(left, cols[j1]),
                            vec_scale(right, cols[j2]))
                    for j1, j2 in zip(keep1, keep2)]
    raise PrecisionLoss("no unit 2x2 minor; pair does not span unimodularly")


def peel_lines_and_planes(lat, cols):
    """Decompose a modular block (spanned by cols) into an orthogonal sum of
    lines (normal pieces) and rank-2 subnormal planes, all at the block scale."""
    alg = lat.alg
    lines, planes = [], []
    cols = list(cols)
    while cols:
        gram = _gram_of(lat, cols)
        s = _block_scale(alg, gram)
        k = _norm_exp_of_gram(alg, gram)
        if alg.vK_in_P(k) == s:
            x, lead = _norm_attainer(lat, cols, gram, k)
            lines.append(x)
            piece, drop = [x], {lead}
        else:
            best = None
            m = len(cols)
            for i in range(m):
                for j in range(i + 1, m):
                    e = gram[i][j]
                    if e.is_zero():
                        continue
                    vv = alg.vP(e)
                    if best is None or vv < best[0]:
                        best = (vv, i, j)
            if best is None or best[0] != s:
                raise PrecisionLoss("modular block lost its scale pivot")
            _, i, j = best
            planes.append((cols[i], cols[j]))
            piece, drop = [cols[i], cols[j]], {i, j}
        rest = [c for idx, c in enumerate(cols) if idx not in drop]
        if rest:
            pg = _gram_of(lat, piece)
            projected = []
            for y in rest:
                rhs = tuple(lat.inner(y, p) for p in piece)
                coeffs = mat_solve(tuple(zip(*pg)), rhs)
                yy = y
                for cf, p in zip(coeffs, piece):
                    yy = vec_sub(yy, vec_scale(cf, p))
                projected.append(yy)
            rest = projected
        cols = rest
    return lines, planes


def _block_scale(alg, gram):
    from .lattice import _min_vP_sym

    return _min_vP_sym(alg, gram)


def normalize_plane(lat, x, y, scale_i):
    """Arrange a subnormal plane basis: x attains the plane norm, <x,y> has
    valuation scale_i, and Q(y) lies in the trace ideal Tr(P^scale_i)."""
    alg = lat.alg
    gram = _gram_of(lat, [x, y])
    k = _norm_exp_of_gram(alg, gram)
    attainer, lead = _norm_attainer(lat, [x, y], gram, k)
    partner = y if lead == 0 else x
    x, y = attainer, partner
    pair = lat.inner(x, y)
    if pair.is_zero() or alg.vP(pair) != scale_i:
        raise PrecisionLoss("plane basis does not attain the scale")
    y = _deepen_second(lat, x, y, scale_i, k)
    return x, y, k


def _deepen_second(lat, x, y, scale_i, k):
    """Push Q(y) into Tr(P^scale_i) = p^floor((scale_i+e)/2) by adding
    multiples of x (one-digit norm-class solves; window <= e-1)."""
    alg = lat.alg
    target = alg.trace_ideal(scale_i)
    nrpi = alg.uniformizer().norm()
    qx = lat.q_value(x)
    for _ in range(4 * (alg.e + 2)):
        qy = lat.q_value(y)
        if qy.is_zero() or qy.valuation() >= target:
            return y
        m = qy.valuation()
        t = m - k
        if t < 0:
            raise PrecisionLoss("second basis vector below the block norm")
        tau = -qy / (qx * nrpi ** t)
        window = min(max(target - m, 1), max(alg.e - 1, 1))
        cand = None
        try:
            lam0 = alg.solve_norm_approx(tau, window)
            trial = vec_add(y, vec_scale(alg.uniformizer_pow(t) * lam0, x))
            q2 = lat.q_value(trial)
            if q2.is_zero() or q2.valuation() > m:
                cand = trial
        except HermlatError:
            pass
        if cand is None:
            cand = _residue_progress(lat, y, [x], m)
        if cand is None:
            raise PrecisionLoss("plane deepening stalled")
        y = cand
    raise PrecisionLoss("plane deepening did not converge")


def _residue_progress(lat, u, helpers, m):
    """Bounded residue search for a shift strictly deepening the form value."""
    alg = lat.alg
    for y in helpers:
        for t in range(0, 4):
            shift = alg.uniformizer_pow(t)
            for lam0 in alg.unit_residues_O(1):
                cand = vec_add(u, vec_scale(shift * lam0, y))
                q2 = lat.q_value(cand)
                if q2.is_zero() or q2.valuation() > m:
                    return cand
    return None


def plane_is_hyperbolic(lat, x, y, scale_i):
    """Whether the plane spanned by (x, y) is isometric to H(scale_i)."""
    alg = lat.alg
    gram = _gram_of(lat, [x, y])
    k = _norm_exp_of_gram(alg, gram)
    if alg.kind != EtaleAlgebra.RAMIFIED:
        return True  # unramified modular planes of rank 2 always split H
    if k != alg.trace_ideal(scale_i):
        return False
    d = (gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0]).as_K()
    return alg.in_E_norm_group(-d)


def pair_from_hyperbolic_plane(lat, x, y, scale_i):
    """Standard hyperbolic pair inside a plane known to be H(scale_i)."""
    x, y, k = normalize_plane(lat, x, y, scale_i)
    u = isotropy_refine(lat, y, [x, y])
    return complete_with_partners(lat, u, [x, y], scale_i)


def combine_pieces_pair(lat, donor, target_plane, scale_i):
    """Hyperbolic pair inside donor ⟂ plane: raise the target plane's first
    basis vector into the trace ideal using the donor direction, then kill."""
    alg = lat.alg
    x2, y2 = target_plane
    x2, y2, k2 = normalize_plane(lat, x2, y2, scale_i)
    qd = lat.q_value(donor)
    k1 = qd.valuation()
    if k1 > k2:
        raise HypothesisViolation("donor norm must not exceed the plane norm")
    target = alg.trace_ideal(scale_i)
    nrpi = alg.uniformizer().norm()
    x2c = x2
    for _ in range(4 * (alg.e + 2)):
        q = lat.q_value(x2c)
        if q.is_zero() or q.valuation() >= target:
            break
        m = q.valuation()
        t = m - k1
        if t < 0:
            raise PrecisionLoss("donor lost its norm level")
        tau = -q / (qd * nrpi ** t)
        window = min(max(target - m, 1), max(alg.e - 1, 1))
        cand = None
        try:
            lam0 = alg.solve_norm_approx(tau, window)
            trial = vec_add(x2c,
                            vec_scale(alg.uniformizer_pow(t) * lam0, donor))
            q2 = lat.q_value(trial)
            if q2.is_zero() or q2.valuation() > m:
                cand = trial
        except HermlatError:
            pass
        if cand is None:
            cand = _residue_progress(lat, x2c, [donor], m)
        if cand is None:
            raise PrecisionLoss("norm raising stalled")
        x2c = cand
    else:
        raise PrecisionLoss("norm raising did not converge")
    u = isotropy_refine(lat, x2c, [y2, x2c])
    return complete_with_partners(lat, u, [y2, x2], scale_i)


def lines_isotropic_pair(lat, lines, scale_i):
    """Hyperbolic pair from an orthogonal family of norm-attaining lines
    (ramified normal block); None when no pair exists (rank <= 2 cases)."""
    alg = lat.alg
    K = alg.base
    if alg.kind != EtaleAlgebra.RAMIFIED:
        return _lines_pair_unramified(lat, lines, scale_i)
    if len(lines) < 2:
        return None
    qs = [lat.q_value(c) for c in lines]
    target_norm = alg.trace_ideal(scale_i)
    # exact isotropic vector from two lines
    found = None
    for a in range(len(lines)):
        for b in range(len(lines)):
            if a == b:
                continue
            ratio = -qs[a] / qs[b]
            if ratio.valuation() % 2 or not alg.in_E_norm_group(ratio):
                continue
            sft = ratio.valuation() // 2
            nrpi = alg.uniformizer().norm()
            mu = alg.uniformizer_pow(2 * sft) * alg.solve_norm_unit(
                ratio / nrpi ** (2 * sft))
            u = vec_add(lines[a], vec_scale(mu, lines[b]))
            if lat.q_value(u).is_zero():
                found = (u, a, b, None)
                break
        if found:
            break
    if found is None and len(lines) >= 3:
        found = _triple_isotropic(lat, lines, qs)
    if found is None:
        return None
    u, a, b, c_used = found
    # completion: fiber shift from a third line when the trace window needs it
    w0 = lines[a]
    q0 = lat.q_value(w0)
    if q0.valuation() >= target_norm:
        return complete_hyperbolic_pair(lat, u, w0, scale_i)
    others = [idx for idx in range(len(lines)) if idx not in {a, b, c_used}]
    candidates = others + [idx for idx in (b, c_used) if idx is not None]
    nrpi = alg.uniformizer().norm()
    for idx in candidates:
        y = lines[idx]
        qy = lat.q_value(y)
        t = q0.valuation() - qy.valuation()
        if t < 0:
            continue
        tau = -q0 / (qy * nrpi ** t)
        try:
            window = min(max(target_norm - q0.valuation(), 1),
                         max(alg.e - 1, 1))
            mu3 = alg.uniformizer_pow(t) * alg.solve_norm_approx(tau, window)
        except HermlatError:
            continue
        w = vec_add(w0, vec_scale(mu3, y))
        qw = lat.q_value(w)
        pair_uw = lat.inner(u, w)
        if pair_uw.is_zero() or alg.vP(pair_uw) != scale_i:
            continue
        if qw.is_zero() or qw.valuation() >= target_norm:
            return complete_hyperbolic_pair(lat, u, w, scale_i)
        # iterate deeper along the same direction
        w0 = w
        q0 = qw
    return None


def _triple_isotropic(lat, lines, qs):
    """Isotropic vector u = l_a + mu*l_b + mu'*l_c with exact norm solving."""
    alg = lat.alg
    nrpi = alg.uniformizer().norm()
    depth = 2 * alg.e + 2
    unit_reps = alg.unit_residues_O(min(depth, 6))
    pis = [alg.uniformizer_pow(t) for t in range(alg.e + 2)]
    for a in range(len(lines)):
        for b in range(len(lines)):
            if b == a:
                continue
            for c in range(len(lines)):
                if c in (a, b):
                    continue
                qa, qb, qc = qs[a], qs[b], qs[c]
                for t in range(1, alg.e + 2):
                    for rep in unit_reps:
                        mu_c = pis[t] * rep
                        rem = -(qa + mu_c.norm() * qc)
                        if rem.is_zero():
                            u = vec_add(lines[a], vec_scale(mu_c, lines[c]))
                            if lat.q_value(u).is_zero():
                                return (u, a, None, c)
                            continue
                        ratio = rem / qb
                        v = ratio.valuation()
                        if v % 2 or not alg.in_E_norm_group(ratio):
                            continue
                        mu_b = alg.uniformizer_pow(v) * alg.solve_norm_unit(
                            ratio / nrpi ** v)
                        u = vec_add(lines[a],
                                    vec_add(vec_scale(mu_b, lines[b]),
                                            vec_scale(mu_c, lines[c])))
                        if lat.q_value(u).is_zero():
                            return (u, a, b, c)
    return None


def _lines_pair_unramified(lat, lines, scale_i):
    """Unramified kinds: two lines always combine into a hyperbolic pair."""
    alg = lat.alg
    if len(lines) < 2:
        return None
    a, b = lines[0], lines[1]
    qa, qb = lat.q_value(a), lat.q_value(b)
    mu = alg.solve_norm_unit(-qa / qb)
    u = vec_add(a, vec_scale(mu, b))
    if not lat.q_value(u).is_zero():
        raise PrecisionLoss("unramified isotropic combination failed")
    return complete_hyperbolic_pair(lat, u, a, scale_i)


def extract_hyperbolic_in_modular(lat, cols, scale_i):
    """Hyperbolic pair inside the modular block spanned by cols, or None.

    Returns (pair | None, pieces) where pieces = (lines, planes) is the
    orthogonal decomposition computed along the way (planes normalized)."""
    alg = lat.alg
    lines, planes = peel_lines_and_planes(lat, cols)
    if alg.kind != EtaleAlgebra.RAMIFIED:
        if planes:
            # unramified blocks are always normal; planes should not occur
            raise PrecisionLoss("unexpected subnormal piece (unramified)")
        pair = _lines_pair_unramified(lat, lines, scale_i)
        return pair, (lines, planes)
    norm_planes = []
    for (x, y) in planes:
        x, y, k = normalize_plane(lat, x, y, scale_i)
        norm_planes.append((x, y, k))
    norm_planes.sort(key=lambda tr: tr[2])
    # single-plane hyperbolic test
    for (x, y, k) in norm_planes:
        if plane_is_hyperbolic(lat, x, y, scale_i):
            pair = pair_from_hyperbolic_plane(lat, x, y, scale_i)
            return pair, (lines, [(x, y) for x, y, _ in norm_planes])
    # combine two pieces: the lowest-norm donor raises another plane
    pieces = [(lat.q_value(c).valuation(), ("line", c)) for c in lines]
    pieces += [(k, ("plane", (x, y))) for (x, y, k) in norm_planes]
    pieces.sort(key=lambda tr: tr[0])
    if len(pieces) >= 2:
        for di in range(len(pieces)):
            dk, (dkind, dval) = pieces[di]
            donor = dval if dkind == "line" else dval[0]
            for ti in range(len(pieces)):
                if ti == di:
                    continue
                tk, (tkind, tval) = pieces[ti]
                if tkind != "plane" or tk < dk:
                    continue
                try:
                    pair = combine_pieces_pair(lat, donor, tval, scale_i)
                    return pair, (lines, [(x, y) for x, y, _ in norm_planes])
                except HermlatError:
                    continue
    # normal block: all lines
    pair = lines_isotropic_pair(lat, lines, scale_i)
    return pair, (lines, [(x, y) for x, y, _ in norm_planes])


def split_off_plane(lat, cols, a, b):
    """Orthogonal complement of the (possibly non-hyperbolic) plane (a, b)
    inside span(cols)."""
    return split_off_pair(lat, cols, a, b)


def cross_pair_norm_drop(lat, plane1, rest_cols, scale_i):
    """D-plane of norm p^k next to a deeper part of norm p^n with n <= k:
    produce the hyperbolic pair at the plane's scale."""
    alg = lat.alg
    x1, y1, k = plane1
    gram = _gram_of(lat, rest_cols)
    n = _norm_exp_of_gram(alg, gram)
    if n > k:
        raise HypothesisViolation("requires deeper norm <= plane norm")
    z, _ = _norm_attainer(lat, rest_cols, gram, n)
    qz = lat.q_value(z)
    qx = lat.q_value(x1)
    target = alg.trace_ideal(scale_i)
    nrpi = alg.uniformizer().norm()
    u0 = x1
    for _ in range(4 * (alg.e + 2)):
        q = lat.q_value(u0)
        if q.is_zero() or q.valuation() >= target:
            break
        m = q.valuation()
        t = m - n
        if t < 0:
            raise PrecisionLoss("attainer below the deep norm level")
        tau = -q / (qz * nrpi ** t)
        window = min(max(target - m, 1), max(alg.e - 1, 1))
        gam = alg.uniformizer_pow(t) * alg.solve_norm_approx(tau, window)
        cand = vec_add(u0, vec_scale(gam, z))
        q2 = lat.q_value(cand)
        if not q2.is_zero() and q2.valuation() <= m:
            raise PrecisionLoss("norm drop stalled")
        u0 = cand
    u = isotropy_refine(lat, u0, [y1, x1])
    return complete_with_partners(lat, u, [y1, x1], scale_i)


def cross_pair_A_second(lat, donor, plane2, scale_j):
    """Recipe for donor ⟂ A-type plane at scale j (determinant-flip case):
    hyperbolic pair at scale j."""
    alg = lat.alg
    x2, y2, n2 = plane2
    qd = lat.q_value(donor)
    kd = qd.valuation()
    nrpi = alg.uniformizer().norm()
    u0 = y2
    for _ in range(4 * (alg.e + 2)):
        q = lat.q_value(u0)
        if q.is_zero():
            break
        m = q.valuation()
        t = m - kd
        if t < 0:
            raise PrecisionLoss("donor norm too deep for the balance step")
        tau = -q / (qd * nrpi ** t)
        try:
            gam = alg.uniformizer_pow(t) * alg.solve_norm_approx(tau, 1)
        except HermlatError:
            break
        cand = vec_add(u0, vec_scale(gam, donor))
        q2 = lat.q_value(cand)
        if not q2.is_zero() and q2.valuation() <= m:
            break
        u0 = cand
    u = isotropy_refine(lat, u0, [x2, y2])
    u = primitivize(lat, u)
    # completion partner: x2 with a donor shift into the trace ideal
    target = alg.trace_ideal(scale_j)
    w = x2
    for _ in range(4 * (alg.e + 2)):
        qw = lat.q_value(w)
        if qw.is_zero() or qw.valuation() >= target:
            break
        m = qw.valuation()
        t = m - kd
        if t < 0:
            raise PrecisionLoss("donor norm too deep for the completion shift")
        tau = -qw / (qd * nrpi ** t)
        window = min(max(target - m, 1), max(alg.e - 1, 1))
        gam = alg.uniformizer_pow(t) * alg.solve_norm_approx(tau, window)
        cand = vec_add(w, vec_scale(gam, donor))
        q2 = lat.q_value(cand)
        if not q2.is_zero() and q2.valuation() <= m:
            raise PrecisionLoss("completion shift stalled")
        w = cand
    return complete_hyperbolic_pair(lat, u, w, scale_j)


def rearrange_columns(lat, all_cols, donor, plane2, j, i):
    """Replace the deeper plane (x2, y2) by (z, y2) with z = pi^(j-i) * donor
    + x2, realizing the norm rearrangement n -> j - i + k as a basis change.

    Returns (new_plane, other_cols) where other_cols spans the orthogonal
    complement of the new plane inside span(all_cols)."""
    alg = lat.alg
    x2, y2, n2 = plane2
    qd = lat.q_value(donor)
    k = qd.valuation()
    nprime = j - i + k
    if not 0 < j - i <= n2 - k:
        raise HypothesisViolation("rearrangement needs 0 < j-i <= n-k")
    z = vec_add(vec_scale(alg.uniformizer_pow(j - i), donor), x2)
    qz = lat.q_value(z)
    if qz.is_zero() or qz.valuation() != nprime:
        if n2 == nprime:
            z = x2  # already arranged
        else:
            raise PrecisionLoss("rearranged vector misses the target norm")
    pair = lat.inner(z, y2)
    if pair.is_zero() or alg.vP(pair) != j:
        raise PrecisionLoss("rearranged plane lost its scale")
    others = split_off_plane(lat, all_cols, z, y2)
    return (z, y2), others


# ---------------------------------------------------------------------------
# full hyperbolic-splitting decision with witness
# ---------------------------------------------------------------------------


def splits_hyperbolic(lat):
    """Explicit hyperbolic pair splitting L, or None when the classification
    rules one out.  Returns (u, v, scale_exp) with <u,v> = pi^scale_exp."""
    if lat.n == 0:
        return None
    cols = list(cols_of(identity(lat.alg, lat.n)))
    return _splits_hyperbolic_cols(lat, cols)


def _splits_hyperbolic_cols(lat, cols):
    alg = lat.alg
    while cols:
        arrangement = _arrange_first_block(lat, cols)
        if arrangement["pair"] is not None:
            u, v = arrangement["pair"]
            return u, v, arrangement["scale"]
        cross = _cross_block_attempt(lat, arrangement)
        if cross is not None:
            return cross
        # drop the shallowest piece and keep scanning
        cols = arrangement["after_first_piece"]
    return None


def _jordan_cols(lat, cols):
    """Group cols (after projection) into Jordan blocks of span(cols);
    returns the list of column groups, shallowest scale first."""
    alg = lat.alg
    gram = _gram_of(lat, cols)
    sub = HermitianLattice(alg, gram, _skip_checks=True)
    split = sub.jordan_split()
    groups = []
    for blk in split.blocks:
        group = []
        for local in blk.cols:
            full = None
            for cf, base in zip(local, cols):
                term = vec_scale(cf, base)
                full = term if full is None else vec_add(full, term)
            group.append(full)
        groups.append(group)
    return groups


def _arrange_first_block(lat, cols):
    """Jordan-arrange span(cols); reduce the minimal-scale block; try to
    extract a hyperbolic pair inside it."""
    alg = lat.alg
    groups = _jordan_cols(lat, cols)
    first = groups[0]
    deeper = [c for grp in groups[1:] for c in grp]
    scale_i = _block_scale(alg, _gram_of(lat, first))
    pair, (lines, planes) = extract_hyperbolic_in_modular(lat, first, scale_i)
    out = {
        "pair": pair,
        "scale": scale_i,
        "lines": lines,
        "planes": planes,
        "deeper": deeper,
        "cols": cols,
    }
    # columns remaining after dropping the shallowest piece of the block
    if lines:
        out["after_first_piece"] = lines[1:] + [v for xy in planes for v in xy] + deeper
    elif planes:
        out["after_first_piece"] = [v for xy in planes[1:] for v in xy] + deeper
    else:
        out["after_first_piece"] = deeper
    return out


def _cross_block_attempt(lat, arr):
    """Try the cross-block hyperbolic shapes between the reduced first block
    and the deeper part; None when the classification excludes them."""
    alg = lat.alg
    if alg.kind != EtaleAlgebra.RAMIFIED:
        return None
    deeper = arr["deeper"]
    if not deeper:
        return None
    lines, planes, scale_i = arr["lines"], arr["planes"], arr["scale"]
    gram_m = _gram_of(lat, deeper)
    j = _block_scale(alg, _gram_of(lat, _jordan_cols(lat, deeper)[0]))
    n = _norm_exp_of_gram(alg, gram_m)
    e = alg.e

    if len(planes) == 1 and not lines:
        x1, y1 = planes[0]
        x1, y1, k = normalize_plane(lat, x1, y1, scale_i)
        if n <= k:
            uv = cross_pair_norm_drop(lat, (x1, y1, k), deeper, scale_i)
            return uv[0], uv[1], scale_i
        if j - scale_i <= n - k:
            return _pair_after_rearrange(lat, arr["cols"], x1, (x1, y1, k),
                                         deeper, j, scale_i, k)
        return None

    if lines and not planes:
        donor = min(lines, key=lambda c: lat.q_value(c).valuation())
        k = lat.q_value(donor).valuation()
        dgroups = _jordan_cols(lat, deeper)
        mgram = _gram_of(lat, dgroups[0])
        m_norm = _norm_exp_of_gram(alg, mgram)
        m_scale = _block_scale(alg, mgram)
        normal_first = alg.vK_in_P(m_norm) == m_scale
        if normal_first:
            return None
        if j - scale_i <= n - k and n == m_norm:
            return _pair_after_rearrange(lat, arr["cols"], donor, None,
                                         deeper, j, scale_i, k)
        return None
    return None


def _pair_after_rearrange(lat, all_cols, donor, plane1, deeper, j, i, k):
    """Arrange the deeper part's first plane to norm p^(j-i+k), then build the
    hyperbolic pair via the H-type or A-type recipe; None if excluded."""
    alg = lat.alg
    e = alg.e
    groups = _jordan_cols(lat, deeper)
    first = groups[0]
    m_scale = _block_scale(alg, _gram_of(lat, first))
    if m_scale != j:
        raise PrecisionLoss("deeper scale drifted during rearrangement")
    lines2, planes2 = peel_lines_and_planes(lat, first)
    if not planes2:
        return None
    x2, y2 = planes2[0]
    x2, y2, n2 = normalize_plane(lat, x2, y2, j)
    nprime = j - i + k
    if n2 > nprime:
        (z, y2b), _ = rearrange_columns(lat, all_cols, donor, (x2, y2, n2), j, i)
        x2, y2, n2 = normalize_plane(lat, z, y2b, j)
    if n2 != nprime:
        # the deeper block already sits at or below the target norm
        if n2 < nprime:
            nprime = n2
    if plane_is_hyperbolic(lat, x2, y2, j):
        uv = combine_pieces_pair(lat, donor, (x2, y2), j)
        return uv[0], uv[1], j
    if i + e - 2 * k > j - i:
        uv = cross_pair_A_second(lat, donor, (x2, y2, n2), j)
        return uv[0], uv[1], j
    # remaining shape: a second deeper piece of norm <= n' next to the plane
    rest2 = [c for grp in groups[1:] for c in grp]
    rest2 += [v for xy in planes2[1:] for v in xy] + lines2
    if rest2:
        g2 = _gram_of(lat, rest2)
        n_rest = _norm_exp_of_gram(alg, g2)
        if n_rest <= n2:
            uv = cross_pair_norm_drop(lat, (x2, y2, n2), rest2, j)
            return uv[0], uv[1], j
    return None


# ---------------------------------------------------------------------------
# public rearrangement of a deeper Jordan block (norm adjustment)
# ---------------------------------------------------------------------------


def rearrange_jordan(lat):
    """Rewrite L = P ⟂ M (P the minimal-scale modular block of norm p^k, M
    deeper with scale P^j and norm p^n, 0 < j-i <= n-k) into an isometric
    lattice whose deeper block has norm p^(j-i+k).

    Returns (new_lattice, transform); raises HypothesisViolation when the
    inputs do not satisfy the rearrangement hypotheses."""
    alg = lat.alg
    if alg.kind != EtaleAlgebra.RAMIFIED:
        raise HypothesisViolation("rearrangement applies to the ramified kind")
    cols = list(cols_of(identity(alg, lat.n)))
    groups = _jordan_cols(lat, cols)
    if len(groups) < 2:
        raise HypothesisViolation("need at least two Jordan blocks")
    first = groups[0]
    deeper = [c for grp in groups[1:] for c in grp]
    i = _block_scale(alg, _gram_of(lat, first))
    k = _norm_exp_of_gram(alg, _gram_of(lat, first))
    dgram = _gram_of(lat, deeper)
    j = _block_scale(alg, _gram_of(lat, _jordan_cols(lat, deeper)[0]))
    n = _norm_exp_of_gram(alg, dgram)
    if not 0 < j - i <= n - k:
        raise HypothesisViolation("rearrangement needs 0 < j-i <= n-k")
    donor, _ = _norm_attainer(lat, first, _gram_of(lat, first), k)
    groups2 = _jordan_cols(lat, deeper)
    lines2, planes2 = peel_lines_and_planes(lat, groups2[0])
    if not planes2:
        raise HypothesisViolation("deeper block has no subnormal plane")
    x2, y2 = planes2[0]
    x2, y2, n2 = normalize_plane(lat, x2, y2, j)
    (z, y2b), others = rearrange_columns(lat, cols, donor, (x2, y2, n2), j, i)
    new_cols = others + [z, y2b]
    t = mat_from_cols(new_cols)
    gram = _gram_of(lat, new_cols)
    new_lat = HermitianLattice(alg, gram)
    ok, failed, _ = isometry_conditions(lat, new_lat)
    if not ok:
        raise PrecisionLoss(
            f"rearranged lattice failed the isometry check (condition {failed})")
    return new_lat, t


def plane_standard_form(lat, x, y, scale_i):
    """Exact standard basis (u, v) of a subnormal modular plane at scale i:
    Q(u) = p^k exactly, <u,v> = pi^i exactly, and Q(v) either zero or of
    valuation exactly i - k + e - 1 (and at least that deep in any case)."""
    alg = lat.alg
    K = alg.base
    x, y, k = normalize_plane(lat, x, y, scale_i)
    # 1. make the leading form value a unit-norm multiple of p^k, then exact
    qx = lat.q_value(x)
    eps = qx / K.uniformizer_pow(k)
    if alg.norm_class(eps) == NONNORM:
        pivot = lat.inner(y, x)
        found = None
        for tau in K.residue_system(max(alg.e, 1)):
            if tau.is_zero():
                continue
            try:
                lam = alg.solve_trace(pivot, tau * K.uniformizer_pow(
                    alg.trace_ideal(scale_i)))
            except HermlatError:
                continue
            cand = vec_add(x, vec_scale(lam, y))
            qc = lat.q_value(cand)
            if qc.is_zero() or qc.valuation() != k:
                continue
            if alg.norm_class(qc / K.uniformizer_pow(k)) == NORM:
                found = cand
                break
        if found is None:
            raise PrecisionLoss("no norm-class flip for the plane leader")
        x = found
        qx = lat.q_value(x)
        eps = qx / K.uniformizer_pow(k)
    mu = alg.solve_norm_unit(K.one / eps)
    u = vec_scale(mu, x)
    if lat.q_value(u) != K.uniformizer_pow(k):
        raise PrecisionLoss("leader normalization failed")
    # 2. pairing to exactly pi^i
    pair = lat.inner(u, y)
    target = alg.uniformizer_pow(scale_i)
    v = vec_scale((target / pair).conj(), y)
    # 3. drive Q(v) down, stalling only at the anisotropy level
    floor = scale_i - k + alg.e - 1
    v = _drive_corner_down(lat, u, v, scale_i, k, floor)
    # re-normalize the pairing (corner moves preserve it only up to deep terms)
    pair = lat.inner(u, v)
    v = vec_scale((target / pair).conj(), v)
    qv = lat.q_value(v)
    if not qv.is_zero() and qv.valuation() < floor:
        raise PrecisionLoss("plane corner stuck above the anisotropy level")
    if lat.inner(u, v) != target:
        raise PrecisionLoss("pairing normalization failed")
    return u, v, k


def _drive_corner_down(lat, u, v, scale_i, k, floor):
    """Shift v by multiples of u until Q(v) vanishes or reaches the level
    where the anisotropic obstruction stalls further progress."""
    alg = lat.alg
    K = alg.base
    nrpi = alg.uniformizer().norm()
    for _ in range(6 * (alg.e + 3)):
        qv = lat.q_value(v)
        if qv.is_zero():
            return v
        m = qv.valuation()
        pair = lat.inner(u, v)
        progressed = False
        # trace-dominant kill
        try:
            lam = alg.solve_trace(pair, -qv)
            cand = vec_add(v, vec_scale(lam, u))
            q2 = lat.q_value(cand)
            if q2.is_zero() or q2.valuation() > m:
                v = cand
                progressed = True
        except HermlatError:
            pass
        if not progressed:
            # norm-balanced kill against Q(u) = p^k
            t = m - k
            if t >= 0:
                tau = -qv / (K.uniformizer_pow(k) * nrpi ** t)
                try:
                    lam0 = alg.solve_norm_approx(tau, 1)
                    lam = alg.uniformizer_pow(t) * lam0
                    cand = vec_add(v, vec_scale(lam, u))
                    q2 = lat.q_value(cand)
                    if q2.is_zero() or q2.valuation() > m:
                        v = cand
                        progressed = True
                except HermlatError:
                    pass
        if not progressed:
            if m >= floor:
                return v
            raise PrecisionLoss("corner reduction stalled above the floor")
    return v
