"""Hermitian lattices over a quadratic etale algebra, given by Gram matrices.

A lattice is a free O-module with a non-degenerate hermitian form; the Gram
matrix is taken with respect to the standard basis.  Sublattices are always
described by transform matrices (columns = new basis vectors in the original
coordinates), never by generating sets: O is local, so finitely generated
torsion-free modules are free.
"""

from __future__ import annotations

from .errors import (
    HermlatError,
    PrecisionLoss,
    RangeViolation,
    WrongKind,
    ZeroValuation,
)
from .etale import INF, EtaleAlgebra
from .linalg import (
    conj_transpose,
    cols_of,
    identity,
    mat_det,
    mat_eq,
    mat_from_cols,
    mat_mul,
    mat_solve,
    mat_vec,
    vec_add,
    vec_scale,
    vec_sub,
)


class HermitianLattice:
    def __init__(self, alg, gram, _skip_checks=False):
        self.alg = alg
        self.gram = tuple(tuple(row) for row in gram)
        self.n = len(self.gram)
        if self.n and not _skip_checks:
            if any(len(row) != self.n for row in self.gram):
                raise HermlatError("Gram matrix must be square")
            if not mat_eq(self.gram, conj_transpose(self.gram)):
                raise HermlatError("Gram matrix is not hermitian")
            det = mat_det(self.gram)
            if det.is_zero():
                raise HermlatError("lattice is degenerate at working precision")
            self._det = det
        else:
            self._det = None

    # -- basic maps ----------------------------------------------------------

    def inner(self, x, y):
        """<x, y> = x^T G conj(y); E-linear in x."""
        gy = mat_vec(self.gram, tuple(c.conj() for c in y))
        acc = None
        for a, b in zip(x, gy):
            t = a * b
            acc = t if acc is None else acc + t
        return acc

    def q_value(self, x):
        """<x, x>, returned as an element of K."""
        return self.inner(x, x).as_K()

    def det(self):
        if self._det is None:
            self._det = mat_det(self.gram)
        return self._det

    def basis(self):
        from .linalg import basis_vector
        return [basis_vector(self.alg, self.n, i) for i in range(self.n)]

    def is_primitive(self, x):
        """O x = E x ∩ L, i.e. the coordinates generate the unit ideal."""
        alg = self.alg
        if alg.kind == EtaleAlgebra.SPLIT:
            ok0 = any(not c.x0.is_zero() and c.x0.valuation() == 0 for c in x)
            ok1 = any(not c.x1.is_zero() and c.x1.valuation() == 0 for c in x)
            return ok0 and ok1
        return any(not c.is_zero() and alg.vP(c) == 0 for c in x)

    # -- scale / norm / determinant -------------------------------------------

    def scale_ideal(self):
        if self.n == 0:
            raise HermlatError("scale of the zero lattice")
        alg = self.alg
        acc = None
        for row in self.gram:
            for e in row:
                if e.is_zero():
                    continue
                v = alg.valuation_P(e)
                acc = v if acc is None else acc.join(v)
        if acc is None:
            raise HermlatError("zero Gram matrix")
        return acc.join(acc.conj())

    def scale_exp(self):
        return self.scale_ideal().exponent()

    def norm_exp(self):
        """Exponent of norm(L) as an o-ideal (v_p units)."""
        if self.n == 0:
            raise HermlatError("norm of the zero lattice")
        alg = self.alg
        best = INF
        for i in range(self.n):
            d = self.gram[i][i]
            if not d.is_zero():
                best = min(best, d.as_K().valuation())
            for j in range(i + 1, self.n):
                t = alg.trace_ideal_of(self.gram[i][j])
                best = min(best, t)
        if best is INF:
            raise HermlatError("zero Gram matrix")
        return best

    def is_normal(self):
        """norm(L) O == scale(L)."""
        return self.alg.vK_in_P(self.norm_exp()) == self.scale_exp()

    def det_class(self):
        """(v_p(det), norm class of the unit part)."""
        det = self.det().as_K()
        v = det.valuation()
        unit = det / self.alg.base.uniformizer_pow(v)
        return v, self.alg.norm_class(unit)

    # -- duals and modularity ----------------------------------------------------

    def dual_sublattice(self, a_exp):
        """L^A for A = P^a: columns of the returned transform span
        {x in L : <x, L> ⊆ P^a}; also returns its Gram.

        Accepts a plain exponent or a conjugation-stable IdealExp."""
        if hasattr(a_exp, "exponent"):
            a_exp = a_exp.exponent()
        alg = self.alg
        n = self.n
        gt = tuple(tuple(self.gram[i][j] for i in range(n)) for j in range(n))
        if alg.kind == EtaleAlgebra.SPLIT:
            t0 = _dual_slot(alg.base, [[e.x0 for e in row] for row in gt], a_exp)
            t1 = _dual_slot(alg.base, [[e.x1 for e in row] for row in gt], a_exp)
            t = tuple(tuple(alg.element(t0[i][j], t1[i][j]) for j in range(n))
                      for i in range(n))
        else:
            from .linalg import smith
            d, u, w = smith(alg, gt)
            mus = []
            for k in range(n):
                vk = alg.vP(d[k][k])
                mus.append(alg.uniformizer_pow(max(a_exp - vk, 0)))
            t = tuple(tuple(w[i][j] * mus[j] for j in range(n)) for i in range(n))
        gram = mat_mul(mat_mul(tuple(zip(*t)), self.gram),
                       tuple(tuple(e.conj() for e in row) for row in t))
        return t, gram

    def is_modular(self, i):
        if self.n == 0:
            return True
        alg = self.alg
        for row in self.gram:
            for e in row:
                if e.is_zero():
                    continue
                v = alg.valuation_P(e)
                if min(v.a, v.b) < i:
                    return False
        det = self.det().as_K()
        return alg.vK_in_P(det.valuation()) == self.n * i

    # -- rescaling -----------------------------------------------------------------

    def rescale(self, a):
        if isinstance(a, int):
            a = self.alg.base.from_int(a)
        ae = self.alg.from_K(a)
        return HermitianLattice(
            self.alg, tuple(tuple(e * ae for e in row) for row in self.gram))

    # -- Jordan splitting --------------------------------------------------------

    def jordan_split(self):
        if self.n == 0:
            return JordanSplitting(self, [], ())
        if self.alg.kind == EtaleAlgebra.SPLIT:
            return self._jordan_split_split()
        return self._jordan_split_field()

    def _jordan_split_split(self):
        alg, K, n = self.alg, self.alg.base, self.n
        g1 = [[e.x0 for e in row] for row in self.gram]
        d, u, w = _smith_K(K, g1)
        # columns of T: slot-1 occurs as U^T, slot-2 as W
        ut = list(zip(*u))
        t = tuple(tuple(alg.element(ut[i][j], w[i][j]) for j in range(n))
                  for i in range(n))
        order = sorted(range(n), key=lambda k: d[k][k].valuation())
        t = tuple(tuple(row[j] for j in order) for row in t)
        pieces = [(d[k][k].valuation(), 1) for k in order]
        return self._assemble_jordan(cols_of(t), pieces)

    def _jordan_split_field(self):
        alg = self.alg
        cols = list(cols_of(identity(alg, self.n)))
        ordered = []
        pieces = []  # (scale_exp, column count) per peeled piece
        while cols:
            gram = _gram_of(self, cols)
            s = _min_vP(alg, gram)
            piece, drop = self._jordan_pivot(cols, gram, s)
            ordered.extend(piece)
            pieces.append((s, len(piece)))
            rest = [c for idx, c in enumerate(cols) if idx not in drop]
            if rest:
                pg = _gram_of(self, piece)
                projected = []
                for y in rest:
                    rhs = tuple(self.inner(y, p) for p in piece)
                    coeffs = mat_solve(tuple(zip(*pg)), rhs)
                    yy = y
                    for cf, p in zip(coeffs, piece):
                        yy = vec_sub(yy, vec_scale(cf, p))
                    projected.append(yy)
                rest = projected
            cols = rest
        return self._assemble_jordan(ordered, pieces)

    def _jordan_pivot(self, cols, gram, s):
        """One rank-1 (normal) or rank-2 (subnormal) piece of minimal scale.

        Returns (piece vectors, indices of cols eliminated by the piece)."""
        alg = self.alg
        m = len(cols)
        k = _norm_exp_of_gram(alg, gram)
        if alg.vK_in_P(k) == s:
            x, lead = _norm_attainer(self, cols, gram, k)
            return [x], {lead}
        best = None
        for i in range(m):
            for j in range(i + 1, m):
                e = gram[i][j]
                if e.is_zero():
                    continue
                v = alg.vP(e)
                if best is None or v < best[0]:
                    best = (v, i, j)
        if best is None or best[0] != s:
            raise PrecisionLoss("no scale-attaining pivot found")
        _, i, j = best
        return [cols[i], cols[j]], {i, j}

    def _assemble_jordan(self, ordered_cols, pieces):
        alg = self.alg
        t = mat_from_cols(ordered_cols)
        tdet = mat_det(t)
        v = alg.valuation_P(tdet)
        if not (v.a == 0 and v.b == 0):
            raise PrecisionLoss("Jordan transform is not unimodular")
        # merge consecutive peeled pieces of equal scale into one modular block
        merged = []
        pos = 0
        for s, count in pieces:
            group = ordered_cols[pos:pos + count]
            pos += count
            if merged and merged[-1][0] == s:
                merged[-1] = (s, merged[-1][1] + list(group))
            else:
                merged.append((s, list(group)))
        merged = [group for _, group in merged]
        blocks = []
        for group in merged:
            g = _gram_of(self, group)
            blocks.append(JordanBlock(
                scale_exp=_min_vP_sym(alg, g),
                rank=len(group),
                norm_exp=_norm_exp_of_gram(alg, g),
                normal=alg.vK_in_P(_norm_exp_of_gram(alg, g)) == _min_vP_sym(alg, g),
                gram=g,
                cols=tuple(group)))
        return JordanSplitting(self, blocks, t)


class JordanBlock:
    __slots__ = ("scale_exp", "rank", "norm_exp", "normal", "gram", "cols")

    def __init__(self, scale_exp, rank, norm_exp, normal, gram, cols):
        self.scale_exp = scale_exp
        self.rank = rank
        self.norm_exp = norm_exp
        self.normal = normal
        self.gram = gram
        self.cols = cols

    def __repr__(self):
        tag = "normal" if self.normal else "subnormal"
        return (f"JordanBlock(scale={self.scale_exp}, rank={self.rank}, "
                f"norm=p^{self.norm_exp}, {tag})")


class JordanSplitting:
    def __init__(self, lattice, blocks, transform):
        self.lattice = lattice
        self.blocks = blocks
        self.transform = transform

    def jordan_type(self):
        return tuple((b.rank, b.scale_exp, b.normal) for b in self.blocks)

    def block_diagonal(self):
        alg = self.lattice.alg
        n = sum(b.rank for b in self.blocks)
        rows = []
        off = 0
        zero = alg.zero
        grams = [b.gram for b in self.blocks]
        for g in grams:
            for r in g:
                rows.append((zero,) * off + tuple(r) +
                            (zero,) * (n - off - len(r)))
            off += len(g)
        return tuple(rows)

    def __repr__(self):
        return f"JordanSplitting({list(self.blocks)})"


# -- helpers -------------------------------------------------------------------


def _gram_of(lat, cols):
    return tuple(tuple(lat.inner(a, b) for b in cols) for a in cols)


def _min_vP(alg, gram):
    best = None
    for row in gram:
        for e in row:
            if e.is_zero():
                continue
            v = alg.vP(e)
            if best is None or v < best:
                best = v
    if best is None:
        raise ZeroValuation("zero Gram")
    return best


def _min_vP_sym(alg, gram):
    if alg.kind == EtaleAlgebra.SPLIT:
        best = None
        for row in gram:
            for e in row:
                for comp in (e.x0, e.x1):
                    if comp.is_zero():
                        continue
                    v = comp.valuation()
                    if best is None or v < best:
                        best = v
        if best is None:
            raise ZeroValuation("zero Gram")
        return best
    return _min_vP(alg, gram)


def _norm_exp_of_gram(alg, gram):
    best = INF
    for i in range(len(gram)):
        d = gram[i][i]
        if not d.is_zero():
            best = min(best, d.as_K().valuation())
        for j in range(i + 1, len(gram)):
            best = min(best, alg.trace_ideal_of(gram[i][j]))
    if best is INF:
        raise ZeroValuation("zero Gram")
    return best


def _norm_attainer(lat, cols, gram, k):
    """A vector in the span of cols whose form value has valuation exactly k.

    Returns (vector, index of the column it can replace in a basis)."""
    alg = lat.alg
    m = len(cols)
    for i in range(m):
        d = gram[i][i]
        if not d.is_zero() and d.as_K().valuation() == k:
            return cols[i], i
    pk = alg.base.uniformizer_pow(k)
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            e = gram[j][i]
            if e.is_zero() or alg.trace_ideal_of(e) != k:
                continue
            for tau in alg.base.residue_lifts():
                if tau.is_zero():
                    continue
                lam = alg.solve_trace(e, pk * tau)
                x = vec_add(cols[i], vec_scale(lam, cols[j]))
                q = lat.q_value(x)
                if not q.is_zero() and q.valuation() == k:
                    return x, i
    from .errors import SearchExhausted
    raise SearchExhausted("no norm-attaining vector found")


def _smith_K(K, a):
    """Smith reduction over the valuation ring of K (FieldElement entries)."""
    n = len(a)
    m = len(a[0]) if a else 0
    a = [list(row) for row in a]
    u = [[K.one if i == j else K.zero for j in range(n)] for i in range(n)]
    w = [[K.one if i == j else K.zero for j in range(m)] for i in range(m)]
    for kk in range(min(n, m)):
        best = None
        for i in range(kk, n):
            for j in range(kk, m):
                if a[i][j].is_zero():
                    continue
                v = a[i][j].valuation()
                if best is None or v < best[0]:
                    best = (v, i, j)
        if best is None:
            break
        _, pi, pj = best
        if pi != kk:
            a[pi], a[kk] = a[kk], a[pi]
            u[pi], u[kk] = u[kk], u[pi]
        if pj != kk:
            for row in a:
                row[pj], row[kk] = row[kk], row[pj]
            for row in w:
                row[pj], row[kk] = row[kk], row[pj]
        pivot = a[kk][kk]
        for i in range(kk + 1, n):
            if a[i][kk].is_zero():
                continue
            fac = a[i][kk] / pivot
            for j in range(m):
                a[i][j] = a[i][j] - fac * a[kk][j]
            for j in range(n):
                u[i][j] = u[i][j] - fac * u[kk][j]
        for j in range(kk + 1, m):
            if a[kk][j].is_zero():
                continue
            fac = a[kk][j] / pivot
            for i in range(n):
                a[i][j] = a[i][j] - fac * a[i][kk]
            for i in range(m):
                w[i][j] = w[i][j] - fac * w[i][kk]
    return ([row[:] for row in a], [row[:] for row in u], [row[:] for row in w])


def _dual_slot(K, gt_slot, a_exp):
    """Slot-wise dual basis for the split case: {x : G^T x in p^a o^n}."""
    n = len(gt_slot)
    d, u, w = _smith_K(K, gt_slot)
    cols = []
    for k in range(n):
        vk = d[k][k].valuation()
        mu = K.uniformizer_pow(max(a_exp - vk, 0))
        cols.append([w[i][k] * mu for i in range(n)])
    return [[cols[j][i] for j in range(n)] for i in range(n)]


# -- standard planes --------------------------------------------------------------


def standard_H(alg, i):
    pi = alg.uniformizer_pow(i)
    return HermitianLattice(alg, ((alg.zero, pi), (pi.conj(), alg.zero)))


def standard_Hik(alg, i, k):
    if alg.kind != EtaleAlgebra.RAMIFIED:
        raise WrongKind("H(i,k) standard planes require the ramified kind")
    if not (i + alg.e >= 2 * k >= i):
        raise RangeViolation(f"H({i},{k}) needs {i} <= 2k <= {i}+e")
    pi = alg.uniformizer_pow(i)
    pk = alg.from_K(alg.base.uniformizer_pow(k))
    return HermitianLattice(alg, ((pk, pi), (pi.conj(), alg.zero)))


def standard_A(alg, i, k):
    if alg.kind != EtaleAlgebra.RAMIFIED:
        raise WrongKind("A(i,k) standard planes require the ramified kind")
    if not (i <= 2 * k < i + alg.e):
        raise RangeViolation(f"A({i},{k}) needs i <= 2k < i+e")
    pi = alg.uniformizer_pow(i)
    pk = alg.from_K(alg.base.uniformizer_pow(k))
    corner = alg.from_K(-alg.u0() * alg.base.uniformizer_pow(i - k))
    return HermitianLattice(alg, ((pk, pi), (pi.conj(), corner)))


def orthogonal_sum(*lats):
    alg = lats[0].alg
    n = sum(l.n for l in lats)
    rows = []
    off = 0
    for l in lats:
        for r in l.gram:
            rows.append((alg.zero,) * off + tuple(r) + (alg.zero,) * (n - off - l.n))
        off += l.n
    return HermitianLattice(alg, rows)
