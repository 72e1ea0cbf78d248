"""Small exact linear algebra over a quadratic etale algebra.

Matrices are tuples of row tuples of AlgElements; vectors are tuples of
AlgElements.  Everything is sized for ranks well under ten, so determinants
use cofactor expansion with memoization and inverses go through the adjugate.
"""

from __future__ import annotations

from .errors import HermlatError
from .etale import EtaleAlgebra

def vec_add(x, y):
    return tuple(a + b for a, b in zip(x, y))


def vec_sub(x, y):
    return tuple(a - b for a, b in zip(x, y))


def vec_scale(c, x):
    return tuple(c * a for a in x)


def vec_is_zero(x):
    return all(a.is_zero() for a in x)


def zero_vector(alg, n):
    return (alg.zero,) * n


def basis_vector(alg, n, i):
    return tuple(alg.one if j == i else alg.zero for j in range(n))


def identity(alg, n):
    return tuple(tuple(alg.one if i == j else alg.zero for j in range(n))
                 for i in range(n))


def mat_from_cols(cols):
    n = len(cols[0])
    return tuple(tuple(col[i] for col in cols) for i in range(n))


def cols_of(mat):
    if not mat:
        return ()
    return tuple(tuple(row[j] for row in mat) for j in range(len(mat[0])))


def mat_mul(a, b):
    bt = cols_of(b)
    return tuple(tuple(_dot(row, col) for col in bt) for row in a)


def _dot(x, y):
    acc = None
    for a, b in zip(x, y):
        term = a * b
        acc = term if acc is None else acc + term
    return acc


def mat_vec(a, x):
    return tuple(_dot(row, x) for row in a)


def mat_conj(a):
    return tuple(tuple(e.conj() for e in row) for row in a)


def conj_transpose(a):
    return tuple(tuple(a[j][i].conj() for j in range(len(a)))
                 for i in range(len(a[0]) if a else 0))


def mat_sub(a, b):
    return tuple(tuple(x - y for x, y in zip(r1, r2)) for r1, r2 in zip(a, b))


def mat_eq(a, b):
    return all(x == y for r1, r2 in zip(a, b) for x, y in zip(r1, r2))


def mat_det(a):
    n = len(a)
    if n == 0:
        raise HermlatError("determinant of an empty matrix")
    memo = {}

    def minor(row, mask):
        if mask == 0:
            return None
        key = (row, mask)
        if key in memo:
            return memo[key]
        cols = [j for j in range(n) if mask & (1 << j)]
        if len(cols) == 1:
            memo[key] = a[row][cols[0]]
            return memo[key]
        acc = None
        sign = 1
        for idx, j in enumerate(cols):
            entry = a[row][j]
            if not entry.is_zero():
                sub = minor(row + 1, mask & ~(1 << j))
                term = entry * sub
                if sign < 0:
                    term = -term
                acc = term if acc is None else acc + term
            sign = -sign
        if acc is None:
            acc = a[0][0].alg.zero
        memo[key] = acc
        return acc

    return minor(0, (1 << n) - 1)


def mat_adjugate(a):
    n = len(a)
    if n == 1:
        return ((a[0][0].alg.one,),)
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            sub = tuple(tuple(a[r][c] for c in range(n) if c != i)
                        for r in range(n) if r != j)
            d = mat_det(sub)
            if (i + j) % 2:
                d = -d
            row.append(d)
        out.append(tuple(row))
    return tuple(out)


def mat_inv(a):
    d = mat_det(a)
    adj = mat_adjugate(a)
    dinv = a[0][0].alg.one / d
    return tuple(tuple(e * dinv for e in row) for row in adj)


def mat_solve(a, b):
    """Solve a x = b for a column vector b."""
    return mat_vec(mat_inv(a), b)


def is_integral_matrix(a):
    return all(e.is_zero() or e.is_integral() for row in a for e in row)


def _min_vP_entry(alg, a, skip_rows, skip_cols):
    best = None
    for i, row in enumerate(a):
        if i in skip_rows:
            continue
        for j, e in enumerate(row):
            if j in skip_cols or e.is_zero():
                continue
            v = alg.vP(e)
            if best is None or v < best[0]:
                best = (v, i, j)
    return best


def smith(alg, a):
    """Smith-style reduction over the ring of integers of a field-kind algebra.

    Returns (d, u, w) with d = u * a * w diagonal (entries sorted by
    valuation) and u, w unimodular over O.  Split algebras are handled by the
    caller componentwise.
    """
    if alg.kind == EtaleAlgebra.SPLIT:
        raise HermlatError("smith() is for field kinds; split goes componentwise")
    n = len(a)
    m = len(a[0]) if a else 0
    u = identity(alg, n)
    w = identity(alg, m)
    a = [list(row) for row in a]
    u = [list(row) for row in u]
    w = [list(row) for row in w]

    def swap_rows(mat, i, j):
        mat[i], mat[j] = mat[j], mat[i]

    def swap_cols(mat, i, j):
        for row in mat:
            row[i], row[j] = row[j], row[i]

    for k in range(min(n, m)):
        piv = _min_vP_entry(alg, a, set(range(k)), set(range(k)))
        if piv is None:
            break
        _, pi, pj = piv
        if pi != k:
            swap_rows(a, pi, k)
            swap_rows(u, pi, k)
        if pj != k:
            swap_cols(a, pj, k)
            swap_cols(w, pj, k)
        pivot = a[k][k]
        for i in range(k + 1, n):
            if a[i][k].is_zero():
                continue
            fac = a[i][k] / pivot
            for j in range(m):
                a[i][j] = a[i][j] - fac * a[k][j]
            for j in range(n):
                u[i][j] = u[i][j] - fac * u[k][j]
        for j in range(k + 1, m):
            if a[k][j].is_zero():
                continue
            fac = a[k][j] / pivot
            for i in range(n):
                a[i][j] = a[i][j] - fac * a[i][k]
            for i in range(len(w)):
                w[i][j] = w[i][j] - fac * w[i][k]
    return (tuple(tuple(r) for r in a),
            tuple(tuple(r) for r in u),
            tuple(tuple(r) for r in w))
