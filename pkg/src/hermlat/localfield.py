"""Exact arithmetic in a local field K of characteristic zero.

K is realized as a tower over the p-adic rationals: one optional unramified
step (generator ``w``, monic integral defining polynomial that stays
irreducible over the residue field) followed by one optional totally ramified
Eisenstein step (generator ``t``).  Elements are stored as coefficient vectors
over the basis ``w^a t^b`` with arbitrary-precision integer coefficients
reduced modulo p^mcap, together with a power-of-p shift and a per-element
digit count, so all ring operations are exact on representatives.

The normalized valuation ``v`` gives the uniformizer of K valuation 1
(so v(p) = d, the ramification degree of the Eisenstein step).
"""

from __future__ import annotations

import itertools
from functools import lru_cache

from .errors import (
    DivisionByZeroModPrecision,
    HermlatError,
    NegativeValuation,
    NotAUnit,
    PrecisionLoss,
    ZeroValuation,
)


def _int_valuation(n, p, cap):
    """p-adic valuation of the integer n, capped at `cap` (returns cap for 0)."""
    if n == 0:
        return cap
    if p == 2:
        v = (n & -n).bit_length() - 1
        return v if v < cap else cap
    v = 0
    p16 = p ** 16
    while v + 16 <= cap and n % p16 == 0:
        n //= p16
        v += 16
    while v < cap and n % p == 0:
        n //= p
        v += 1
    return v


# ---------------------------------------------------------------------------
# residue-field helpers: elements of GF(p^f) are int tuples of length f,
# low-degree first, reduced mod p and mod the defining polynomial.
# ---------------------------------------------------------------------------

def gf_add(a, b, p):
    return tuple((x + y) % p for x, y in zip(a, b))


def gf_mul(a, b, p, redpoly):
    f = len(a)
    prod = [0] * (2 * f - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                prod[i + j] += x * y
    for k in range(2 * f - 2, f - 1, -1):
        c = prod[k] % p
        if c:
            # x^f = -redpoly, applied at degree k
            for j, r in enumerate(redpoly):
                prod[k - f + j] -= c * r
        prod[k] = 0
    return tuple(v % p for v in prod[:f])


def gf_pow(a, n, p, redpoly):
    result = tuple([1] + [0] * (len(a) - 1))
    base = a
    while n:
        if n & 1:
            result = gf_mul(result, base, p, redpoly)
        base = gf_mul(base, base, p, redpoly)
        n >>= 1
    return result


def gf_inv(a, p, redpoly):
    if not any(a):
        raise ZeroDivisionError("zero in residue field")
    q = p ** len(a)
    return gf_pow(a, q - 2, p, redpoly)


def gf_elements(p, f):
    """All q = p^f residue-field elements as coefficient tuples."""
    return [tuple(c) for c in itertools.product(range(p), repeat=f)]


# ---------------------------------------------------------------------------


class LocalField:
    """A finite extension of Q_p presented as an unramified-then-Eisenstein tower."""

    def __init__(self, p, unramified_poly=None, eisenstein_poly=None,
                 precision=64, guard=16):
        if p < 2 or any(p % k == 0 for k in range(2, int(p ** 0.5) + 1)):
            raise HermlatError(f"p = {p} is not prime")
        if precision <= 0 or guard <= 0:
            raise HermlatError("precision and guard must be positive")
        self.p = p
        self.precision = precision
        self.guard = guard

        # unramified step: poly x^f + u_{f-1} x^{f-1} + ... + u_0, ints
        if unramified_poly is None:
            self.f = 1
            self._upoly = (0,)  # x = 0 i.e. w ≡ 0; unused when f == 1
        else:
            upoly = tuple(int(c) for c in unramified_poly)
            self.f = len(upoly)
            if self.f < 1:
                raise HermlatError("unramified polynomial must be non-constant")
            self._upoly = upoly
        self._respoly = tuple(c % p for c in self._upoly)

        # Eisenstein step: coefficients live in the unramified subfield;
        # each is an int or a length-f vector.
        if eisenstein_poly is None:
            self.d = 1
            self._epoly = ()
        else:
            coeffs = []
            for c in eisenstein_poly:
                if isinstance(c, int):
                    vec = (c,) + (0,) * (self.f - 1)
                else:
                    vec = tuple(int(x) for x in c)
                    if len(vec) != self.f:
                        raise HermlatError("Eisenstein coefficient has wrong length")
                coeffs.append(vec)
            self._epoly = tuple(coeffs)
            self.d = len(coeffs)
            if self.d < 1:
                raise HermlatError("Eisenstein polynomial must be non-constant")

        # guaranteed digits, plus working headroom: long dependent chains of
        # divide-and-remultiply burn one digit each, and the factorization
        # pipelines run a few hundred of them before any result is reported
        base_digits = -(-(precision + guard) // self.d)  # ceil
        self.mcap = 3 * base_digits + 8
        self.pmod = p ** self.mcap
        self._ppows = {}
        self.guard_digits = max(1, -(-guard // self.d))
        self.q = p ** self.f
        self.nbasis = self.f * self.d

        if self.f > 1:
            self._check_unramified_irreducible()
        if self.d > 1:
            self._check_eisenstein()

        self._mul_table = self._build_mul_table()
        self.zero = self.from_int(0)
        self.one = self.from_int(1)

    # -- construction-time validation -------------------------------------

    def _check_unramified_irreducible(self):
        p, f, red = self.p, self.f, self._respoly
        if not any(red):
            raise HermlatError("unramified polynomial reduces to x^f")
        w = tuple([0, 1] + [0] * (f - 2)) if f >= 2 else (1,)
        # Frobenius order of w must be exactly f
        x = w
        for k in range(1, f):
            x = gf_pow(x, p, p, red)
            if x == w:
                raise HermlatError("unramified polynomial is reducible mod p")
        x = gf_pow(x, p, p, red)
        if x != w:
            raise HermlatError("unramified polynomial is reducible mod p")

    def _check_eisenstein(self):
        p = self.p
        for i, vec in enumerate(self._epoly):
            if any(c % p for c in vec):
                raise HermlatError(
                    f"Eisenstein coefficient {i} is not in the maximal ideal")
        lowest = self._epoly[0]
        if all(c % (p * p) == 0 for c in lowest):
            raise HermlatError("Eisenstein constant term has valuation > 1")

    # -- basis bookkeeping --------------------------------------------------

    def _reduce_poly(self, terms):
        """Reduce a dict {(w_deg, t_deg): int} modulo both defining polynomials."""
        p, f, d = self.p, self.f, self.d
        changed = True
        while changed:
            changed = False
            for (a, b), c in list(terms.items()):
                if c == 0:
                    del terms[(a, b)]
                    continue
                if a >= f:
                    del terms[(a, b)]
                    for j, u in enumerate(self._upoly):
                        if u:
                            terms[(a - f + j, b)] = terms.get((a - f + j, b), 0) - c * u
                    changed = True
                    break
                if b >= d:
                    del terms[(a, b)]
                    for i, vec in enumerate(self._epoly):
                        for j, u in enumerate(vec):
                            if u:
                                key = (a + j, b - d + i)
                                terms[key] = terms.get(key, 0) - c * u
                    changed = True
                    break
        return terms

    def _build_mul_table(self):
        table = []
        for i in range(self.nbasis):
            a1, b1 = i % self.f, i // self.f
            row = []
            for j in range(self.nbasis):
                a2, b2 = j % self.f, j // self.f
                terms = self._reduce_poly({(a1 + a2, b1 + b2): 1})
                vec = [0] * self.nbasis
                for (a, b), c in terms.items():
                    vec[b * self.f + a] = c % self.pmod
                row.append(tuple(vec))
            table.append(tuple(row))
        return tuple(table)

    def _mul_co(self, x, y, mod):
        out = [0] * self.nbasis
        table = self._mul_table
        for i, xi in enumerate(x):
            if xi:
                ti = table[i]
                for j, yj in enumerate(y):
                    if yj:
                        c = xi * yj
                        for k, tk in enumerate(ti[j]):
                            if tk:
                                out[k] += c * tk
        return tuple(v % mod for v in out)

    def _co_valuation(self, co, cap):
        """min over coordinates of d*v_p(coeff) + t_degree, capped at d*cap."""
        p, f, d = self.p, self.f, self.d
        best = d * cap
        for k, c in enumerate(co):
            if c:
                v = d * _int_valuation(c, p, cap) + (k // f)
                if v < best:
                    best = v
        return best

    # -- element constructors ------------------------------------------------

    def from_int(self, n):
        co = [0] * self.nbasis
        co[0] = n % self.pmod
        return FieldElement(self, tuple(co), 0, self.mcap)

    def from_coeffs(self, coeffs, shift=0):
        """Element from a flat coefficient vector over the w^a t^b basis."""
        co = [int(c) % self.pmod for c in coeffs]
        co += [0] * (self.nbasis - len(co))
        return FieldElement(self, tuple(co), shift, self.mcap)

    def gen_unramified(self):
        if self.f == 1:
            raise HermlatError("field has no unramified step")
        co = [0] * self.nbasis
        co[1] = 1
        return FieldElement(self, tuple(co), 0, self.mcap)

    def gen_eisenstein(self):
        if self.d == 1:
            raise HermlatError("field has no ramified step")
        co = [0] * self.nbasis
        co[self.f] = 1
        return FieldElement(self, tuple(co), 0, self.mcap)

    def uniformizer(self):
        return self.gen_eisenstein() if self.d > 1 else self.from_int(self.p)

    def uniformizer_pow(self, k):
        if k >= 0:
            out = self.one
            u = self.uniformizer()
            for _ in range(k):
                out = out * u
            return out
        return self.one / self.uniformizer_pow(-k)

    # -- residue data ---------------------------------------------------------

    def ppow(self, k):
        """Cached nonnegative power of p."""
        v = self._ppows.get(k)
        if v is None:
            v = self.p ** k
            self._ppows[k] = v
        return v

    def residue_elements(self):
        return gf_elements(self.p, self.f)

    def residue_lifts(self):
        """One integral lift for every residue-field element."""
        return [self.from_coeffs(e + (0,) * (self.nbasis - self.f))
                for e in self.residue_elements()]

    def residue_system(self, m):
        """Representatives of o/𝔭^m as sums sum_i r_i * pi^i."""
        return list(self._residue_system_cached(m))

    @lru_cache(maxsize=None)
    def _residue_system_cached(self, m):
        if m <= 0:
            return (self.zero,)
        pi = self.uniformizer()
        reps = [self.zero]
        for _ in range(m):
            reps = [r * pi + lift for r in reps for lift in self.residue_lifts()]
        # note: building high digits first keeps the count at q^m exactly
        return tuple(reps)

    def unit_residues(self, m):
        return [r for r in self.residue_system(m) if not r.is_zero() and r.valuation() == 0]

    def __repr__(self):
        parts = [f"Q_{self.p}"]
        if self.f > 1:
            parts.append(f"unramified deg {self.f}")
        if self.d > 1:
            parts.append(f"eisenstein deg {self.d}")
        return f"LocalField({', '.join(parts)}; N={self.precision})"

    def __eq__(self, other):
        return self is other

    def __hash__(self):
        return id(self)


class FieldElement:
    """An element of a LocalField: p^shift * (coefficient vector), known
    modulo p^(shift + ncap) coefficient-wise.

    Construction pulls exact p-power content out of the coefficient vector
    into the shift, so that the per-element digit cap only limits relative
    precision and round trips through division stay lossless."""

    __slots__ = ("field", "co", "shift", "ncap")

    def __init__(self, field, co, shift, ncap):
        if ncap <= field.guard_digits:
            raise PrecisionLoss(
                f"element retains only {ncap} digits (guard {field.guard_digits})")
        p = field.p
        # zero vectors keep their full absolute precision (bounded so the
        # modulus stays cheap); nonzero vectors are renormalized so the digit
        # cap limits only relative precision
        ncap = min(ncap, max(field.mcap, -shift + 2 * field.mcap))
        mod = field.ppow(ncap)
        co = [c % mod for c in co]
        if any(co):
            if ncap > field.mcap:
                t = min(_int_valuation(c, p, ncap) for c in co if c)
                t = min(t, ncap - field.mcap)
                if t > 0:
                    pk = field.ppow(t)
                    co = [c // pk for c in co]
                    shift += t
                    ncap -= t
            if ncap > field.mcap:
                ncap = field.mcap
                mod = field.pmod
                co = [c % mod for c in co]
        self.field = field
        self.co = tuple(co)
        self.shift = shift
        self.ncap = ncap

    # -- precision bookkeeping -------------------------------------------

    def abs_precision(self):
        """Absolute precision in valuation units: known modulo 𝔭^this."""
        return self.field.d * (self.shift + self.ncap)

    def is_zero(self):
        return not any(self.co)

    def valuation(self):
        """Normalized valuation with v(uniformizer) = 1."""
        if self.is_zero():
            raise ZeroValuation("element is zero at working precision")
        return self.field.d * self.shift + self.field._co_valuation(self.co, self.ncap)

    def valuation_or_none(self):
        return None if self.is_zero() else self.valuation()

    def _coerce(self, other):
        if isinstance(other, FieldElement):
            if other.field is not self.field:
                raise HermlatError("elements belong to different fields")
            return other
        if isinstance(other, int):
            return self.field.from_int(other)
        return NotImplemented

    # -- ring operations ----------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        fld = self.field
        s1, s2 = self.shift, other.shift
        if s1 == s2:
            s = s1
            co = tuple(a + b for a, b in zip(self.co, other.co))
        else:
            s = s1 if s1 < s2 else s2
            m1 = fld.ppow(s1 - s)
            m2 = fld.ppow(s2 - s)
            co = tuple(a * m1 + b * m2 for a, b in zip(self.co, other.co))
        acap = min(s1 + self.ncap, s2 + other.ncap)
        return FieldElement(fld, co, s, acap - s)

    __radd__ = __add__

    def __neg__(self):
        return FieldElement(self.field, tuple(-c for c in self.co), self.shift, self.ncap)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        fld = self.field
        s = self.shift + other.shift
        # relative precision of the product = min of the operands'
        d = fld.d
        v1 = fld._co_valuation(self.co, self.ncap)
        v2 = fld._co_valuation(other.co, other.ncap)
        rel1 = d * self.ncap - v1
        rel2 = d * other.ncap - v2
        atarget = v1 + v2 + min(rel1, rel2)
        ncap = atarget // d
        if ncap <= 0:
            raise PrecisionLoss("product has no guaranteed digits")
        co = fld._mul_co(self.co, other.co, fld.ppow(ncap))
        return FieldElement(fld, co, s, ncap)

    __rmul__ = __mul__

    def _invert(self):
        fld = self.field
        if self.is_zero():
            raise DivisionByZeroModPrecision("division by zero at working precision")
        p, d, f = fld.p, fld.d, fld.f
        vnum = fld._co_valuation(self.co, self.ncap)
        r = (d - vnum % d) % d
        if r:
            tco = [0] * fld.nbasis
            tco[r * f] = 1
            num = fld._mul_co(self.co, tuple(tco), fld.pmod)
        else:
            num = self.co
        spow = (vnum + r) // d
        if spow:
            pk = p ** spow
            if any(c % pk for c in num):
                raise HermlatError("internal: coordinate division failed")
            num = tuple(c // pk for c in num)
        ncap_u = self.ncap - spow
        if ncap_u <= fld.guard_digits:
            raise PrecisionLoss("inverse would fall below the precision guard")
        # Hensel: invert the residue, then Newton-lift
        res = tuple(c % p for c in num[:f])
        y0 = gf_inv(res, p, fld._respoly)
        y = tuple(list(y0) + [0] * (fld.nbasis - f))
        mod = p ** ncap_u
        known = 1
        two = tuple([2] + [0] * (fld.nbasis - 1))
        while known < ncap_u * d:
            t = fld._mul_co(num, y, mod)
            t = tuple((a - b) % mod for a, b in zip(two, t))
            y = fld._mul_co(y, t, mod)
            known *= 2
        if r:
            tco = [0] * fld.nbasis
            tco[r * f] = 1
            y = fld._mul_co(y, tuple(tco), mod)
        return FieldElement(fld, y, -self.shift - spow, ncap_u)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other._invert()

    def __rtruediv__(self, other):
        other = self._coerce(other)
        return other * self._invert()

    def __pow__(self, n):
        if n < 0:
            return (self._invert()) ** (-n)
        out = self.field.one
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return (self - other).is_zero()

    def __ne__(self, other):
        return not self.__eq__(other)

    # -- maps -----------------------------------------------------------------

    def invert_unit(self):
        if self.is_zero() or self.valuation() != 0:
            raise NotAUnit("invert_unit requires valuation 0")
        return self._invert()

    def is_unit(self):
        return not self.is_zero() and self.valuation() == 0

    def residue(self):
        """Image in the residue field o/𝔭, as a GF(p^f) coefficient tuple."""
        fld = self.field
        if self.is_zero():
            return (0,) * fld.f
        if self.valuation() < 0:
            raise NegativeValuation("element is not integral")
        co, shift = self.co, self.shift
        if shift > 0:
            return (0,) * fld.f
        if shift < 0:
            pk = fld.p ** (-shift)
            if any(c % pk for c in co):
                raise HermlatError("internal: residue of non-integral representation")
            co = tuple(c // pk for c in co)
        return tuple(c % fld.p for c in co[:fld.f])

    def shifted(self, k):
        """Multiply by p^k without touching coefficients."""
        return FieldElement(self.field, self.co, self.shift + k, self.ncap)

    def unit_part(self):
        """Write self = pi^v * u with u a unit; returns u."""
        v = self.valuation()
        return self / self.field.uniformizer_pow(v)

    # -- presentation -----------------------------------------------------------

    def flat(self):
        """Canonical integral coefficient vector (mod p^ncap) and shift."""
        return self.co, self.shift

    def __repr__(self):
        return f"FieldElement({self.poly_str()})"

    def poly_str(self):
        fld = self.field
        if self.is_zero():
            return "0"
        names = []
        for k in range(fld.nbasis):
            a, b = k % fld.f, k // fld.f
            s = ""
            if a:
                s += "w" if a == 1 else f"w^{a}"
            if b:
                if s:
                    s += "*"
                s += "t" if b == 1 else f"t^{b}"
            names.append(s or "1")
        half = self.field.p ** self.ncap // 2
        terms = []
        for c, name in zip(self.co, names):
            if not c:
                continue
            cs = c if c <= half else c - self.field.p ** self.ncap
            if name == "1":
                terms.append(str(cs))
            elif cs == 1:
                terms.append(name)
            elif cs == -1:
                terms.append(f"-{name}")
            else:
                terms.append(f"{cs}*{name}")
        body = " + ".join(terms).replace("+ -", "- ")
        if self.shift:
            return f"{self.field.p}^{self.shift}*({body})"
        return body
