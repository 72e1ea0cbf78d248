"""Quadratic etale algebras E over a local field K.

E is either K x K (split), an unramified quadratic field extension (inert),
or a ramified quadratic extension (ramified).  The module carries the
involution, trace and norm, the ideal P of the integral closure O, the
different exponent e, and the special elements rho (trace one, minimal
denominator), eta (skew), and u0 (unit whose 1+u0 represents the nontrivial
norm coset) that the lattice algorithms consume.

Field-kind elements are stored as coordinates x0 + x1*g where g is a root of
the defining polynomial x^2 + b*x + c; conjugation sends g to -b - g.
"""

from __future__ import annotations

import math
from functools import lru_cache

from .errors import (
    DivisionByZeroModPrecision,
    HermlatError,
    NoSolutionAtPrecision,
    ParityMismatch,
    SearchExhausted,
    Unstable,
    WrongKind,
    ZeroValuation,
)
from .localfield import FieldElement, gf_elements

INF = math.inf

NORM = "Norm"
NONNORM = "NonNorm"


class IdealExp:
    """Exponent data of a fractional O-ideal: P^k (symmetric) or, in the
    split case, p^a x p^b.  `INF` components mark the zero ideal."""

    __slots__ = ("a", "b")

    def __init__(self, a, b=None):
        self.a = a
        self.b = a if b is None else b

    @property
    def symmetric(self):
        return self.a == self.b

    def exponent(self):
        if not self.symmetric:
            raise HermlatError(f"ideal {self} is not conjugation-stable")
        return self.a

    def conj(self):
        return IdealExp(self.b, self.a)

    def join(self, other):
        """Ideal sum (componentwise min of exponents)."""
        return IdealExp(min(self.a, other.a), min(self.b, other.b))

    def __eq__(self, other):
        if isinstance(other, int):
            return self.symmetric and self.a == other
        return self.a == other.a and self.b == other.b

    def __repr__(self):
        if self.symmetric:
            return f"P^{self.a}"
        return f"(p^{self.a} x p^{self.b})"


class EtaleAlgebra:
    SPLIT = "split"
    INERT = "inert"
    RAMIFIED = "ramified"

    def __init__(self, kind, base, b=None, c=None):
        self.kind = kind
        self.base = base
        self.dyadic = base.p == 2
        if kind == self.SPLIT:
            self.b = None
            self.c = None
            self.e = 0
            self._b_zero = True
        else:
            self.b = b if isinstance(b, FieldElement) else base.from_int(b)
            self.c = c if isinstance(c, FieldElement) else base.from_int(c)
            self._b_zero = self.b.is_zero()
            if kind == self.RAMIFIED:
                # different exponent: valuation of g'(Pi) = 2*Pi + b
                self.e = self.vP(self.gen() * 2 + self.from_K(self.b))
            else:
                self.e = 0
        self.zero = self.from_K(base.zero)
        self.one = self.from_K(base.one)
        self._rho = None
        self._eta = None
        self._u0 = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def split(cls, base):
        return cls(cls.SPLIT, base)

    @classmethod
    def quadratic(cls, base, b, c):
        """Field extension defined by x^2 + b*x + c; classifies inert/ramified."""
        b = b if isinstance(b, FieldElement) else base.from_int(b)
        c = c if isinstance(c, FieldElement) else base.from_int(c)
        vb = None if b.is_zero() else b.valuation()
        vc = None if c.is_zero() else c.valuation()
        if vc == 1 and (vb is None or vb >= 1):
            return cls(cls.RAMIFIED, base, b, c)
        if (vb is None or vb >= 0) and (vc is None or vc >= 0):
            if cls._residue_irreducible(base, b, c):
                return cls(cls.INERT, base, b, c)
        raise HermlatError(
            "defining polynomial must be Eisenstein or irreducible mod p")

    @staticmethod
    def _residue_irreducible(base, b, c):
        rb, rc = b.residue(), c.residue()
        from .localfield import gf_add, gf_mul

        red = base._respoly
        p = base.p
        for x in gf_elements(p, base.f):
            val = gf_add(gf_mul(x, x, p, red),
                         gf_add(gf_mul(rb, x, p, red), rc, p), p)
            if not any(val):
                return False
        return True

    # -- elements -----------------------------------------------------------

    def element(self, x0, x1):
        x0 = x0 if isinstance(x0, FieldElement) else self.base.from_int(x0)
        x1 = x1 if isinstance(x1, FieldElement) else self.base.from_int(x1)
        return AlgElement(self, x0, x1)

    def from_K(self, x):
        x = x if isinstance(x, FieldElement) else self.base.from_int(x)
        if self.kind == self.SPLIT:
            return AlgElement(self, x, x)
        return AlgElement(self, x, self.base.zero)

    def from_int(self, n):
        return self.from_K(self.base.from_int(n))

    def gen(self):
        """The second basis generator: (1,0) for split, the root g otherwise."""
        if self.kind == self.SPLIT:
            return AlgElement(self, self.base.one, self.base.zero)
        return AlgElement(self, self.base.zero, self.base.one)

    def uniformizer(self):
        """Generator of the largest conjugation-invariant proper ideal P."""
        if self.kind == self.RAMIFIED:
            return self.gen()
        pi = self.base.uniformizer()
        return self.from_K(pi)

    def uniformizer_pow(self, k):
        if self.kind == self.RAMIFIED:
            # even part through p = Nr-adjusted power; keep exact: g^k
            out = self.one
            g = self.gen()
            if k >= 0:
                for _ in range(k):
                    out = out * g
                return out
            return self.one / self.uniformizer_pow(-k)
        return self.from_K(self.base.uniformizer_pow(k))

    # -- valuations ----------------------------------------------------------

    def vP(self, x):
        """Normalized P-adic valuation; field kinds only."""
        if self.kind == self.SPLIT:
            raise WrongKind("split algebra has componentwise valuations")
        v0 = x.x0.valuation_or_none()
        v1 = x.x1.valuation_or_none()
        if v0 is None and v1 is None:
            raise ZeroValuation("element is zero at working precision")
        if self.kind == self.INERT:
            return min(v for v in (v0, v1) if v is not None)
        cands = []
        if v0 is not None:
            cands.append(2 * v0)
        if v1 is not None:
            cands.append(2 * v1 + 1)
        return min(cands)

    def valuation_P(self, x):
        """IdealExp of the principal ideal xO."""
        if self.kind == self.SPLIT:
            v0 = x.x0.valuation_or_none()
            v1 = x.x1.valuation_or_none()
            if v0 is None and v1 is None:
                raise ZeroValuation("element is zero at working precision")
            return IdealExp(INF if v0 is None else v0, INF if v1 is None else v1)
        return IdealExp(self.vP(x))

    def vK_in_P(self, k_exp):
        """v_P of an element of K with v_p = k_exp."""
        return 2 * k_exp if self.kind == self.RAMIFIED else k_exp

    def P_cap_o(self, m):
        """Exponent a with P^m ∩ o = p^a."""
        return -(-m // 2) if self.kind == self.RAMIFIED else m

    # -- special elements -----------------------------------------------------

    def rho(self):
        """Element with Tr(rho) = 1, of maximal ideal P^(1-e) in the ramified case."""
        if self._rho is not None:
            return self._rho
        K = self.base
        if self.kind == self.SPLIT:
            self._rho = self.element(K.one, K.zero)
        elif self.kind == self.RAMIFIED:
            g = self.gen()
            self._rho = g / (g * 2 + self.from_K(self.b))
        else:
            if not self.b.is_zero() and self.b.valuation() == 0:
                self._rho = self.element(K.zero, -self.b.invert_unit())
            else:
                self._rho = self.from_K(K.one / 2)
        assert self._rho.trace() == K.one
        return self._rho

    def eta(self):
        """Canonical skew element: g'(gen) = 2*gen + b (split: (1,-1))."""
        if self._eta is not None:
            return self._eta
        if self.kind == self.SPLIT:
            self._eta = self.element(self.base.one, self.base.from_int(-1))
        else:
            self._eta = self.gen() * 2 + self.from_K(self.b)
        assert self._eta.trace().is_zero()
        return self._eta

    def special_skew(self, target_valuation):
        """Skew element of the requested valuation (parity must match e mod 2)."""
        if self.kind == self.SPLIT:
            lam = self.base.uniformizer_pow(target_valuation)
            return AlgElement(self, lam, -lam)
        eta = self.eta()
        ve = self.vP(eta)
        if (target_valuation - ve) % 2 != 0:
            raise ParityMismatch(
                f"skew elements have valuation = {ve % 2} mod 2; "
                f"requested {target_valuation}")
        shift = (target_valuation - ve) // 2
        return eta * self.from_K(self.base.uniformizer_pow(shift))

    def u0(self):
        """u0 in o with u0*o = p^(e-1) and 1 + u0 a non-norm unit (ramified)."""
        if self.kind != self.RAMIFIED:
            raise WrongKind("u0 is defined for ramified algebras")
        if self._u0 is not None:
            return self._u0
        K = self.base
        pk = K.uniformizer_pow(self.e - 1)
        for r in K.unit_residues(2):
            cand = pk * r
            one_plus = K.one + cand
            if one_plus.is_zero() or one_plus.valuation() != 0:
                continue
            if self.norm_class(one_plus) == NONNORM:
                self._u0 = cand
                return cand
        raise SearchExhausted("no u0 found; enumeration or precision bug")

    # -- trace ideals -----------------------------------------------------------

    def different_exponent(self):
        """e with different = P^e; ramified kind only (0 by convention
        otherwise, but asking is treated as a usage error)."""
        if self.kind != self.RAMIFIED:
            raise WrongKind("the different exponent is for the ramified kind")
        return self.e

    def trace_ideal(self, i):
        """Exponent a with Tr(P^i) = p^a; ramified kind."""
        if self.kind != self.RAMIFIED:
            raise WrongKind("trace_ideal applies to the ramified kind")
        return (i + self.e) // 2

    def trace_ideal_of(self, x):
        """Exponent of the o-ideal Tr(x*O); INF for exact zero."""
        if x.is_zero():
            return INF
        if self.kind == self.SPLIT:
            v = self.valuation_P(x)
            return min(v.a, v.b)
        v = self.vP(x)
        if self.kind == self.INERT:
            return v
        return self.trace_ideal(v)

    def solve_trace(self, c, t):
        """mu in O with Tr(mu*c) = t exactly; raises if t is not in Tr(c*O)."""
        if not isinstance(t, FieldElement):
            t = self.base.from_int(t)
        if t.is_zero():
            return self.zero
        if c.is_zero():
            raise NoSolutionAtPrecision("c = 0 but t != 0")
        vt = t.valuation()
        if self.kind == self.SPLIT:
            cands = []
            if not c.x0.is_zero():
                cands.append((c.x0.valuation(), 0))
            if not c.x1.is_zero():
                cands.append((c.x1.valuation(), 1))
            v, slot = min(cands)
            if vt < v:
                raise NoSolutionAtPrecision("t is not in the trace ideal of c*O")
            if slot == 0:
                return AlgElement(self, t / c.x0, self.base.zero)
            return AlgElement(self, self.base.zero, t / c.x1)
        a = c.trace()
        bq = (self.gen() * c).trace()
        va = INF if a.is_zero() else a.valuation()
        vb = INF if bq.is_zero() else bq.valuation()
        if va <= vb:
            if vt < va:
                raise NoSolutionAtPrecision("t is not in the trace ideal of c*O")
            return self.from_K(t / a)
        if vt < vb:
            raise NoSolutionAtPrecision("t is not in the trace ideal of c*O")
        return self.gen() * self.from_K(t / bq)

    # -- canonical residues -------------------------------------------------------

    def residue_system_O(self, m):
        return list(self._residue_system_O(m))

    @lru_cache(maxsize=None)
    def _residue_system_O(self, m):
        if m <= 0:
            return (self.zero,)
        K = self.base
        if self.kind == self.SPLIT:
            reps = K.residue_system(m)
            return tuple(AlgElement(self, a, b) for a in reps for b in reps)
        if self.kind == self.INERT:
            lifts = [self.element(a, b)
                     for a in K.residue_lifts() for b in K.residue_lifts()]
            reps = [self.zero]
            pi = self.from_K(K.uniformizer())
            for _ in range(m):
                reps = [r * pi + lift for r in reps for lift in lifts]
            return tuple(reps)
        lifts = [self.from_K(r) for r in K.residue_lifts()]
        reps = [self.zero]
        g = self.gen()
        for _ in range(m):
            reps = [r * g + lift for r in reps for lift in lifts]
        return tuple(reps)

    def unit_residues_O(self, m):
        return [r for r in self.residue_system_O(m) if r.is_unit()]

    def key_mod_p(self, x, m):
        """Canonical hashable key of an integral x in K modulo p^m (v_p units)."""
        K = self.base
        if m <= 0:
            return ()
        co, shift = x.flat()
        p, d, f = K.p, K.d, K.f
        if shift > 0:
            pk = p ** shift
            co = tuple(c * pk for c in co)
        elif shift < 0:
            pk = p ** (-shift)
            if any(c % pk for c in co):
                raise HermlatError("key_mod_p of a non-integral element")
            co = tuple(c // pk for c in co)
        key = []
        for k, cval in enumerate(co):
            tdeg = k // f
            digits = max(0, -(-(m * d - tdeg) // d))  # ceil((m*d - tdeg)/d)
            key.append(cval % (p ** digits) if digits else 0)
        return tuple(key)

    def key_mod_P(self, x, m):
        """Canonical key of an integral AlgElement modulo P^m."""
        if self.kind == self.RAMIFIED:
            return (self.key_mod_p(x.x0, -(-m // 2)),
                    self.key_mod_p(x.x1, m // 2))
        return (self.key_mod_p(x.x0, m), self.key_mod_p(x.x1, m))

    # -- norm classes ----------------------------------------------------------

    @lru_cache(maxsize=None)
    def _unit_norm_keys(self, k):
        """Keys mod p^k of Nr(O^x), from enumeration of units mod P^(2k)."""
        depth = 2 * k if self.kind == self.RAMIFIED else k
        keys = set()
        for u in self.unit_residues_O(max(depth, 1)):
            keys.add(self.key_mod_p(u.norm(), k))
        return keys

    def norm_class(self, a):
        """Decide a in Nr(O^x) for a unit a of o."""
        if not isinstance(a, FieldElement):
            a = self.base.from_int(a)
        if a.is_zero() or a.valuation() != 0:
            raise HermlatError("norm_class requires a unit of o")
        if self.kind == self.SPLIT:
            return NORM
        if self.kind == self.INERT:
            return NORM
        k = max(self.e, 1)
        return NORM if self.key_mod_p(a, k) in self._unit_norm_keys(k) else NONNORM

    def in_E_norm_group(self, a):
        """Decide a in Nr(E^x) for a in K^x."""
        if self.kind == self.SPLIT:
            return True
        v = a.valuation()
        if self.kind == self.INERT:
            return v % 2 == 0
        nrpi = self.uniformizer().norm()
        red = a / nrpi ** v
        return self.norm_class(red) == NORM

    def solve_norm_approx(self, a, k):
        """epsilon in O^x with a = Nr(epsilon) mod p^k; k <= e-1 always solvable."""
        if self.kind == self.SPLIT:
            return AlgElement(self, a, self.base.one)
        if k <= 0:
            return self.one
        target = self.key_mod_p(a, k)
        depth = 2 * k if self.kind == self.RAMIFIED else k
        for u in self.unit_residues_O(max(depth, 1)):
            if self.key_mod_p(u.norm(), k) == target:
                return u
        raise NoSolutionAtPrecision(
            f"no unit norm matches mod p^{k}; class obstruction")

    def solve_norm_unit(self, a):
        """epsilon in O^x with Nr(epsilon) = a exactly (a must be a unit norm)."""
        if self.kind == self.SPLIT:
            return AlgElement(self, a, self.base.one)
        e = self.e
        start = e + 1 if self.kind == self.RAMIFIED else 1
        eps = self.solve_norm_approx(a, start)
        prev = None
        for _ in range(200):
            diff = a / eps.norm() - self.base.one
            if diff.is_zero():
                return eps
            cur = diff.valuation()
            if prev is not None and cur <= prev:
                raise NoSolutionAtPrecision("norm-equation lifting stalled")
            prev = cur
            # Nr(1+z) = 1 + Tr(z) + Nr(z); one second-order correction pass
            z = self.solve_trace(self.one, diff)
            z = self.solve_trace(self.one, diff - z.norm())
            eps = eps * (self.one + z)
        raise NoSolutionAtPrecision("norm-equation lifting did not converge")

    # -- the normic defect -------------------------------------------------------

    def normic_defect(self, a):
        """sup over beta of v_p(a - Nr(beta)) as an exponent; INF iff a in Nr(E)."""
        if self.kind == self.SPLIT:
            return INF
        if not isinstance(a, FieldElement):
            a = self.base.from_int(a)
        if a.is_zero():
            return INF
        v = a.valuation()
        if v < 0:
            raise HermlatError("normic_defect requires an integral argument")
        if self.in_E_norm_group(a):
            return INF
        if self.kind == self.INERT:
            # v is odd here (even-valuation elements reduce to unit norms)
            return v
        nrpi = self.uniformizer().norm()
        unit = a / nrpi ** v
        best, prev = None, None
        m = self.e + 2
        for trial in range(4):
            cur = 0
            measurable = self.e + 1 + trial
            for beta in self.unit_residues_O(m + trial):
                diff = unit - beta.norm()
                dv = measurable if diff.is_zero() else min(diff.valuation(), measurable)
                if dv > cur:
                    cur = dv
            if prev is not None and cur == prev:
                best = cur
                break
            prev = cur
        else:
            raise Unstable("normic defect enumeration did not stabilize")
        return v + best


class AlgElement:
    """Element of a quadratic etale algebra: components (split) or coordinates
    in the basis {1, g} (field kinds)."""

    __slots__ = ("alg", "x0", "x1")

    def __init__(self, alg, x0, x1):
        self.alg = alg
        self.x0 = x0
        self.x1 = x1

    def _coerce(self, other):
        if isinstance(other, AlgElement):
            if other.alg is not self.alg:
                raise HermlatError("elements of different algebras")
            return other
        if isinstance(other, FieldElement):
            return self.alg.from_K(other)
        if isinstance(other, int):
            return self.alg.from_int(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return AlgElement(self.alg, self.x0 + other.x0, self.x1 + other.x1)

    __radd__ = __add__

    def __neg__(self):
        return AlgElement(self.alg, -self.x0, -self.x1)

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
        a = self.alg
        if a.kind == EtaleAlgebra.SPLIT:
            return AlgElement(a, self.x0 * other.x0, self.x1 * other.x1)
        x0, x1, y0, y1 = self.x0, self.x1, other.x0, other.x1
        cross = x1 * y1
        new1 = x0 * y1 + x1 * y0
        if not a._b_zero:
            new1 = new1 - a.b * cross
        return AlgElement(a, x0 * y0 - a.c * cross, new1)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        a = self.alg
        if a.kind == EtaleAlgebra.SPLIT:
            if other.x0.is_zero() or other.x1.is_zero():
                raise DivisionByZeroModPrecision(
                    "split divisor has a zero component at precision")
            return AlgElement(a, self.x0 / other.x0, self.x1 / other.x1)
        nr = other.norm()
        if nr.is_zero():
            raise DivisionByZeroModPrecision("divisor is zero at precision")
        return self * other.conj() * self.alg.from_K(nr._invert())

    def __rtruediv__(self, other):
        other = self._coerce(other)
        return other / self

    def __pow__(self, n):
        if n < 0:
            return (self.alg.one / self) ** (-n)
        out = self.alg.one
        base = self
        while n:
            if n & 1:
                out = out * base
            if n > 1:
                base = base * base
            n >>= 1
        return out

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return (self - other).is_zero()

    def __ne__(self, other):
        return not self.__eq__(other)

    # -- structure maps ------------------------------------------------------

    def conj(self):
        a = self.alg
        if a.kind == EtaleAlgebra.SPLIT:
            return AlgElement(a, self.x1, self.x0)
        if a._b_zero:
            return AlgElement(a, self.x0, -self.x1)
        return AlgElement(a, self.x0 - a.b * self.x1, -self.x1)

    def trace(self):
        a = self.alg
        if a.kind == EtaleAlgebra.SPLIT:
            return self.x0 + self.x1
        if a._b_zero:
            return self.x0 * 2
        return self.x0 * 2 - a.b * self.x1

    def norm(self):
        a = self.alg
        if a.kind == EtaleAlgebra.SPLIT:
            return self.x0 * self.x1
        if a._b_zero:
            return self.x0 * self.x0 + a.c * self.x1 * self.x1
        return self.x0 * self.x0 - a.b * self.x0 * self.x1 + a.c * self.x1 * self.x1

    def is_zero(self):
        return self.x0.is_zero() and self.x1.is_zero()

    def is_unit(self):
        a = self.alg
        if self.is_zero():
            return False
        if a.kind == EtaleAlgebra.SPLIT:
            return (not self.x0.is_zero() and self.x0.valuation() == 0
                    and not self.x1.is_zero() and self.x1.valuation() == 0)
        return a.vP(self) == 0

    def is_in_K(self):
        if self.alg.kind == EtaleAlgebra.SPLIT:
            return (self.x0 - self.x1).is_zero()
        return self.x1.is_zero()

    def as_K(self):
        if not self.is_in_K():
            raise HermlatError("element is not in the base field")
        return self.x0

    def is_integral(self):
        try:
            v = self.alg.valuation_P(self)
        except ZeroValuation:
            return True
        return v.a >= 0 and v.b >= 0

    def __repr__(self):
        return f"AlgElement({self.str_pair()})"

    def str_pair(self):
        if self.alg.kind == EtaleAlgebra.SPLIT:
            return f"({self.x0.poly_str()}, {self.x1.poly_str()})"
        if self.x1.is_zero():
            return self.x0.poly_str()
        return f"{self.x0.poly_str()} + ({self.x1.poly_str()})*pi"
