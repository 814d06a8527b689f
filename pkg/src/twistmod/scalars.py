"""Exact scalar arithmetic for the engine.

A scalar is a finite sum  sum_j  c_j * e^{2 pi i q_j} * tau^{k_j}  with
c_j rational, q_j a rational in [0, 1), and tau a formal symbol standing for
2 pi i.  Root-of-unity combinations are kept canonical by reducing, per tau
power, the exponent polynomial modulo the L-th cyclotomic polynomial, where
L is the lcm of the exponent denominators present.  This makes equality
decidable: a scalar is zero iff its term dict is empty after normalization.

tau is transcendental over every cyclotomic field, so no tau-polynomial of
positive degree is invertible here; `scalar_inverse` raises NotInvertible
unless a global truncation order for tau has been declared (see
`set_tau_cap`), in which case a truncated geometric series is returned.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import lcm


Rational = Fraction


class NotInvertible(ArithmeticError):
    """Raised when a scalar has no inverse in the ring."""


class TauOverflow(ArithmeticError):
    """Raised when an operation would exceed the declared tau truncation."""


# Global tau truncation order.  None means "no bound declared": arithmetic
# still keeps every power, but truncated geometric inverses are refused.
_TAU_CAP = [None]


def set_tau_cap(cap):
    """Declare the maximal meaningful tau power (or None to clear)."""
    if cap is not None and cap < 0:
        raise ValueError("tau cap must be >= 0")
    _TAU_CAP[0] = cap


def get_tau_cap():
    return _TAU_CAP[0]


# ---------------------------------------------------------------------------
# Dense polynomial helpers over Fraction, coefficients listed from degree 0.

def _ptrim(p):
    while p and p[-1] == 0:
        p = p[:-1]
    return p


def _padd(a, b):
    n = max(len(a), len(b))
    out = [Fraction(0)] * n
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += c
    return _ptrim(tuple(out))


def _pmul(a, b):
    if not a or not b:
        return ()
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, c in enumerate(a):
        if c == 0:
            continue
        for j, d in enumerate(b):
            out[i + j] += c * d
    return _ptrim(tuple(out))


def _pdivmod(a, b):
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    a = list(a)
    q = [Fraction(0)] * max(len(a) - len(b) + 1, 0)
    inv_lead = Fraction(1) / b[-1]
    while len(_ptrim(tuple(a))) >= len(b):
        a = list(_ptrim(tuple(a)))
        shift = len(a) - len(b)
        coef = a[-1] * inv_lead
        q[shift] = coef
        for i, c in enumerate(b):
            a[shift + i] -= coef * c
    return _ptrim(tuple(q)), _ptrim(tuple(a))


def _pgcdext(a, b):
    """Extended Euclid: returns (g, u, v) with u*a + v*b = g, g monic."""
    r0, r1 = a, b
    u0, u1 = (Fraction(1),), ()
    v0, v1 = (), (Fraction(1),)
    while r1:
        q, r = _pdivmod(r0, r1)
        r0, r1 = r1, r
        u0, u1 = u1, _padd(u0, _pmul(tuple(-c for c in q), u1))
        v0, v1 = v1, _padd(v0, _pmul(tuple(-c for c in q), v1))
    if r0:
        inv = Fraction(1) / r0[-1]
        r0 = tuple(c * inv for c in r0)
        u0 = tuple(c * inv for c in u0)
        v0 = tuple(c * inv for c in v0)
    return r0, u0, v0


@lru_cache(maxsize=None)
def cyclotomic(L):
    """Coefficient tuple of the L-th cyclotomic polynomial."""
    if L < 1:
        raise ValueError("cyclotomic index must be positive")
    poly = tuple(Fraction(c) for c in [-1] + [0] * (L - 1) + [1])
    for d in range(1, L):
        if L % d == 0:
            poly, rem = _pdivmod(poly, cyclotomic(d))
            assert not rem
    return poly


@lru_cache(maxsize=None)
def _power_table(L):
    """x^j mod Phi_L for j = 0..L-1, as coefficient tuples."""
    phi = cyclotomic(L)
    d = len(phi) - 1
    table = []
    for j in range(L):
        mono = tuple(Fraction(0) for _ in range(j)) + (Fraction(1),)
        if j < d:
            table.append(mono)
        else:
            _, rem = _pdivmod(mono, phi)
            table.append(rem)
    return tuple(table)


def _normalize_terms(terms):
    """Merge terms and reduce root-of-unity parts to cyclotomic power bases."""
    by_k = {}
    for (q, k), c in terms.items():
        if c == 0:
            continue
        by_k.setdefault(k, {})
        by_k[k][q % 1] = by_k[k].get(q % 1, Fraction(0)) + c
    out = {}
    for k, grp in by_k.items():
        grp = {q: c for q, c in grp.items() if c != 0}
        if not grp:
            continue
        L = lcm(*(q.denominator for q in grp)) if grp else 1
        if L <= 2:
            acc = Fraction(0)
            for q, c in grp.items():
                acc += c if q == 0 else -c
            if acc != 0:
                out[(Fraction(0), k)] = acc
            continue
        table = _power_table(L)
        d = len(cyclotomic(L)) - 1
        vec = [Fraction(0)] * d
        for q, c in grp.items():
            j = q.numerator * (L // q.denominator)
            red = table[j]
            for i, cc in enumerate(red):
                vec[i] += c * cc
        for i, cc in enumerate(vec):
            if cc != 0:
                out[(Fraction(i, L), k)] = cc
    return out


class Scalar:
    """Canonical element of Q(roots of unity)[tau]."""

    __slots__ = ("terms", "_simple")

    def __init__(self, terms=None, _canonical=False):
        if terms is None:
            terms = {}
        if _canonical:
            self.terms = terms
        else:
            self.terms = _normalize_terms(terms)
        # phase-free scalars take fast arithmetic paths
        self._simple = all(q == 0 for (q, _) in self.terms)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero():
        return Scalar({}, _canonical=True)

    @staticmethod
    def one():
        return Scalar.from_rational(1)

    @staticmethod
    def from_rational(r):
        r = Fraction(r)
        if r == 0:
            return Scalar.zero()
        return Scalar({(Fraction(0), 0): r}, _canonical=True)

    @staticmethod
    def root_of_unity(q):
        """e^{2 pi i q} for rational q."""
        return Scalar({(Fraction(q) % 1, 0): Fraction(1)})

    @staticmethod
    def e_pi_i(r):
        """e^{pi i r} for rational r."""
        return Scalar.root_of_unity(Fraction(r) / 2)

    @staticmethod
    def tau(k=1):
        """tau^k, tau standing for 2 pi i."""
        if k < 0:
            raise ValueError("negative tau powers are not in the ring")
        return Scalar({(Fraction(0), k): Fraction(1)}, _canonical=True)

    # -- structure ----------------------------------------------------------

    def is_zero(self):
        return not self.terms

    def tau_degree(self):
        return max((k for (_, k) in self.terms), default=-1)

    def is_tau_free(self):
        return all(k == 0 for (_, k) in self.terms)

    def is_rational(self):
        return all(q == 0 and k == 0 for (q, k) in self.terms)

    def as_rational(self):
        if self.is_zero():
            return Fraction(0)
        if not self.is_rational():
            raise ValueError("scalar is not rational: %s" % (self,))
        return self.terms[(Fraction(0), 0)]

    def tau_coefficients(self):
        """List of tau-free scalars [c_0, c_1, ...] with self = sum c_k tau^k."""
        deg = self.tau_degree()
        out = [dict() for _ in range(deg + 1)]
        for (q, k), c in self.terms.items():
            out[k][(q, 0)] = c
        return [Scalar(t, _canonical=True) for t in out]

    def tau_shift(self, k):
        """Multiply by tau^k (k may be negative if every term allows it)."""
        shifted = {}
        for (q, kk), c in self.terms.items():
            if kk + k < 0:
                raise NotInvertible("negative tau power")
            shifted[(q, kk + k)] = c
        return Scalar(shifted, _canonical=True)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Scalar):
            return NotImplemented
        merged = dict(self.terms)
        for key, c in other.terms.items():
            s = merged.get(key, Fraction(0)) + c
            if s == 0:
                merged.pop(key, None)
            else:
                merged[key] = s
        if self._simple and other._simple:
            return Scalar(merged, _canonical=True)
        return Scalar(merged)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return Scalar({key: -c for key, c in self.terms.items()}, _canonical=True)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Scalar.from_rational(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        prod = {}
        for (q1, k1), c1 in self.terms.items():
            for (q2, k2), c2 in other.terms.items():
                key = ((q1 + q2) % 1, k1 + k2)
                s = prod.get(key, Fraction(0)) + c1 * c2
                if s == 0:
                    prod.pop(key, None)
                else:
                    prod[key] = s
        if self._simple and other._simple:
            return Scalar(prod, _canonical=True)
        return Scalar(prod)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Scalar.from_rational(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return (self - other).is_zero()

    def __hash__(self):
        return hash(tuple(sorted(self.terms.items(), key=_term_key)))

    def __repr__(self):
        if self.is_zero():
            return "Scalar(0)"
        parts = []
        for (q, k), c in sorted(self.terms.items(), key=_term_key):
            piece = str(c)
            if q != 0:
                piece += "*e(%s)" % q
            if k:
                piece += "*tau^%d" % k if k > 1 else "*tau"
            parts.append(piece)
        return "Scalar(%s)" % " + ".join(parts)

    def sort_key(self):
        return tuple(sorted(((k, q, c) for (q, k), c in self.terms.items())))


def _term_key(item):
    (q, k), _ = item
    return (k, q)


def scalar_add(a, b):
    return a + b


def scalar_mul(a, b):
    return a * b


def _cyclo_inverse(s):
    """Inverse of a nonzero tau-free scalar, via extended Euclid mod Phi_L."""
    qs = [q for (q, _) in s.terms]
    L = lcm(*(q.denominator for q in qs)) if qs else 1
    d = len(cyclotomic(L)) - 1 if L > 1 else 1
    vec = [Fraction(0)] * max(d, 1)
    for (q, _), c in s.terms.items():
        j = q.numerator * (L // q.denominator)
        # canonical form guarantees j indexes the power basis
        vec[j if L > 1 else 0] += c
    poly = _ptrim(tuple(vec))
    phi = cyclotomic(L) if L > 1 else (Fraction(-1), Fraction(1))
    g, u, _ = _pgcdext(poly, phi)
    if len(g) != 1:
        raise NotInvertible("scalar is a zero divisor mod Phi_%d" % L)
    ginv = Fraction(1) / g[0]
    _, u = _pdivmod(_pmul(u, (ginv,)), phi) if len(u) >= len(phi) else (None, _pmul(u, (ginv,)))
    terms = {}
    for j, c in enumerate(u):
        if c != 0:
            terms[(Fraction(j, L) if L > 1 else Fraction(0), 0)] = c
    return Scalar(terms)


def scalar_inverse(a):
    """Multiplicative inverse.

    Raises NotInvertible for zero, and for scalars with tau content unless a
    global tau cap is set (then a geometric series truncated at the cap is
    returned, which is exact modulo tau^(cap+1)).
    """
    if a.is_zero():
        raise NotInvertible("zero scalar")
    coeffs = a.tau_coefficients()
    head, tail = coeffs[0], coeffs[1:]
    if head.is_zero():
        raise NotInvertible("scalar is divisible by tau")
    head_inv = _cyclo_inverse(head)
    if not tail:
        return head_inv
    cap = get_tau_cap()
    if cap is None:
        raise NotInvertible("inversion requires unbounded tau powers")
    # a = head (1 + m) with m nilpotent modulo tau^(cap+1)
    m = Scalar.zero()
    for k, c in enumerate(tail, start=1):
        m = m + head_inv * c * Scalar.tau(k)
    acc = Scalar.one()
    power = Scalar.one()
    for _ in range(cap):
        power = _truncate_tau(power * -1 * m, cap)
        if power.is_zero():
            break
        acc = acc + power
    return head_inv * acc


def _truncate_tau(s, cap):
    return Scalar({key: c for key, c in s.terms.items() if key[1] <= cap},
                  _canonical=True)


class ScalarFraction:
    """Element of the fraction field F(tau), F the cyclotomic scalar field.

    Used only inside row reduction when a pivot with genuine tau content is
    unavoidable.  Represented as num/den with den a tau-polynomial whose
    constant term is 1 after normalization when possible.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=None):
        if den is None:
            den = Scalar.one()
        if den.is_zero():
            raise ZeroDivisionError("zero denominator")
        self.num = num
        self.den = den
        self._reduce()

    def _reduce(self):
        if self.num.is_zero():
            self.den = Scalar.one()
            return
        # strip common tau powers
        kmin = min(min(k for (_, k) in self.num.terms),
                   min(k for (_, k) in self.den.terms))
        if kmin > 0:
            self.num = self.num.tau_shift(-kmin)
            self.den = self.den.tau_shift(-kmin)
        # cancel via polynomial gcd in tau over the cyclotomic field
        ncoef = self.num.tau_coefficients()
        dcoef = self.den.tau_coefficients()
        if len(ncoef) > 1 or len(dcoef) > 1:
            g = _tau_poly_gcd(ncoef, dcoef)
            if len(g) > 1 or not (len(g) == 1 and g[0] == Scalar.one()):
                self.num = _tau_poly_to_scalar(_tau_poly_div(ncoef, g))
                self.den = _tau_poly_to_scalar(_tau_poly_div(dcoef, g))
                dcoef = self.den.tau_coefficients()
        # normalize leading structure: make den constant-term 1 if invertible
        if not dcoef[0].is_zero():
            inv = _cyclo_inverse(dcoef[0])
            self.num = self.num * inv
            self.den = self.den * inv
        if self.den == Scalar.one():
            self.den = Scalar.one()

    def is_zero(self):
        return self.num.is_zero()

    def as_scalar(self):
        if self.den == Scalar.one():
            return self.num
        raise NotInvertible("denominator %r is not trivial" % (self.den,))

    def __add__(self, other):
        other = _as_fraction(other)
        return ScalarFraction(self.num * other.den + other.num * self.den,
                              self.den * other.den)

    def __sub__(self, other):
        return self + (-_as_fraction(other))

    def __neg__(self):
        return ScalarFraction(-self.num, self.den)

    def __mul__(self, other):
        other = _as_fraction(other)
        return ScalarFraction(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__
    __radd__ = __add__

    def inverse(self):
        if self.num.is_zero():
            raise NotInvertible("zero scalar")
        return ScalarFraction(self.den, self.num)

    def __eq__(self, other):
        other = _as_fraction(other)
        return (self.num * other.den - other.num * self.den).is_zero()

    def __repr__(self):
        return "ScalarFraction(%r / %r)" % (self.num, self.den)


def _as_fraction(x):
    if isinstance(x, ScalarFraction):
        return x
    if isinstance(x, Scalar):
        return ScalarFraction(x)
    if isinstance(x, (int, Fraction)):
        return ScalarFraction(Scalar.from_rational(x))
    raise TypeError(type(x))


def _tau_poly_trim(p):
    while p and p[-1].is_zero():
        p = p[:-1]
    return p


def _tau_poly_divmod(a, b):
    a = list(a)
    b = _tau_poly_trim(list(b))
    if not b:
        raise ZeroDivisionError
    inv_lead = _cyclo_inverse(b[-1])
    q = [Scalar.zero()] * max(len(a) - len(b) + 1, 0)
    while True:
        a = _tau_poly_trim(a)
        if len(a) < len(b):
            break
        shift = len(a) - len(b)
        coef = a[-1] * inv_lead
        q[shift] = coef
        for i, c in enumerate(b):
            a[shift + i] = a[shift + i] - coef * c
    return q, a


def _tau_poly_gcd(a, b):
    r0, r1 = _tau_poly_trim(list(a)), _tau_poly_trim(list(b))
    while r1:
        _, r = _tau_poly_divmod(r0, r1)
        r0, r1 = r1, _tau_poly_trim(r)
    if r0:
        inv = _cyclo_inverse(r0[-1])
        r0 = [c * inv for c in r0]
    return r0 if r0 else [Scalar.one()]


def _tau_poly_div(a, b):
    q, r = _tau_poly_divmod(list(a), list(b))
    assert not _tau_poly_trim(r)
    return q


def _tau_poly_to_scalar(p):
    acc = Scalar.zero()
    for k, c in enumerate(p):
        acc = acc + c * Scalar.tau(k) if k else acc + c
    return acc
