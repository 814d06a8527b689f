"""Sparse exact linear algebra over the scalar ring.

Vectors are sparse dicts keyed by arbitrary sortable basis labels.  Row
reduction is Gauss-Jordan with deterministic pivoting: the pivot of a new
row is the smallest basis label present, preferring labels whose
coefficient is tau-free so division stays inside the scalar ring.  A row
whose candidate pivots all carry tau content falls back to rational
functions in tau (ScalarFraction), which is the honest fraction field since
tau is transcendental over the cyclotomic scalars.
"""

from __future__ import annotations

from fractions import Fraction

from .scalars import Scalar, ScalarFraction, scalar_inverse, NotInvertible


class Vec:
    """Sparse vector with Scalar (or ScalarFraction) entries."""

    __slots__ = ("items",)

    def __init__(self, items=None):
        self.items = {}
        if items:
            for k, c in items.items():
                if not c.is_zero():
                    self.items[k] = c

    @staticmethod
    def unit(key, coeff=None):
        return Vec({key: coeff if coeff is not None else Scalar.one()})

    def is_zero(self):
        return not self.items

    def __add__(self, other):
        out = dict(self.items)
        for k, c in other.items.items():
            if k in out:
                s = out[k] + c
                if s.is_zero():
                    del out[k]
                else:
                    out[k] = s
            else:
                out[k] = c
        v = Vec()
        v.items = out
        return v

    def __sub__(self, other):
        return self + other.scale(Scalar.from_rational(-1))

    def scale(self, c):
        if isinstance(c, (int, Fraction)):
            c = Scalar.from_rational(c)
        if c.is_zero() if isinstance(c, Scalar) else c.is_zero():
            return Vec()
        v = Vec()
        v.items = {k: e * c for k, e in self.items.items()}
        v.items = {k: e for k, e in v.items.items() if not e.is_zero()}
        return v

    def __mul__(self, c):
        return self.scale(c)

    def map_keys(self, fn):
        """Pushforward along a key relabeling; colliding keys are summed."""
        out = Vec()
        for k, c in self.items.items():
            nk = fn(k)
            if nk is None:
                continue
            if nk in out.items:
                s = out.items[nk] + c
                if s.is_zero():
                    del out.items[nk]
                else:
                    out.items[nk] = s
            else:
                out.items[nk] = c
        return out

    def __repr__(self):
        return "Vec(%r)" % (self.items,)


def _tau_strip(vec):
    """Divide out the largest common tau power (tau is a nonzero number)."""
    kmin = None
    for c in vec.items.values():
        if isinstance(c, ScalarFraction):
            return vec
        lo = min(k for (_, k) in c.terms)
        kmin = lo if kmin is None else min(kmin, lo)
    if not kmin:
        return vec
    v = Vec()
    v.items = {k: c.tau_shift(-kmin) for k, c in vec.items.items()}
    return v


class RowReducer:
    """Incremental Gauss-Jordan elimination with deterministic pivots.

    `pivot_key` orders pivot candidates; the pivot of a new row is the
    candidate minimizing it (default: the basis label itself).  Callers use
    this to decide which basis elements get eliminated, e.g. preferring to
    eliminate structurally complex labels.
    """

    def __init__(self, pivot_key=None):
        self.rows = {}  # pivot key -> normalized Vec (pivot coeff == 1)
        self.pivot_key = pivot_key if pivot_key is not None else (lambda k: k)

    def reduce(self, vec):
        """Fully reduce vec against the current pivot rows.

        Rows are kept mutually back-substituted, so no row introduces
        another pivot key and a single pass suffices."""
        out = vec
        for key in [k for k in vec.items if k in self.rows]:
            c = out.items.get(key)
            if c is None or c.is_zero():
                continue
            out = out - self.rows[key].scale(c)
        return out

    def add(self, vec):
        """Add a relation; returns True if it enlarged the span."""
        red = self.reduce(vec)
        if red.is_zero():
            return False
        red = _tau_strip(red)
        pivot = None
        for key in sorted(red.items, key=self.pivot_key):
            c = red.items[key]
            if isinstance(c, Scalar) and c.is_tau_free():
                pivot = key
                break
        if pivot is None:
            pivot = min(red.items, key=self.pivot_key)
        c = red.items[pivot]
        if isinstance(c, Scalar):
            try:
                inv = scalar_inverse(c)
            except NotInvertible:
                inv = ScalarFraction(c).inverse()
        else:
            inv = c.inverse()
        norm = red.scale(inv)
        # back-substitute into existing rows so reduction stays single-pass
        for pk, row in list(self.rows.items()):
            cc = row.items.get(pivot)
            if cc is not None and not cc.is_zero():
                self.rows[pk] = row - norm.scale(cc)
        self.rows[pivot] = norm
        self.last_pivot = pivot
        return True

    def rank(self):
        return len(self.rows)

    def pivot_keys(self):
        return set(self.rows)


def normal_form(vec, reducer):
    """Image of vec in the quotient by the reducer's row space."""
    return reducer.reduce(vec)
