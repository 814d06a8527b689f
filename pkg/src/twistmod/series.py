"""Formal log-Laurent series in finitely many variables.

A MultiSeries holds finitely many terms.  Each term is keyed by a tuple of
(exponent, log power) pairs, one pair per variable; exponents are rational,
log powers are nonnegative integers.  The variable tuple doubles as the
region tag: variables are listed in strictly decreasing magnitude order,
and arithmetic between series with different variable tuples is a type
error.  Infinite objects (binomial expansions of (a-b)^r, log(a-b)) are
produced as truncations to an explicit order; the callers derive the order
from truncation windows, and WindowOverflow flags requests that a window
cannot honor.

Branch bookkeeping: a series carries a branch index per variable.  Moving
to branch p+1 substitutes log x -> log x + tau and x^n -> e^{2 pi i n} x^n,
realized by branch_substitute.  tau powers produced this way are checked
against the globally declared tau cap (TauOverflow).
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

from .scalars import Scalar, get_tau_cap


class WindowOverflow(ArithmeticError):
    """An operation needs series terms beyond the declared window."""


class NotPolynomial(ArithmeticError):
    """A cleared correlation function failed to terminate inside its window."""


class RegionMismatch(TypeError):
    """Series attached to different regions were combined."""


@lru_cache(maxsize=None)
def binom(r, j):
    """Generalized binomial coefficient C(r, j) for rational r, j >= 0."""
    r = Fraction(r)
    num = Fraction(1)
    for t in range(j):
        num *= r - t
    return num / factorial(j)


class MultiSeries:
    """Finite formal sum of monomials  prod_i v_i^{e_i} (log v_i)^{k_i}."""

    __slots__ = ("vars", "terms", "branch")

    def __init__(self, vars, terms=None, branch=None):
        self.vars = tuple(vars)
        self.terms = dict(terms) if terms else {}
        self.branch = tuple(branch) if branch is not None else (0,) * len(self.vars)

    @staticmethod
    def constant(vars, coeff, branch=None):
        key = tuple((Fraction(0), 0) for _ in vars)
        s = MultiSeries(vars, {key: coeff}, branch)
        return s.prune()

    @staticmethod
    def monomial(vars, key, coeff, branch=None):
        return MultiSeries(vars, {tuple(key): coeff}, branch)

    def prune(self):
        self.terms = {k: c for k, c in self.terms.items() if not c.is_zero()}
        return self

    def is_zero(self):
        return all(c.is_zero() for c in self.terms.values())

    def _check(self, other):
        if self.vars != other.vars:
            raise RegionMismatch("%r vs %r" % (self.vars, other.vars))
        if self.branch != other.branch:
            raise RegionMismatch("branch %r vs %r" % (self.branch, other.branch))

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            if k in out:
                out[k] = out[k] + c
            else:
                out[k] = c
        return MultiSeries(self.vars, out, self.branch).prune()

    def __sub__(self, other):
        return self + other.scale(Scalar.from_rational(-1))

    def scale(self, c):
        return MultiSeries(self.vars,
                           {k: coeff * c for k, coeff in self.terms.items()},
                           self.branch).prune()

    def coefficient(self, key):
        return self.terms.get(tuple(key))

    def var_index(self, var):
        return self.vars.index(var)

    def exponents(self, var):
        i = self.var_index(var)
        return sorted({k[i][0] for k in self.terms})

    def map_coeffs(self, fn):
        return MultiSeries(self.vars, {k: fn(c) for k, c in self.terms.items()},
                           self.branch).prune()


def series_mul(a, b, window=None):
    """Product of two series over the same region.

    One factor must have Scalar coefficients.  `window` optionally maps a
    variable name to an (lo, hi) exponent range; output terms falling
    outside any declared range are discarded (the caller certifies, via its
    trusted-window bookkeeping, that discarded terms are never compared).
    """
    a._check(b)
    if a.terms and not isinstance(next(iter(a.terms.values())), Scalar):
        a, b = b, a
    out = {}
    vars = a.vars
    for k1, c1 in a.terms.items():
        if c1.is_zero():
            continue
        for k2, c2 in b.terms.items():
            key = tuple((e1 + e2, l1 + l2)
                        for (e1, l1), (e2, l2) in zip(k1, k2))
            if window is not None and _outside(vars, key, window):
                continue
            prod = c2 * c1
            if key in out:
                out[key] = out[key] + prod
            else:
                out[key] = prod
    return MultiSeries(vars, out, a.branch).prune()


def _outside(vars, key, window):
    for v, (e, _) in zip(vars, key):
        rng = window.get(v)
        if rng is not None and not (rng[0] <= e <= rng[1]):
            return True
    return False


def residue(series, var):
    """Coefficient of var^{-1} (log-free in var), a series in the others."""
    i = series.var_index(var)
    if any(k[i][1] != 0 and not series.terms[k].is_zero()
           for k in series.terms if k[i][0] == -1):
        raise ValueError("residue of a term carrying log %s" % var)
    rest_vars = series.vars[:i] + series.vars[i + 1:]
    rest_branch = series.branch[:i] + series.branch[i + 1:]
    out = {}
    for k, c in series.terms.items():
        if k[i] != (Fraction(-1), 0):
            continue
        rk = k[:i] + k[i + 1:]
        if rk in out:
            out[rk] = out[rk] + c
        else:
            out[rk] = c
    return MultiSeries(rest_vars, out, rest_branch).prune()


def binomial_expand(vars_pair, r, region, order, all_vars=None, branch=None):
    """Truncated expansion of a binomial power of a difference of variables.

    region "first": (a - b)^r, expanded in powers of b/a.
    region "second": (-b + a)^r, expanded in powers of a/b, with the
    convention (-1)^{r-j} = e^{pi i (r-j)}.  For integer r the two regions
    give the same polynomial once both are fully expanded, which the tests
    exercise.

    `order` bounds the expansion index j; `all_vars` optionally embeds the
    result into a larger variable tuple.
    """
    a, b = vars_pair
    r = Fraction(r)
    if all_vars is None:
        all_vars = vars_pair
    terms = {}
    jmax = order
    if r == int(r) and r >= 0:
        jmax = min(order, int(r))
    for j in range(jmax + 1):
        c = binom(r, j)
        if c == 0:
            continue
        if region == "first":
            coeff = Scalar.from_rational(c * (-1) ** j)
            ea, eb = r - j, Fraction(j)
        elif region == "second":
            coeff = Scalar.from_rational(c) * Scalar.e_pi_i(r - j)
            ea, eb = Fraction(j), r - j
        else:
            raise ValueError(region)
        key = _embed_key(all_vars, {a: (ea, 0), b: (eb, 0)})
        terms[key] = terms.get(key, Scalar.zero()) + coeff
    return MultiSeries(all_vars, terms, branch).prune()


def log_diff_expand(vars_pair, region, order, all_vars=None, branch=None):
    """Truncated series for log(a - b) ("first") or log(-b + a) ("second").

    log(a - b)  = log a - sum_{j>=1} (b/a)^j / j
    log(-b + a) = log b + tau/2 - sum_{j>=1} (a/b)^j / j

    The tau/2 constant is the half turn separating the two branches.
    """
    a, b = vars_pair
    if all_vars is None:
        all_vars = vars_pair
    terms = {}
    if region == "first":
        lead_var, small, big = a, b, a
        key = _embed_key(all_vars, {a: (Fraction(0), 1)})
        terms[key] = Scalar.one()
    elif region == "second":
        lead_var, small, big = b, a, b
        key = _embed_key(all_vars, {b: (Fraction(0), 1)})
        terms[key] = Scalar.one()
        const = _embed_key(all_vars, {})
        terms[const] = terms.get(const, Scalar.zero()) + \
            Scalar.tau() * Fraction(1, 2)
    else:
        raise ValueError(region)
    for j in range(1, order + 1):
        key = _embed_key(all_vars, {small: (Fraction(j), 0),
                                    big: (Fraction(-j), 0)})
        terms[key] = terms.get(key, Scalar.zero()) + \
            Scalar.from_rational(Fraction(-1, j))
    return MultiSeries(all_vars, terms, branch).prune()


def _embed_key(all_vars, assignment):
    return tuple(assignment.get(v, (Fraction(0), 0)) for v in all_vars)


def branch_substitute(series, var, delta):
    """Shift the branch of one variable by delta turns.

    log v -> log v + delta tau,  v^n -> e^{2 pi i n delta} v^n.
    """
    i = series.var_index(var)
    cap = get_tau_cap()
    out = {}
    for k, c in series.terms.items():
        e, l = k[i]
        phase = Scalar.root_of_unity((e * delta) % 1)
        for j in range(l + 1):
            tpow = l - j
            coeff = c * phase * Scalar.from_rational(
                binom(Fraction(l), j) * Fraction(delta) ** tpow)
            if tpow:
                coeff = coeff * Scalar.tau(tpow)
            if cap is not None and isinstance(coeff, Scalar) \
                    and coeff.tau_degree() > cap:
                raise TauOverflowError(coeff.tau_degree(), cap)
            nk = k[:i] + ((e, j),) + k[i + 1:]
            if nk in out:
                out[nk] = out[nk] + coeff
            else:
                out[nk] = coeff
    branch = list(series.branch)
    branch[i] += delta
    return MultiSeries(series.vars, out, branch).prune()


def TauOverflowError(deg, cap):
    from .scalars import TauOverflow
    return TauOverflow("tau degree %d exceeds declared cap %d" % (deg, cap))


def nilpotent_conjugate(field_family, nilmap, log_series, kmax):
    """Conjugation of a field family by a nilpotent-exponential prefactor.

    `field_family(index)` yields the series for generator `index`;
    `nilmap(index)` is the nilpotent index map (0 meaning the zero field);
    the result for index i is  sum_r  log_series^r / r!  *  field(N^r i),
    which is finite because nilmap is nilpotent (kmax guards against a map
    that fails to terminate).
    """
    def conjugated(index):
        acc = None
        power = None
        cur = index
        for r in range(kmax + 1):
            if cur == 0:
                break
            f = field_family(cur)
            if power is not None:
                f = series_mul(power.scale(Scalar.from_rational(
                    Fraction(1, factorial(r)))), f)
            acc = f if acc is None else acc + f
            cur = nilmap(cur)
            if power is None:
                power = log_series
            else:
                power = series_mul(power, log_series)
        else:
            if cur != 0:
                raise WindowOverflow("nilpotent map did not terminate "
                                     "within %d steps" % kmax)
        return acc
    return conjugated


def pole_clear_normal_form(series, clearing, order_hint=0, window=None):
    """Multiply a correlation series by its pairwise pole-clearing factors.

    `clearing` is a list of ((var_a, var_b), exponent, region) triples with
    nonnegative integer exponents, so each factor is a polynomial and the
    product is exact.  Raises NotPolynomial if a negative clearing exponent
    is requested (that would need an infinite expansion).
    """
    out = series
    for (pair, m, region) in clearing:
        if m < 0 or m != int(m):
            raise NotPolynomial("clearing exponent %r is not a nonnegative "
                                "integer" % (m,))
        factor = binomial_expand(pair, Fraction(m), region, int(m) + order_hint,
                                 all_vars=series.vars, branch=series.branch)
        out = series_mul(factor, out, window=window)
    return out
