"""Exact scalar field: rationals, roots of unity, and the formal constant
tau standing for 2 pi i."""

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from twistmod.scalars import (Scalar, ScalarFraction, NotInvertible,
                              cyclotomic, scalar_inverse)


# -- canonical forms ---------------------------------------------------------

def test_zero_and_one():
    assert Scalar.zero().is_zero()
    assert not Scalar.one().is_zero()
    assert Scalar.one().as_rational() == 1


def test_cyclotomic_polynomials():
    # independently known coefficient lists
    assert cyclotomic(1) == [Fraction(-1), Fraction(1)]
    assert cyclotomic(2) == [Fraction(1), Fraction(1)]
    assert cyclotomic(4) == [Fraction(1), Fraction(0), Fraction(1)]
    assert cyclotomic(6) == [Fraction(1), Fraction(-1), Fraction(1)]
    assert cyclotomic(12) == [Fraction(1), Fraction(0), Fraction(-1),
                              Fraction(0), Fraction(1)]


def test_primitive_root_relations():
    # 1 + zeta_3 + zeta_3^2 = 0
    z3 = Scalar.root_of_unity(Fraction(1, 3))
    assert (Scalar.one() + z3 + z3 * z3).is_zero()
    # zeta_4^2 = -1
    i = Scalar.root_of_unity(Fraction(1, 4))
    assert i * i == Scalar.from_rational(-1)
    # e^{pi i} = -1 on the pinned branch
    assert Scalar.e_pi_i(1) == Scalar.from_rational(-1)
    assert Scalar.e_pi_i(Fraction(1, 2)) == Scalar.root_of_unity(
        Fraction(1, 4))


def test_root_of_unity_order():
    z = Scalar.root_of_unity(Fraction(1, 5))
    acc = Scalar.one()
    for _ in range(5):
        acc = acc * z
    assert acc == Scalar.one()


def test_tau_polynomials():
    t = Scalar.tau()
    s = t * t + t * 3 + Scalar.one()
    assert s.tau_degree() == 2
    assert not s.is_tau_free()
    assert s.tau_coefficients()[1] == Scalar.from_rational(3)
    assert Scalar.tau(2) == t * t


def test_tau_shift_negative_blocked():
    with pytest.raises(NotInvertible):
        Scalar.one().tau_shift(-1)


# -- inverses ----------------------------------------------------------------

def test_scalar_inverse_rational():
    s = Scalar.from_rational(Fraction(-7, 3))
    assert s * scalar_inverse(s) == Scalar.one()


def test_scalar_inverse_cyclotomic():
    s = Scalar.one() + Scalar.root_of_unity(Fraction(1, 3))
    assert s * scalar_inverse(s) == Scalar.one()


def test_scalar_fraction_field():
    t = Scalar.tau()
    num = t + Scalar.one()
    f = ScalarFraction(num)
    g = f * f.inverse()
    assert g == ScalarFraction(Scalar.one())


# -- property tests ----------------------------------------------------------

rationals = st.fractions(max_numerator=50, max_denominator=12)
roots = st.fractions(min_value=0, max_value=1, max_denominator=8)
taupow = st.integers(min_value=0, max_value=2)


@st.composite
def scalars(draw):
    n = draw(st.integers(min_value=0, max_value=3))
    out = Scalar.zero()
    for _ in range(n):
        term = Scalar.root_of_unity(draw(roots)) * Scalar.tau(draw(taupow))
        out = out + term * draw(rationals)
    return out


@settings(max_examples=60, deadline=None)
@given(scalars(), scalars(), scalars())
def test_ring_axioms(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c


@settings(max_examples=60, deadline=None)
@given(scalars())
def test_additive_inverse(a):
    assert (a - a).is_zero()
    assert (a + (-a)).is_zero()


@settings(max_examples=40, deadline=None)
@given(scalars())
def test_tau_free_inverse(a):
    # every nonzero tau-free scalar is invertible (cyclotomic field)
    if a.is_tau_free() and not a.is_zero():
        assert a * scalar_inverse(a) == Scalar.one()


@settings(max_examples=40, deadline=None)
@given(scalars())
def test_equality_decidable(a):
    # canonical form: a scalar equals zero iff its difference with itself
    # plus a nonzero rational does not vanish
    assert not (a + Scalar.one() - a).is_zero()
