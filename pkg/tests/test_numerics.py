import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radtails.numerics import (DD, Precision, dd, double_factorial, falling_factorial,
                               gauss_legendre, integrate, legendre_p, rising_factorial,
                               unit_roundoff)


@pytest.mark.parametrize("l, mu, expected", [(0, 0.37, 1.0), (1, -0.5, -0.5), (2, 1.0, 1.0)])
def test_legendre_examples(l, mu, expected):
    assert legendre_p(l, mu) == expected


@given(st.floats(-1, 1), st.integers(1, 12))
def test_legendre_recurrence(mu, l):
    lhs = (l + 1) * legendre_p(l + 1, mu) - (2 * l + 1) * mu * legendre_p(l, mu) + l * legendre_p(l - 1, mu)
    assert abs(lhs) <= 100 * (2 * l + 1) * np.finfo(float).eps


@given(st.floats(-1, 1), st.integers(0, 12))
def test_legendre_bounded(mu, l):
    assert abs(legendre_p(l, mu)) <= 1 + 1e-13


@given(st.floats(-1, 1), st.integers(0, 12))
def test_legendre_matches_mpmath(mu, l):
    assert legendre_p(l, mu) == pytest.approx(float(mpmath.legendre(l, mu)), abs=1e-13)


def test_legendre_extended_precision():
    mu = dd("0.3")
    val = legendre_p(7, mu).to_mpf()
    with mpmath.workdps(40):
        ref = mpmath.legendre(7, mpmath.mpf("0.3"))
        assert abs(val - ref) < mpmath.mpf("1e-30")


@pytest.mark.parametrize("x, k, expected", [(2.5, 0, 1.0), (0, 1, 0.0), (5, 3, 60.0)])
def test_falling_examples(x, k, expected):
    assert falling_factorial(x, k) == expected


@pytest.mark.parametrize("x, k, expected", [(3, 0, 1.0), (1, 4, 24.0), (0.5, 2, 0.75)])
def test_rising_examples(x, k, expected):
    assert rising_factorial(x, k) == expected


@given(st.floats(-20, 20), st.integers(0, 8))
def test_falling_rising_identity(x, k):
    a = falling_factorial(x, k)
    b = rising_factorial(x - k + 1, k)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-9)


@given(st.integers(0, 10))
def test_falling_factorial_integers(n):
    assert falling_factorial(n, n) == math.factorial(n)


@pytest.mark.parametrize("n, expected", [(1, 1), (3, 3), (5, 15), (9, 945)])
def test_double_factorial(n, expected):
    assert double_factorial(n) == expected


@pytest.mark.parametrize("n", [0, -1, 2, 4])
def test_double_factorial_rejects(n):
    with pytest.raises(ValueError):
        double_factorial(n)


def test_gauss_small_rules():
    r1 = gauss_legendre(1)
    assert np.allclose(r1.nodes, [0.0]) and np.allclose(r1.weights, [2.0])
    r2 = gauss_legendre(2)
    assert np.allclose(r2.nodes, [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
    assert np.allclose(r2.weights, [1.0, 1.0], atol=1e-15)


def test_gauss_exactness_x4():
    assert integrate(lambda x: x**4, -1.0, 1.0, n=3) == pytest.approx(0.4, abs=1e-12)


@pytest.mark.parametrize("precision", list(Precision))
@pytest.mark.parametrize("n", [1, 2, 5, 16, 33, 64])
def test_gauss_rule_invariants(n, precision):
    rule = gauss_legendre(n, precision)
    w = rule.weights
    total = w.sum().to_mpf() if isinstance(w, DD) else math.fsum(w)
    assert abs(total - 2) <= 10 * unit_roundoff(precision) * n
    x = rule.nodes.to_float() if isinstance(rule.nodes, DD) else rule.nodes
    assert np.all(np.diff(x) > 0) and np.all(np.abs(x) < 1)
    wf = w.to_float() if isinstance(w, DD) else w
    assert np.all(wf > 0)


@given(st.integers(1, 20), st.data())
def test_gauss_polynomial_exactness(n, data):
    deg = data.draw(st.integers(0, 2 * n - 1))
    exact = 2.0 / (deg + 1) if deg % 2 == 0 else 0.0
    assert integrate(lambda x: x**deg, -1.0, 1.0, n=n) == pytest.approx(exact, abs=1e-13)


def test_gauss_extended_exactness():
    val = integrate(lambda x: x**30, dd(-1.0), dd(1.0), n=16, precision="extended")
    with mpmath.workdps(40):
        assert abs(val.to_mpf() - mpmath.mpf(2) / 31) < mpmath.mpf("1e-30")


def test_gauss_spectral_convergence():
    f = lambda x: np.exp(x) * np.cos(3 * x)
    exact = float(mpmath.quad(lambda x: mpmath.exp(x) * mpmath.cos(3 * x), [-1, 1]))
    errs = [abs(integrate(f, -1.0, 1.0, n=n) - exact) for n in (4, 8)]
    # spectral: doubling n squares the relative error scale, far beyond algebraic 2^p
    assert errs[1] < errs[0] ** 1.5 and errs[1] < 1e-8


def test_dd_digits_and_determinism():
    third = dd(1) / dd(3)
    with mpmath.workdps(40):
        assert abs(third.to_mpf() - mpmath.mpf(1) / 3) < mpmath.mpf("1e-31")
    a = (dd("0.1") * dd(7) - dd("0.7"))
    b = (dd("0.1") * dd(7) - dd("0.7"))
    assert a.hi == b.hi and a.lo == b.lo


def test_standard_mode_digits():
    assert abs(0.1 * 3 - 0.3) < 1e-15
    assert unit_roundoff("standard") <= 1e-15 and unit_roundoff("extended") <= 1e-30
