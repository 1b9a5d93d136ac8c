import math

import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from radtails.freewave import FreeWave, bessel_coefficients
from radtails.numerics import dd
from radtails.profiles import Profile, default_profile, eval_derivative

T, R = sympy.symbols("t r", positive=True)


def symbolic_solution(l: int, a):
    """phi from the closed form with a generic function a, built independently."""
    terms = 0
    for k in range(l + 1):
        c = sympy.Integer(2) ** (k - l) * sympy.factorial(2 * l - k) / (sympy.factorial(k) * sympy.factorial(l - k))
        dm = sympy.diff(a(T - R), T, k) if k else a(T - R)
        dp = sympy.diff(a(T + R), T, k) if k else a(T + R)
        terms += c * R**k * (dm - (-1) ** k * dp)
    return terms / R ** (2 * l + 1)


@pytest.mark.parametrize("l", [0, 1, 2, 3])
def test_closed_form_solves_wave_equation(l):
    a = sympy.Function("a")
    phi = symbolic_solution(l, a)
    d = 2 * l + 3
    res = sympy.diff(phi, T, 2) - sympy.diff(phi, R, 2) - (d - 1) / R * sympy.diff(phi, R)
    assert sympy.simplify(sympy.expand(res)) == 0


@pytest.mark.parametrize("l", [0, 1, 2, 3])
def test_coefficients_match_formula(l):
    expected = [2 ** (k - l) * math.factorial(2 * l - k) // 1 / (math.factorial(k) * math.factorial(l - k))
                for k in range(l + 1)]
    assert np.allclose(bessel_coefficients(l), expected)


def _numeric_oracle(l, prof, t, r):
    x = sympy.Symbol("x")
    a_expr = (x - prof.u0) ** prof.m * (prof.u1 - x) ** prof.n * prof.amplitude

    def a_eval(k, u):
        if not prof.u0 < u < prof.u1:
            return 0.0
        return float(sympy.diff(a_expr, x, k).subs(x, sympy.Float(u, 30)))

    total = 0.0
    for k in range(l + 1):
        c = 2.0 ** (k - l) * math.factorial(2 * l - k) / (math.factorial(k) * math.factorial(l - k))
        total += c * r**k * (a_eval(k, t - r) - (-1) ** k * a_eval(k, t + r))
    return total / r ** (2 * l + 1)


def test_l0_reduction():
    p = default_profile()
    w = FreeWave(p, 0)
    for t, r in [(0.0, 0.5), (1.3, 0.7), (2.0, 1.5), (0.4, 3.0)]:
        assert w.eval(t, r) == pytest.approx((p(t - r) - p(t + r)) / r, rel=1e-13, abs=1e-15)


def test_l1_hand_expansion(rng):
    p = default_profile()
    w = FreeWave(p, 1)
    for _ in range(20):
        t, r = rng.uniform(0, 4), rng.uniform(0.3, 3)
        a = lambda k, u: float(eval_derivative(p, k, u))
        hand = ((a(0, t - r) - a(0, t + r)) + r * (a(1, t - r) + a(1, t + r))) / r**3
        assert w.eval(t, r) == pytest.approx(hand, rel=1e-11, abs=1e-13)


@pytest.mark.parametrize("l", [2, 3])
def test_higher_l_against_sympy(l, rng):
    p = Profile(0.0, 2.0, 8, 1.0, m_right=10)
    w = FreeWave(p, l)
    for _ in range(5):
        t, r = rng.uniform(0, 4), rng.uniform(0.6, 3)
        assert w.eval(t, r) == pytest.approx(_numeric_oracle(l, p, t, r), rel=1e-9, abs=1e-12)


def test_both_arguments_outside_support_gives_zero():
    w = FreeWave(default_profile(), 1)
    assert w.eval(10.0, 3.0) == 0.0  # t-r = 7, t+r = 13
    assert w.eval(-5.0, 1.0) == 0.0  # t+r = -4


@pytest.mark.parametrize("l", [0, 1, 2])
def test_huygens_exact_zero(l):
    w = FreeWave(default_profile(), l)
    for r_obs in (0.5, 3.0, 10.0):
        assert w.huygens_check(r_obs, r_obs + w.profile.u1 + 1) == 0.0
    with pytest.raises(ValueError):
        w.huygens_check(3.0, 4.0)


@given(st.integers(0, 3), st.floats(0.1, 20), st.floats(0.01, 0.99))
def test_huygens_property(l, r, frac):
    w = FreeWave(default_profile(), l)
    t = r + w.profile.u1 + frac * 10 + 1e-9
    assert w.eval(t, r) == 0.0


@pytest.mark.parametrize("l", [0, 1, 2])
def test_origin_regularity(l):
    w = FreeWave(default_profile(), l)
    t = 1.2
    r1, r2 = 1e-3 * 2, 1e-4 * 2
    v1, v2, v0 = w.value_at(t, r1), w.value_at(t, r2), w.value_at(t, 0.0)
    assert np.isfinite(v0)
    # smooth even function of r: the difference is O(r^2)
    scale = max(1.0, abs(v0))
    assert abs(v1 - v0) < 50 * r1**2 * scale * 10 ** (2 * l)
    assert abs(v2 - v0) < abs(v1 - v0) / 50 + 1e-12 * scale


@pytest.mark.parametrize("l", [0, 1, 2])
def test_series_and_direct_agree_near_switch(l):
    p = default_profile()
    w = FreeWave(p, l)
    r_s = 0.1 * p.width
    for t in (0.3, 1.0, 1.7):
        inside = w.value_at(t, r_s * (1 - 1e-9))
        outside = w.value_at(t, r_s * (1 + 1e-9))
        assert inside == pytest.approx(outside, rel=1e-7, abs=1e-9)


def test_ingoing_outgoing_split():
    w = FreeWave(default_profile(), 1)
    # early: only the a(t+r) terms are live
    assert w.eval(-1.0, 2.0) == pytest.approx(w.ingoing_only(-1.0, 2.0), rel=1e-14)
    assert w.outgoing_only(-1.0, 2.0) == 0.0
    # late at large r: only the a(t-r) terms are live
    assert w.eval(6.0, 5.0) == pytest.approx(w.outgoing_only(6.0, 5.0), rel=1e-14)
    assert w.ingoing_only(6.0, 5.0) == 0.0


@pytest.mark.parametrize("l", [0, 1, 2])
def test_time_derivative_matches_symbolic(l, rng):
    p = default_profile()
    w = FreeWave(p, l)
    a = sympy.Function("a")
    x = sympy.Symbol("x")
    bump = (x - p.u0) ** p.m * (p.u1 - x) ** p.n
    dphi = sympy.diff(symbolic_solution(l, a), T)
    for _ in range(3):
        t, r = rng.uniform(0.2, 2.5), rng.uniform(0.5, 2.0)
        expr = dphi.subs({T: sympy.Float(t, 30), R: sympy.Float(r, 30)})
        expr = expr.replace(a, sympy.Lambda(x, sympy.Piecewise((bump, (x > p.u0) & (x < p.u1)), (0, True))))
        ref = float(sympy.N(expr.doit(), 30))
        assert w.time_derivative(t, r) == pytest.approx(ref, rel=1e-9, abs=1e-11)


def test_initial_data_zero_amplitude():
    w = FreeWave(Profile(0.0, 2.0, 8, 0.0), 1)
    f, g = w.initial_data(np.linspace(0, 5, 11))
    assert np.all(f == 0) and np.all(g == 0)


def test_initial_data_far_support_uses_ingoing_terms():
    p = Profile(6.0, 8.0, 8, 1.0)
    w = FreeWave(p, 0)
    r = np.linspace(0.5, 5.0, 10)
    f, _ = w.initial_data(r)
    assert np.allclose(f, -p(r) / r, atol=0)  # a(-r) = 0, only a(+r) enters


@pytest.mark.parametrize("l", [0, 1, 2])
def test_pde_residual_converges(l):
    w = FreeWave(default_profile(), l)
    d = 2 * l + 3
    t, r = 1.4, 0.9

    def residual(h):
        tt = w.eval(np.array([t - h, t, t + h]), r)
        k = h / 2  # unequal steps, so traveling-wave truncation errors do not cancel
        rr = w.eval(t, np.array([r - k, r, r + k]))
        phi_tt = (tt[0] - 2 * tt[1] + tt[2]) / h**2
        phi_rr = (rr[0] - 2 * rr[1] + rr[2]) / k**2
        phi_r = (rr[2] - rr[0]) / (2 * k)
        return phi_tt - phi_rr - (d - 1) / r * phi_r

    e1, e2 = abs(residual(2e-2)), abs(residual(1e-2))
    assert 3.0 < e1 / e2 < 5.0  # second-order differences: ratio 4


def test_extended_precision_eval():
    w = FreeWave(default_profile(), 2)
    val = w.eval(dd("1.3"), dd("0.7"))
    assert float(val.to_float()) == pytest.approx(w.eval(1.3, 0.7), rel=1e-13)


def test_rejects_bad_arguments():
    w = FreeWave(default_profile(), 1)
    with pytest.raises(ValueError):
        w.eval(1.0, 0.0)
    with pytest.raises(ValueError):
        FreeWave(Profile(0.0, 2.0, 4, 1.0), 2)
