import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radtails.models import (ModelSpec, NonlinearTerm, PotentialSpec, eval_rhs_pointwise,
                             preset, PRESETS)
from radtails.numerics import dd


def test_skyrme_preset():
    m = preset("skyrme_pert")
    assert m.l == 1 and m.dimension == 5 and m.potential.alpha == 6
    assert [(t.coeff, t.power, t.radial_weight) for t in m.terms] == [(4 / 3, 3, 0)]


def test_yang_mills_preset():
    m = preset("yang_mills")
    assert m.l == 1
    assert sorted((t.coeff, t.power, t.radial_weight) for t in m.terms) == [(1.0, 3, 2), (3.0, 2, 0)]


def test_other_presets():
    assert preset("free", l=0).is_free
    w = preset("wavemap5")
    assert w.l == 1 and [(t.coeff, t.power, t.radial_weight) for t in w.terms] == [(4 / 3, 3, 0)]
    q = preset("quadratic_anomalous", l=2)
    assert q.l == 2 and [(t.coeff, t.power, t.radial_weight) for t in q.terms] == [(1.0, 2, 0)]
    with pytest.raises(ValueError):
        preset("quadratic_anomalous", l=0)
    with pytest.raises(ValueError):
        preset("nope")


def test_rhs_examples():
    assert eval_rhs_pointwise(preset("free"), 1.0, 0.3, 2.5) == 2.5
    assert eval_rhs_pointwise(preset("linear"), 1.7, 0.0, 2.5) == 2.5
    assert eval_rhs_pointwise(preset("yang_mills"), 1.0, 0.1, 0.0) == pytest.approx(-0.031, rel=1e-14)


def test_rhs_sign_convention():
    m = preset("linear", lam=0.5, alpha=3.0)
    r, phi, lap = 2.0, 0.3, 0.1
    assert eval_rhs_pointwise(m, r, phi, lap) == pytest.approx(lap - 0.5 * r**-3 * phi)
    p = preset("power", p=3)
    assert eval_rhs_pointwise(p, r, phi, lap) == pytest.approx(lap + phi**3)  # box phi = phi^3


@pytest.mark.parametrize("form", ["constant_plateau", "hermite_blend"])
def test_potential_continuity_and_tail(form):
    v = PotentialSpec(lam=0.3, alpha=4.0, cutoff_R=1.5, inner_form=form)
    R = 1.5
    assert abs(v(R * (1 - 1e-12)) - v(R * (1 + 1e-12))) < 1e-10
    assert abs(v(R) - v(np.nextafter(R, 0))) < 1e-12
    r = np.linspace(R, 10, 50)
    assert np.allclose(v(r), 0.3 * r**-4.0, rtol=1e-14)
    inner = v(np.linspace(0, R, 50))
    assert np.all(np.isfinite(inner)) and np.max(np.abs(inner)) < 50 * 0.3 * R**-4


def test_smooth_blend_matches_at_infinity():
    v = PotentialSpec(lam=0.3, alpha=4.0, cutoff_R=1.5, inner_form="smooth_blend")
    r = np.array([1e2, 1e3, 1e4])
    ratio = v(r) * r**4.0 / 0.3
    assert np.all(np.diff(np.abs(ratio - 1)) < 0) and abs(ratio[-1] - 1) < 1e-7
    assert v(0.0) == pytest.approx(0.3 * 1.5**-4.0)


def test_constant_plateau_is_constant():
    v = PotentialSpec(lam=0.1, alpha=3.0, cutoff_R=1.0)
    assert np.all(v(np.linspace(0, 1, 11)) == 0.1)


@given(st.floats(0.01, 5), st.floats(2.1, 9), st.floats(0.2, 3), st.floats(1, 50))
def test_far_field_exact(lam, alpha, R, x):
    v = PotentialSpec(lam=lam, alpha=alpha, cutoff_R=R)
    r = 2 * R * x
    assert v(r) * r**alpha == pytest.approx(lam, rel=1e-13)


def test_potential_validation():
    with pytest.raises(ValueError):
        PotentialSpec(lam=0.1, alpha=2.0)
    with pytest.raises(ValueError):
        PotentialSpec(lam=0.1, alpha=3.0, cutoff_R=0.0)
    with pytest.raises(ValueError):
        PotentialSpec(lam=0.1, alpha=3.0, inner_form="spline")


def test_term_validation():
    with pytest.raises(ValueError):
        NonlinearTerm(1.0, 1)
    with pytest.raises(ValueError):
        NonlinearTerm(1.0, 2, -2)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_roundtrip(name):
    m = preset(name)
    assert ModelSpec.from_dict(m.to_dict()) == m


def test_extended_precision_potential():
    for form, ref in [("smooth_blend", 0.1 * 7.25**-1.5), ("constant_plateau", 0.1 * 2.5**-3)]:
        v = PotentialSpec(lam=0.1, alpha=3.0, cutoff_R=1.0, inner_form=form)
        x = v(dd("2.5"))
        assert float(x.to_float()) == pytest.approx(ref, rel=1e-15)
