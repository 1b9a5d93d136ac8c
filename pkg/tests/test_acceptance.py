"""End-to-end acceptance criteria 1-12.

Each test prints one ``PASS/FAIL criterion N`` line (repeated in the terminal
summary) and asserts the criterion at its stated tolerance.  Tail runs use
h = 1/32, 6th-order stencils, extended precision and a causal boundary.
"""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from radtails import cli
from radtails.analysis import (TimeSeries, detect_plateau, fit_amplitude, linear_coefficient,
                               local_power_index, nonlinear_coefficient, predict)
from radtails.evolve import EvolveConfig, operator_identity_check, run
from radtails.freewave import FreeWave
from radtails.models import preset
from radtails.perturb import duhamel_eval, iterate_linear, linear_source
from radtails.profiles import Profile, default_profile, moment_A, moment_Atilde

pytestmark = pytest.mark.slow

H = 1 / 32
TESTS = Path(__file__).parent


def evolve(model, prof, t_final, r_obs=5.0, h=H):
    cfg = EvolveConfig(t_final=t_final, h=h, observation_radii=(r_obs,))
    t0 = time.perf_counter()
    s = run(model, FreeWave(prof, model.l), cfg).series[0]
    return s, time.perf_counter() - t0


def measure(s: TimeSeries, gamma_pred: float, t_lo: float | None = None):
    """Fitted rate (mean local index over the final quarter of log t) and
    amplitude (mean of t^gamma phi over the last decade)."""
    t_lo = t_lo if t_lo is not None else s.times[-1] / 10
    plat = detect_plateau(local_power_index(s, t_lo, strict=False))
    fit = fit_amplitude(s, gamma_pred, t_lo)
    return plat.gamma, fit.amplitude


def rel(a, b):
    return abs(a - b) / abs(b)


def value_at(s: TimeSeries, t: float) -> float:
    return float(s.values[np.argmin(np.abs(s.times - t))])


# ---------------------------------------------------------------------------
# 1. Huygens floor
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("l", [0, 1, 2])
def test_c1_huygens_floor(l, criterion):
    prof = Profile(0.0, 2.0, 32, 1.0)
    s, wall = evolve(preset("free", l=l), prof, 30.0, 5.0, h=1 / 64)
    peak = float(np.max(np.abs(s.values)))
    floor = float(np.max(np.abs(s.window(20.0).values))) / peak
    ok = floor <= 1e-20 and wall <= 60
    criterion(1, ok, f"l={l} post-passage |phi|/peak = {floor:.2e} (limit 1e-20), {wall:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 2 and 9. Linear l=0, alpha=3
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def linear_l0(tmp_path_factory):
    """The criterion-2 run goes through ``radtails verify``."""
    d = tmp_path_factory.mktemp("c2")
    cfg = d / "c2.ini"
    cfg.write_text(f"""
[model]
preset = linear
l = 0
alpha = 3.0
lam = 0.1
[evolve]
t_final = 200
observation_radii = 5
[output]
directory = {d / 'out'}
""")
    t0 = time.perf_counter()
    code = cli.main(["verify", str(cfg)])
    wall = time.perf_counter() - t0
    s = TimeSeries.from_csv(d / "out" / "series_r5.csv")
    return code, s, wall


def test_c2_linear_rate_and_coefficient(linear_l0, criterion):
    code, s, wall = linear_l0
    prof = default_profile()
    assert linear_coefficient(0, 3.0) == -4.0
    pred = 0.1 * -4.0 * float(moment_A(prof))
    gam, amp = measure(s, 3.0)
    ok = rel(gam, 3.0) <= 0.02 and np.sign(amp) == np.sign(pred) and rel(amp, pred) <= 0.10
    criterion(2, ok, f"gamma {gam:.4f} (3 +- 2%), amplitude {amp:.5g} vs {pred:.5g} "
                     f"({rel(amp, pred):.1%}, limit 10%), verify exit {code}, {wall:.0f}s")
    assert ok


def test_c9_perturbative_residual(linear_l0, criterion):
    _, s1, _ = linear_l0
    prof = default_profile()
    w = FreeWave(prof, 0)
    s2, _ = evolve(preset("linear", l=0, alpha=3.0, lam=0.05), prof, 100.0)
    ts = (80.0, 100.0)
    phi1 = iterate_linear(preset("linear", l=0, alpha=3.0, lam=1.0), w, 1,
                          [(t, 5.0) for t in ts]).values
    ratios = []
    for t, p1 in zip(ts, phi1):
        r1 = abs(value_at(s1, t) - 0.1 * p1)
        r2 = abs(value_at(s2, t) - 0.05 * p1)
        ratios.append(r1 / r2)
    ok = all(abs(q - 4) <= 0.8 for q in ratios)
    criterion(9, ok, "residual ratio for lambda 0.1 -> 0.05: "
                     + ", ".join(f"t={t:g}: {q:.3f}" for t, q in zip(ts, ratios)) + " (4 +- 20%)")
    assert ok


# ---------------------------------------------------------------------------
# 3. Linear rate sweep
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("l, m, r_obs", [(0, 16, 5.0), (1, 16, 5.0), (2, 32, 2.0)])
def test_c3_linear_rate_sweep(l, m, r_obs, criterion):
    model = preset("linear", l=l, alpha=4.0, inner_form="smooth_blend")
    s, wall = evolve(model, Profile(0.0, 2.0, m, 1.0), 200.0, r_obs)
    target = 4.0 + 2 * l
    gam, _ = measure(s, target)
    ok = rel(gam, target) <= 0.02
    criterion(3, ok, f"(l={l}, alpha=4) gamma {gam:.4f} vs {target:g} ({rel(gam, target):.2%}, "
                     f"limit 2%), {wall:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 4. Linear anomalous l=1, alpha=3
# ---------------------------------------------------------------------------


def test_c4_anomalous_first_iterate(criterion):
    w = FreeWave(Profile(0.0, 2.0, 16, 1.0), 1)
    pts = [(t, 5.0) for t in (200.0, 400.0, 800.0)]
    kw = dict(quad_n=32, max_panel=0.5)
    anom = iterate_linear(preset("linear", l=1, alpha=3.0), w, 1, pts, **kw).values
    generic = iterate_linear(preset("linear", l=1, alpha=3.5), w, 1, pts, **kw).values
    ratios = [abs(a) * t**5 / (abs(g) * t**5.5) for (t, _), a, g in zip(pts, anom, generic)]
    ok = all(q < 1e-3 for q in ratios)
    criterion(4, ok, "first-order t^5 phi_1 relative to generic alpha=3.5: "
                     + ", ".join(f"{q:.1e}" for q in ratios) + " (limit 1e-3)")
    assert ok


def test_c4_anomalous_rate(criterion):
    model = preset("linear", l=1, alpha=3.0, lam=2.0, inner_form="smooth_blend")
    s, wall = evolve(model, Profile(0.0, 2.0, 16, 1.0), 200.0)
    assert predict(model, Profile(0.0, 2.0, 16, 1.0)).gamma == 6.0
    gam, _ = measure(s, 6.0)
    ok = rel(gam, 6.0) <= 0.03
    criterion(4, ok, f"evolver (lambda=2) gamma {gam:.4f} vs 6 ({rel(gam, 6.0):.2%}, limit 3%), "
                     f"{wall:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 5. Cubic power nonlinearity
# ---------------------------------------------------------------------------


def test_c5_cubic_tail(criterion):
    prof = default_profile()
    model = preset("power", l=0, p=3, eps=0.05)
    s, wall = evolve(model, prof, 200.0)
    assert nonlinear_coefficient(0, 3) == 8.0
    at = float(moment_Atilde(prof, 0, 3))
    pred = 0.05**3 * 8.0 * at
    alt = 0.05**3 * nonlinear_coefficient(0, 3, "recomputed") * at
    gam, amp = measure(s, 2.0)
    ok = rel(gam, 2.0) <= 0.02 and rel(amp, pred) <= 0.10
    criterion(5, ok, f"gamma {gam:.4f} (2 +- 2%), amplitude {amp:.4g} vs {pred:.4g} with C~=8 "
                     f"({rel(amp, pred):.1%}, limit 10%); vs {alt:.4g} with C~=2: "
                     f"{rel(amp, alt):.1%}, {wall:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 6. Quadratic anomalous
# ---------------------------------------------------------------------------


def test_c6_quadratic_anomalous(criterion):
    prof = Profile(0.0, 2.0, 16, 1.0)
    amps = {}
    gams = {}
    for eps in (0.05, 0.025):
        model = preset("quadratic_anomalous", l=1, eps=eps)
        s, _ = evolve(model, prof, 200.0, 2.0)
        gams[eps], amps[eps] = measure(s, 4.0)
    pred = predict(preset("quadratic_anomalous", l=1, eps=0.05), prof).coefficient
    ratio = amps[0.05] / amps[0.025]
    ok_rate = rel(gams[0.05], 4.0) <= 0.03
    ok_amp = np.sign(amps[0.05]) == np.sign(pred) and rel(amps[0.05], pred) <= 0.20
    ok_scale = abs(ratio - 8) <= 0.15 * 8
    ok = ok_rate and ok_amp and ok_scale
    criterion(6, ok, f"gamma {gams[0.05]:.4f} (4 +- 3%), amplitude {amps[0.05]:.4g} vs {pred:.4g} "
                     f"({rel(amps[0.05], pred):.1%}, limit 20%), eps-halving ratio {ratio:.3f} "
                     f"(8 +- 15%)")
    assert ok


# ---------------------------------------------------------------------------
# 7. Skyrme competition
# ---------------------------------------------------------------------------


def test_c7_skyrme_min_rule(criterion):
    prof = Profile(0.0, 2.0, 16, 1.0, m_right=24)
    model = preset("skyrme_pert", inner_form="smooth_blend")
    pred = predict(model, prof)
    assert pred.gamma == 5 and sorted(c.gamma for c in pred.candidates) == [5, 8.0]
    s, wall = evolve(model, prof, 100.0)
    gam, _ = measure(s, 5.0)
    ok = rel(gam, 5.0) <= 0.03
    criterion(7, ok, f"gamma {gam:.4f} vs 5 ({rel(gam, 5.0):.2%}, limit 3%), {wall:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 8. Yang-Mills
# ---------------------------------------------------------------------------


def test_c8_yang_mills(criterion):
    prof = default_profile()
    model = preset("yang_mills", eps=0.05)
    pred = predict(model, prof).coefficient
    s, wall = evolve(model, prof, 100.0)
    gam, amp = measure(s, 4.0)
    ok = rel(gam, 4.0) <= 0.03 and np.sign(amp) == np.sign(pred) and rel(amp, pred) <= 0.20
    criterion(8, ok, f"gamma {gam:.4f} (4 +- 3%), amplitude {amp:.4g} vs {pred:.4g} "
                     f"({rel(amp, pred):.1%}, limit 20%), {wall:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 10. Duhamel vs inhomogeneous evolution
# ---------------------------------------------------------------------------


def test_c10_duhamel_matches_inhomogeneous_evolution(criterion):
    rng = np.random.default_rng(2024)
    w = FreeWave(default_profile(), 0)
    model = preset("linear", l=0, alpha=3.0, lam=1.0)
    pot = model.potential
    pts = [(round(rng.uniform(3, 10) * 16) / 16, round(rng.uniform(0.5, 4) * 16) / 16)
           for _ in range(10)]
    radii = tuple(sorted({r for _, r in pts}))

    def source(t, r):
        return -pot(r) * w.value_at(t, r)

    series = {}
    for h in (1 / 16, 1 / 32):
        cfg = EvolveConfig(t_final=10.0, h=h, observation_radii=radii, sample_interval=1 / 16,
                           precision="standard")
        res = run(preset("free"), None, cfg, source=source)
        series[h] = {s.r_obs: s for s in res.series}
    F = linear_source(model, w)
    worst = 0.0
    for t, r in pts:
        d = duhamel_eval(F, t, r, 0)
        coarse, fine = (value_at(series[h][r], t) for h in (1 / 16, 1 / 32))
        worst = max(worst, abs(d - fine) / abs(coarse - fine))
    ok = worst <= 1.0
    criterion(10, ok, f"max |duhamel - evolved(h/2)| / |evolved(h) - evolved(h/2)| = {worst:.3f} "
                      "over 10 random points (limit 1)")
    assert ok


# ---------------------------------------------------------------------------
# 11. Operator identity
# ---------------------------------------------------------------------------


def test_c11_operator_identity(criterion):
    w = FreeWave(default_profile(), 1)
    default = operator_identity_check(w)
    d = [operator_identity_check(w, h=h) for h in (1 / 16, 1 / 32, 1 / 64)]
    orders = [math.log2(d[i] / d[i + 1]) for i in range(2)]
    ok = default <= 1e-6 and abs(orders[-1] - 6) <= 0.5
    criterion(11, ok, f"discrepancy {default:.2e} at default resolution (limit 1e-6), "
                      f"observed orders {orders[0]:.2f}, {orders[1]:.2f} (stencil 6)")
    assert ok


# ---------------------------------------------------------------------------
# 12. Property suites
# ---------------------------------------------------------------------------


def test_c12_property_suites(criterion):
    files = sorted(str(p) for p in TESTS.glob("test_*.py") if p.name != "test_acceptance.py")
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files],
                          capture_output=True, text=True, cwd=TESTS.parent)
    wall = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and wall <= 300
    criterion(12, ok, f"{tail} ({wall:.0f}s, limit 300s)")
    assert ok, proc.stdout[-3000:]
