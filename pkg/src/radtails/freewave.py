"""Exact spherically symmetric solutions of the free wave equation.

In d = 2l+3 space dimensions every radial solution with compactly supported
data is generated by one function a(u):

    phi(t, r) = r^-(2l+1) * sum_k c_k r^k [a^(k)(t-r) - (-1)^k a^(k)(t+r)],
    c_k = 2^(k-l) (2l-k)! / (k! (l-k)!).

The 1/r^(2l+1) singularity is removable.  Near the origin the bracketed sum is
re-expanded exactly in powers of r (the profile is a polynomial on its
support), which removes the cancellation instead of extrapolating it away.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .numerics import DD, where
from .profiles import Profile, eval_derivative, polynomial_derivative

__all__ = ["FreeWave", "bessel_coefficients", "origin_series_coefficients"]


def bessel_coefficients(l: int) -> list[int]:
    """c_k = 2^(k-l) (2l-k)! / (k! (l-k)!), k = 0..l (all integers)."""
    out = []
    for k in range(l + 1):
        c = Fraction(2) ** (k - l) * Fraction(math.factorial(2 * l - k),
                                              math.factorial(k) * math.factorial(l - k))
        assert c.denominator == 1
        out.append(int(c))
    return out


def origin_series_coefficients(l: int, n_max: int) -> list[Fraction]:
    """b_n with phi = sum_n b_n a^(n)(t) r^(n-2l-1) inside one polynomial piece.

    b_n vanishes for n < 2l+1, which is exactly the regularity of phi at r=0.
    """
    c = bessel_coefficients(l)
    out = []
    for n in range(n_max + 1):
        b = Fraction(0)
        for k in range(min(l, n) + 1):
            b += Fraction(c[k] * ((-1) ** (n - k) - (-1) ** k), math.factorial(n - k))
        out.append(b)
    return out


def _scatter(full, mask, part):
    """Return ``full`` with ``full[mask]`` replaced by ``part``."""
    if isinstance(full, DD) or isinstance(part, DD):
        if not isinstance(full, DD):
            full = DD(full)
        if not isinstance(part, DD):
            part = DD(part)
        hi = full.hi.copy()
        lo = full.lo.copy()
        hi[mask] = part.hi
        lo[mask] = part.lo
        return DD._raw(hi, lo)
    out = np.array(full, dtype=np.float64, copy=True)
    out[mask] = part
    return out


def _take(x, mask):
    if isinstance(x, DD):
        return x[mask]
    return np.asarray(x)[mask]


def _broadcast(t, r):
    if isinstance(t, DD) or isinstance(r, DD):
        t = t if isinstance(t, DD) else DD(t)
        r = r if isinstance(r, DD) else DD(r)
        shape = np.broadcast_shapes(t.shape, r.shape)
        bt = DD._raw(np.broadcast_to(t.hi, shape).copy(), np.broadcast_to(t.lo, shape).copy())
        br = DD._raw(np.broadcast_to(r.hi, shape).copy(), np.broadcast_to(r.lo, shape).copy())
        return bt, br
    return np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(r, dtype=np.float64))


def _approx(x):
    return x.to_float() if isinstance(x, DD) else np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class FreeWave:
    """Free radial wave in d = 2l+3 dimensions generated by ``profile``."""

    profile: Profile
    l: int = 0
    series_radius: float | None = None

    def __post_init__(self):
        if self.l < 0:
            raise ValueError("harmonic index l must be nonnegative")
        self.profile.require_harmonic(self.l)

    @property
    def dimension(self) -> int:
        return 2 * self.l + 3

    @cached_property
    def _coeffs(self) -> list[int]:
        return bessel_coefficients(self.l)

    @cached_property
    def _series(self) -> list[Fraction]:
        return origin_series_coefficients(self.l, self.profile.degree + 1)

    @property
    def _r_series(self) -> float:
        if self.series_radius is not None:
            return self.series_radius
        return 0.1 * self.profile.width

    # -- evaluation --------------------------------------------------------
    def _direct(self, t, r, shift: int):
        """Closed-form sum, valid for r > 0 (shift=1 gives d/dt)."""
        p = self.profile
        total = r * 0
        rk = r * 0 + 1
        for k, c in enumerate(self._coeffs):
            km = eval_derivative(p, k + shift, t - r)
            kp = eval_derivative(p, k + shift, t + r)
            total = total + c * rk * (km - (-1) ** k * kp)
            rk = rk * r
        return total / r ** (2 * self.l + 1)

    def _near_origin(self, t, r, shift: int):
        """Exact re-expansion in r for points with r below the series radius."""
        p = self.profile
        l = self.l
        total = t * 0
        rpow = r * 0 + 1
        for n in range(2 * l + 1, p.degree + 1 - shift):
            b = self._series[n]
            if b:
                bn = b if isinstance(t, DD) else float(b)
                total = total + bn * polynomial_derivative(p, n + shift, t) * rpow
            rpow = rpow * r
        # remove what the polynomial continuation contributes off the support
        tm = t - r
        tp = t + r
        out_m = (_approx(tm) < p.u0) | (_approx(tm) > p.u1)
        out_p = (_approx(tp) < p.u0) | (_approx(tp) > p.u1)
        if np.any(out_m | out_p):
            safe_r = where(_approx(r) > 0, r, 1.0)
            corr = t * 0
            rk = r * 0 + 1
            for k, c in enumerate(self._coeffs):
                pm = where(out_m, polynomial_derivative(p, k + shift, tm), 0.0)
                pp = where(out_p, polynomial_derivative(p, k + shift, tp), 0.0)
                corr = corr + c * rk * (pm - (-1) ** k * pp)
                rk = rk * safe_r
            corr = corr / safe_r ** (2 * l + 1)
            total = total - where(out_m | out_p, corr, 0.0)
        both_below = (_approx(tp) < p.u0)
        both_above = (_approx(tm) > p.u1)
        return where(both_below | both_above, 0.0, total)

    def _evaluate(self, t, r, shift: int):
        t, r = _broadcast(t, r)
        ra = _approx(r)
        if np.any(ra < 0):
            raise ValueError("radius must be nonnegative")
        near = ra < self._r_series
        safe_r = where(near, self._r_series, r)
        result = self._direct(t, safe_r, shift)
        if np.any(near):
            result = _scatter(result, near, self._near_origin(_take(t, near), _take(r, near), shift))
        if isinstance(result, DD):
            return result if result.ndim else DD._raw(result.hi[()], result.lo[()])
        return result if result.ndim else float(result)

    def eval(self, t, r):
        """phi(t, r); ``r`` must be positive (vectorized over t and r)."""
        if np.any(_approx(r) <= 0):
            raise ValueError("eval needs r > 0; use value_at for the origin")
        return self._evaluate(t, r, 0)

    def value_at(self, t, r):
        """phi(t, r) for r >= 0, including the regular value at the origin."""
        return self._evaluate(t, r, 0)

    def time_derivative(self, t, r):
        """d phi / dt from the a^(k+1) closed forms (no finite differencing)."""
        if self.l + 1 >= self.profile.smoothness:
            raise ValueError("profile not smooth enough for the time derivative")
        return self._evaluate(t, r, 1)

    def initial_data(self, grid):
        """(f, g) = (phi(0, r), d_t phi(0, r)) on grid radii (r=0 allowed)."""
        grid_r = grid
        t0 = grid_r * 0
        return self._evaluate(t0, grid_r, 0), self._evaluate(t0, grid_r, 1)

    def huygens_check(self, r_obs, t_after):
        """|phi(t_after, r_obs)|, exactly zero once the pulse has passed."""
        if not float(t_after) - float(r_obs) > self.profile.u1:
            raise ValueError("t_after - r_obs must exceed u1 (point still inside the passage window)")
        return abs(self.eval(t_after, r_obs))

    def outgoing_only(self, t, r):
        """Contribution of the a(t-r) terms alone."""
        return self._partial(t, r, sign=-1)

    def ingoing_only(self, t, r):
        """Contribution of the a(t+r) terms alone."""
        return self._partial(t, r, sign=+1)

    def _partial(self, t, r, sign: int):
        p = self.profile
        total = r * 0
        rk = r * 0 + 1
        for k, c in enumerate(self._coeffs):
            if sign < 0:
                term = eval_derivative(p, k, t - r)
            else:
                term = -((-1) ** k) * eval_derivative(p, k, t + r)
            total = total + c * rk * term
            rk = rk * r
        return total / r ** (2 * self.l + 1)
