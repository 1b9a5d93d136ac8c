"""Generator functions a(u) for spherically symmetric free waves.

The only profile kind is the polynomial bump

    a(u) = amplitude * (u - u0)^m * (u1 - u)^n   on [u0, u1], zero elsewhere,

with n = m unless ``m_right`` is given, which is C^(min(m, n)-1).  Symmetric
bumps make odd moments such as the integral of (a')^3 vanish; an asymmetric
bump avoids that degeneracy.  All derivatives are evaluated from the exact Leibniz
expansion, and every moment integral used by the tail formulas is a
polynomial integral, so Gauss-Legendre with enough nodes is exact up to
roundoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .numerics import DD, Precision, gauss_legendre, to_precision, where

__all__ = ["Profile", "default_profile", "eval_derivative", "moment_A", "moment_Atilde",
           "moment_c_anom", "moment_ym", "beta_moment_A"]

DEFAULT_SMOOTHNESS = 8


@dataclass(frozen=True)
class Profile:
    u0: float = 0.0
    u1: float = 2.0
    m: int = DEFAULT_SMOOTHNESS
    amplitude: float = 1.0
    kind: str = "polynomial_bump"
    m_right: int | None = None

    def __post_init__(self):
        if self.kind != "polynomial_bump":
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not self.u0 < self.u1:
            raise ValueError("support must satisfy u0 < u1")
        if self.m < 2 or (self.m_right is not None and self.m_right < 2):
            raise ValueError("smoothness m must be >= 2")

    @property
    def n(self) -> int:
        """Exponent of (u1 - u)."""
        return self.m if self.m_right is None else self.m_right

    @property
    def smoothness(self) -> int:
        """a is C^(smoothness - 1)."""
        return min(self.m, self.n)

    @property
    def degree(self) -> int:
        return self.m + self.n

    @property
    def width(self) -> float:
        return self.u1 - self.u0

    def require_harmonic(self, l: int) -> None:
        """Raise unless the profile is smooth enough for harmonic index ``l``."""
        if self.smoothness < l + 3:
            raise ValueError(f"profile smoothness m={self.smoothness} too low for l={l} (need m >= l+3)")

    def __call__(self, u):
        return eval_derivative(self, 0, u)

    def to_dict(self) -> dict:
        out = {"u0": self.u0, "u1": self.u1, "m": self.m,
               "amplitude": self.amplitude, "kind": self.kind}
        if self.m_right is not None:
            out["m_right"] = self.m_right
        return out


def default_profile(m: int = DEFAULT_SMOOTHNESS) -> Profile:
    """Bump on [0, 2] normalized to max a = 1 (the maximum sits at u=1)."""
    return Profile(0.0, 2.0, m, 1.0)


def _powers(x, n: int) -> list:
    out = [x * 0 + 1]
    for _ in range(n):
        out.append(out[-1] * x)
    return out


def _poly_derivative(p: Profile, k: int, u, *, clip: bool):
    """k-th derivative of the bump polynomial; optionally zeroed off support."""
    m, n = p.m, p.n
    xp = _powers(u - p.u0, m)
    yp = _powers(p.u1 - u, n)
    total = u * 0
    for j in range(k + 1):
        i = k - j  # derivatives landing on (u1 - u)^n
        if j > m or i > n:
            continue
        c = math.comb(k, j) * math.perm(m, j) * math.perm(n, i) * (-1) ** i
        if not isinstance(u, DD):
            c = float(c)
        total = total + c * (xp[m - j] * yp[n - i])
    total = total * p.amplitude
    if clip:
        inside = (u >= p.u0) & (u <= p.u1)
        total = where(inside, total, 0.0)
    return total


def eval_derivative(p: Profile, k: int, u):
    """Exact k-th derivative a^(k)(u), zero outside [u0, u1].

    Only k <= m-1 is allowed: a^(m) jumps at the support edges.
    """
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    if k >= p.smoothness:
        raise ValueError(f"a^({k}) is discontinuous for m={p.smoothness}")
    return _poly_derivative(p, k, u, clip=True)


def polynomial_derivative(p: Profile, k: int, u):
    """k-th derivative of the unclipped polynomial (any k, defined for all u)."""
    return _poly_derivative(p, k, u, clip=False)


def _support_quadrature(p: Profile, degree: int, precision: Precision):
    n = degree // 2 + 1
    rule = gauss_legendre(n, precision)
    u0 = to_precision(p.u0, precision)
    u1 = to_precision(p.u1, precision)
    return rule.mapped(u0, u1)


def _total(values):
    if isinstance(values, DD):
        return values.sum()
    return float(np.sum(values))


def moment_A(p: Profile, precision: Precision | str = Precision.STANDARD):
    """A = integral of a(u) du."""
    u, w = _support_quadrature(p, p.degree, Precision(precision))
    return _total(eval_derivative(p, 0, u) * w)


def beta_moment_A(p: Profile) -> Fraction:
    """Closed form amplitude * width^(m+n+1) * B(m+1, n+1) as an exact fraction."""
    m, n = p.m, p.n
    beta = Fraction(math.factorial(m) * math.factorial(n), math.factorial(m + n + 1))
    return Fraction(p.amplitude) * Fraction(p.width) ** (m + n + 1) * beta


def moment_Atilde(p: Profile, l: int, pw: int, precision: Precision | str = Precision.STANDARD):
    """A~ = integral of [a^(l)(u)]^pw du."""
    if pw < 2:
        raise ValueError("power must be >= 2")
    if l >= p.smoothness:
        raise ValueError(f"a^({l}) is discontinuous for m={p.smoothness}")
    u, w = _support_quadrature(p, pw * (p.degree - l), Precision(precision))
    return _total(eval_derivative(p, l, u) ** pw * w)


def moment_c_anom(p: Profile, l: int, precision: Precision | str = Precision.STANDARD):
    """Coefficient of the quadratic anomalous tail.

    (-1)^l 2^(3l) / (2l (2l+1)) * integral of a^(l-1) [a^(l)]^2.
    """
    if l < 1:
        raise ValueError("the quadratic anomalous tail needs l >= 1")
    if l >= p.smoothness:
        raise ValueError(f"a^({l}) is discontinuous for m={p.smoothness}")
    precision = Precision(precision)
    u, w = _support_quadrature(p, 3 * p.degree - 3 * l + 1, precision)
    integral = _total(eval_derivative(p, l - 1, u) * eval_derivative(p, l, u) ** 2 * w)
    prefactor = Fraction((-1) ** l * 2 ** (3 * l), 2 * l * (2 * l + 1))
    return to_precision(prefactor, precision) * integral


def moment_ym(p: Profile, precision: Precision | str = Precision.STANDARD):
    """Yang-Mills tail coefficient -8 * integral of a (a')^2."""
    u, w = _support_quadrature(p, 3 * p.degree - 2, Precision(precision))
    return -8 * _total(eval_derivative(p, 0, u) * eval_derivative(p, 1, u) ** 2 * w)
