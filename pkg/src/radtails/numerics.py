"""Precision-agnostic arithmetic and special functions.

Two precision modes are supported:

* ``standard`` -- plain IEEE double (numpy ``float64``), ~16 digits.
* ``extended`` -- double-double (:class:`DD`), an unevaluated sum ``hi + lo``
  of two doubles giving ~32 significant digits.

Every routine here is written against ordinary Python operators, so it accepts
floats, numpy arrays or :class:`DD` values and returns a result in the same
precision as its inputs.  There is no global mode switch.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable

import mpmath
import numpy as np

__all__ = [
    "Precision",
    "DD",
    "dd",
    "precision_of",
    "to_precision",
    "unit_roundoff",
    "where",
    "to_float",
    "legendre_p",
    "falling_factorial",
    "rising_factorial",
    "double_factorial",
    "QuadratureRule",
    "gauss_legendre",
    "integrate",
]


class Precision(str, enum.Enum):
    STANDARD = "standard"
    EXTENDED = "extended"


_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    t, f = _two_sum(al, bl)
    e = e + t
    s, e = _quick_two_sum(s, e)
    e = e + f
    return _quick_two_sum(s, e)


def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e = e + (ah * bl + al * bh)
    return _quick_two_sum(p, e)


def _dd_div(ah, al, bh, bl):
    q1 = ah / bh
    ph, pl = _dd_mul(bh, bl, q1, 0.0 * q1)
    rh, rl = _dd_add(ah, al, -ph, -pl)
    q2 = rh / bh
    ph, pl = _dd_mul(bh, bl, q2, 0.0 * q2)
    rh, rl = _dd_add(rh, rl, -ph, -pl)
    q3 = rh / bh
    q1, q2 = _quick_two_sum(q1, q2)
    return _dd_add(q1, q2, q3, 0.0 * q3)


class DD:
    """Double-double number or array.

    ``DD`` wraps two float64 numpy arrays of identical shape.  Scalars are
    0-d arrays.  Instances are treated as immutable.
    """

    __slots__ = ("hi", "lo")
    __array_priority__ = 1000  # make ``ndarray + DD`` dispatch to DD

    def __init__(self, hi, lo=None):
        hi = np.asarray(hi, dtype=np.float64)
        lo = np.zeros_like(hi) if lo is None else np.asarray(lo, dtype=np.float64)
        # renormalize so that |lo| <= ulp(hi)/2
        self.hi, self.lo = _quick_two_sum(hi, lo)

    # -- construction ----------------------------------------------------
    @classmethod
    def _raw(cls, hi, lo) -> "DD":
        obj = cls.__new__(cls)
        obj.hi = hi
        obj.lo = lo
        return obj

    @classmethod
    def from_mpf(cls, x) -> "DD":
        if isinstance(x, (list, tuple, np.ndarray)):
            arr = np.asarray(x, dtype=object)
            hi = np.empty(arr.shape)
            lo = np.empty(arr.shape)
            for idx, v in np.ndenumerate(arr):
                hi[idx], lo[idx] = _mpf_split(v)
            return cls(hi, lo)
        return cls(*_mpf_split(x))

    # -- numpy-like container behaviour ------------------------------------
    @property
    def shape(self):
        return self.hi.shape

    @property
    def ndim(self):
        return self.hi.ndim

    @property
    def size(self):
        return self.hi.size

    def __len__(self):
        return len(self.hi)

    def __getitem__(self, idx) -> "DD":
        return DD._raw(self.hi[idx], self.lo[idx])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def copy(self) -> "DD":
        return DD._raw(self.hi.copy(), self.lo.copy())

    def reshape(self, *shape) -> "DD":
        return DD._raw(self.hi.reshape(*shape), self.lo.reshape(*shape))

    def sum(self) -> "DD":
        """Sum of all elements by deterministic pairwise double-double reduction."""
        h = self.hi.ravel()
        l = self.lo.ravel()
        if h.size == 0:
            return DD(0.0)
        while h.size > 1:
            if h.size % 2:
                h = np.append(h, 0.0)
                l = np.append(l, 0.0)
            h, l = _dd_add(h[0::2], l[0::2], h[1::2], l[1::2])
        return DD._raw(h[0].copy(), l[0].copy())

    def __float__(self):
        return float(self.hi + self.lo)

    def to_float(self) -> np.ndarray:
        return self.hi + self.lo

    def to_mpf(self):
        if self.ndim == 0:
            with mpmath.workprec(128):  # hi + lo is exact at this precision
                return mpmath.mpf(float(self.hi)) + mpmath.mpf(float(self.lo))
        return [DD._raw(h, l).to_mpf() for h, l in zip(self.hi, self.lo)]

    def __repr__(self):
        if self.ndim == 0:
            with mpmath.workdps(34):
                return f"DD({mpmath.nstr(self.to_mpf(), 32)})"
        return f"DD(shape={self.shape}, approx={self.to_float()!r})"

    # -- arithmetic --------------------------------------------------------
    @staticmethod
    def _coerce(x):
        if isinstance(x, DD):
            return x.hi, x.lo
        if isinstance(x, (int, np.integer)) and abs(int(x)) > 2**53:
            h, l = _mpf_split(mpmath.mpf(int(x)))
            return np.float64(h), np.float64(l)
        if isinstance(x, Fraction):
            with mpmath.workprec(160):
                h, l = _mpf_split(mpmath.mpf(x.numerator) / x.denominator)
            return np.float64(h), np.float64(l)
        a = np.asarray(x, dtype=np.float64)
        return a, np.zeros_like(a)

    def __add__(self, other):
        bh, bl = self._coerce(other)
        return DD._raw(*_dd_add(self.hi, self.lo, bh, bl))

    __radd__ = __add__

    def __neg__(self):
        return DD._raw(-self.hi, -self.lo)

    def __pos__(self):
        return self

    def __sub__(self, other):
        bh, bl = self._coerce(other)
        return DD._raw(*_dd_add(self.hi, self.lo, -bh, -bl))

    def __rsub__(self, other):
        bh, bl = self._coerce(other)
        return DD._raw(*_dd_add(bh, bl, -self.hi, -self.lo))

    def __mul__(self, other):
        bh, bl = self._coerce(other)
        return DD._raw(*_dd_mul(self.hi, self.lo, bh, bl))

    __rmul__ = __mul__

    def __truediv__(self, other):
        bh, bl = self._coerce(other)
        return DD._raw(*_dd_div(self.hi, self.lo, bh, bl))

    def __rtruediv__(self, other):
        bh, bl = self._coerce(other)
        return DD._raw(*_dd_div(bh, bl, self.hi, self.lo))

    def __pow__(self, n):
        if isinstance(n, (int, np.integer)):
            n = int(n)
            if n < 0:
                return 1 / (self ** (-n))
            result = DD._raw(np.ones_like(self.hi), np.zeros_like(self.lo))
            base = self
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        n = float(n)
        if n == int(n):
            return self ** int(n)
        if 2 * n == int(2 * n):
            return self.sqrt() ** int(2 * n)
        return _mp_apply(self, lambda v: v**n)

    def __abs__(self):
        sign = np.where(self.hi < 0, -1.0, 1.0)
        return DD._raw(sign * self.hi, sign * self.lo)

    def sqrt(self) -> "DD":
        x = np.sqrt(self.hi)
        safe = np.where(x > 0, x, 1.0)
        # one Newton step in double-double: x + (a - x^2)/(2x)
        sh, sl = _two_prod(x, x)
        rh, rl = _dd_add(self.hi, self.lo, -sh, -sl)
        corr = np.where(x > 0, rh / (2.0 * safe), 0.0)
        return DD._raw(*_quick_two_sum(x, corr))

    # -- comparisons (elementwise, return bool arrays) ------------------------
    def _cmp(self, other):
        bh, bl = self._coerce(other)
        d = _dd_add(self.hi, self.lo, -bh, -bl)
        return d[0]

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __eq__(self, other):  # type: ignore[override]
        return self._cmp(other) == 0

    def __ne__(self, other):  # type: ignore[override]
        return self._cmp(other) != 0

    __hash__ = None  # type: ignore[assignment]


def _mpf_split(x) -> tuple[float, float]:
    with mpmath.workprec(200):
        x = mpmath.mpf(x)
        hi = float(x)
        lo = float(x - hi)
    return hi, lo


def _mp_apply(x: DD, fn: Callable) -> DD:
    with mpmath.workprec(128):
        vals = np.empty(x.shape, dtype=object)
        for idx in np.ndindex(x.shape):
            vals[idx] = fn(mpmath.mpf(float(x.hi[idx])) + mpmath.mpf(float(x.lo[idx])))
        return DD.from_mpf(vals)


def dd(x: Any) -> DD:
    """Convert ``x`` (float, int, str, Fraction, mpf, array or DD) to DD."""
    if isinstance(x, DD):
        return x
    if isinstance(x, str):
        return DD(*_mpf_split(x))
    if isinstance(x, (mpmath.mpf, Fraction)) or (
        isinstance(x, (int, np.integer)) and abs(int(x)) > 2**53
    ):
        if isinstance(x, Fraction):
            with mpmath.workprec(200):
                x = mpmath.mpf(x.numerator) / x.denominator
        return DD(*_mpf_split(x))
    return DD(np.asarray(x, dtype=np.float64))


def precision_of(*xs) -> Precision:
    """EXTENDED if any argument is DD, else STANDARD."""
    return Precision.EXTENDED if any(isinstance(x, DD) for x in xs) else Precision.STANDARD


def to_precision(x, mode: Precision | str):
    mode = Precision(mode)
    if mode is Precision.EXTENDED:
        return dd(x)
    if isinstance(x, DD):
        return x.to_float()
    if isinstance(x, Fraction):
        return x.numerator / x.denominator
    return np.asarray(x, dtype=np.float64) if np.ndim(x) else float(x)


def to_float(x):
    if isinstance(x, DD):
        return x.to_float() if x.ndim else float(x)
    return x


def unit_roundoff(mode: Precision | str) -> float:
    return 2.0**-53 if Precision(mode) is Precision.STANDARD else 2.0**-104


def where(cond, a, b):
    """Elementwise select that preserves double-double values."""
    if isinstance(a, DD) or isinstance(b, DD):
        ah, al = DD._coerce(a)
        bh, bl = DD._coerce(b)
        return DD._raw(np.where(cond, ah, bh), np.where(cond, al, bl))
    return np.where(cond, a, b)


def zeros_like(x):
    if isinstance(x, DD):
        return DD._raw(np.zeros_like(x.hi), np.zeros_like(x.lo))
    return np.zeros_like(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------


def legendre_p(l: int, mu):
    """Legendre polynomial P_l(mu) by the three-term recurrence."""
    if l < 0:
        raise ValueError("degree must be nonnegative")
    p_prev = mu * 0 + 1
    if l == 0:
        return p_prev
    p = mu
    for k in range(1, l):
        p_prev, p = p, ((2 * k + 1) * mu * p - k * p_prev) / (k + 1)
    return p


def falling_factorial(x, k: int):
    """x (x-1) ... (x-k+1); empty product is 1."""
    out = x * 0 + 1
    for j in range(k):
        out = out * (x - j)
    return out


def rising_factorial(x, k: int):
    """x (x+1) ... (x+k-1); empty product is 1."""
    out = x * 0 + 1
    for j in range(k):
        out = out * (x + j)
    return out


def double_factorial(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or n < 1 or n % 2 == 0:
        raise ValueError(f"double_factorial needs an odd positive integer, got {n!r}")
    return math.prod(range(int(n), 0, -2))


# ---------------------------------------------------------------------------
# Gauss-Legendre quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1]."""

    nodes: Any
    weights: Any
    order: int

    @property
    def precision(self) -> Precision:
        return precision_of(self.nodes)

    def mapped(self, a, b):
        """Nodes and weights transplanted to [a, b] (a, b scalars or arrays)."""
        half = (b - a) * 0.5
        mid = (b + a) * 0.5
        x = self.nodes
        w = self.weights
        if np.ndim(half) or (isinstance(half, DD) and half.ndim):
            # broadcast: rule axis last
            x = _expand_last(x)
            w = _expand_last(w)
            half = _expand_first(half)
            mid = _expand_first(mid)
        return mid + half * x, half * w


def _expand_last(x):
    if isinstance(x, DD):
        return DD._raw(x.hi[None, :], x.lo[None, :])
    return x[None, :]


def _expand_first(x):
    if isinstance(x, DD):
        return DD._raw(x.hi[..., None], x.lo[..., None])
    return np.asarray(x)[..., None]


def _legendre_and_derivative(n: int, x):
    p0 = x * 0 + 1
    p1 = x
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    # P_n' = n (x P_n - P_{n-1}) / (x^2 - 1)
    dp = n * (x * p1 - p0) / (x * x - 1)
    return p1, dp


@functools.lru_cache(maxsize=None)
def gauss_legendre(n: int, precision: Precision | str = Precision.STANDARD) -> QuadratureRule:
    """n-point Gauss-Legendre rule, nodes found by Newton on P_n."""
    if n < 1:
        raise ValueError("need at least one node")
    precision = Precision(precision)
    k = np.arange(1, n + 1)
    # Tricomi initial guess, ascending order
    x = -np.cos(np.pi * (k - 0.25) / (n + 0.5)) * (1 - (n - 1) / (8.0 * n**3))
    for _ in range(100):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    if precision is Precision.EXTENDED:
        x = dd(x)
        for _ in range(3):
            p, dp = _legendre_and_derivative(n, x)
            x = x - p / dp
    _, dp = _legendre_and_derivative(n, x)
    w = 2 / ((1 - x * x) * dp * dp)
    if n % 2 == 1:  # the middle node is exactly zero
        mid = n // 2
        if isinstance(x, DD):
            x.hi[mid] = 0.0
            x.lo[mid] = 0.0
        else:
            x[mid] = 0.0
    for arr in (x.hi, x.lo, w.hi, w.lo) if isinstance(x, DD) else (x, w):
        arr.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w, order=n)


def integrate(f: Callable, a, b, n: int = 32, precision: Precision | str | None = None):
    """Integrate ``f`` over [a, b] with an n-point Gauss-Legendre rule.

    ``f`` receives the array of mapped nodes and must be vectorized.
    """
    if precision is None:
        precision = precision_of(a, b)
    rule = gauss_legendre(n, precision)
    x, w = rule.mapped(a, b)
    vals = f(x) * w
    if isinstance(vals, DD):
        return vals.sum()
    return float(np.sum(vals))
