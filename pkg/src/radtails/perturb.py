"""Perturbative iterates from the Duhamel formula in null coordinates.

For  box(phi) = F  with zero data in d = 2l+3 dimensions,

    phi(t, r) = 1 / (2^(l+3) r^(l+1)) * int_{|t-r|}^{t+r} dv int_{-v}^{t-r} du
                F(u, v) (v-u)^(l+1) P_l(mu),
    mu = (r^2 + (v-t)(t-u)) / (r (v-u)),

with u = tau - rho, v = tau + rho.  The kernel (v-u)^(l+1) P_l(mu) is a
polynomial in (u, v) and is evaluated without the division by (v-u).

The double integral is done by nested Gauss-Legendre on panels.  Panels are
cut wherever the source is only piecewise smooth (lines u = const, v = const
and rho = const declared by the :class:`SourceField`) and wherever those lines
cross the integration boundaries, so each panel sees a smooth integrand.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .freewave import FreeWave
from .models import ModelSpec
from .numerics import DD, Precision, dd, gauss_legendre, unit_roundoff

logger = logging.getLogger(__name__)

__all__ = ["SourceField", "IterateTable", "QuadratureNonConvergence", "duhamel_eval",
           "duhamel_kernel", "linear_source", "nonlinear_source", "table_source",
           "iterate_linear", "iterate_nonlinear", "build_table", "past_lattice", "DEFAULT_TOL"]

DEFAULT_TOL = {Precision.STANDARD: 1e-8, Precision.EXTENDED: 1e-20}

Box = tuple[float, float, float, float]  # (u_lo, u_hi, v_lo, v_hi)


class QuadratureNonConvergence(RuntimeError):
    """Doubling the number of nodes changed the Duhamel integral too much."""

    def __init__(self, t, r, change, allowed):
        super().__init__(f"Duhamel quadrature not converged at (t={t:.6g}, r={r:.6g}): "
                         f"change {change:.3e} > allowed {allowed:.3e}")
        self.t, self.r, self.change, self.allowed = t, r, change, allowed


@dataclass(frozen=True)
class SourceField:
    """Right-hand side F(u, v) of box(phi) = F.

    ``evaluator`` is vectorized over arrays (float or DD) of u and v.  F must
    vanish outside the union of ``boxes`` (None means no restriction).  The
    ``*_breaks`` list lines across which F is not smooth.
    """

    evaluator: Callable
    boxes: tuple[Box, ...] | None = None
    u_breaks: tuple[float, ...] = ()
    v_breaks: tuple[float, ...] = ()
    rho_breaks: tuple[float, ...] = ()
    name: str = "source"

    def __call__(self, u, v):
        return self.evaluator(u, v)

    def scaled(self, c: float) -> "SourceField":
        ev = self.evaluator
        return SourceField(lambda u, v: c * ev(u, v), self.boxes, self.u_breaks, self.v_breaks,
                           self.rho_breaks, f"{c:g}*{self.name}")


# ---------------------------------------------------------------------------
# array helpers that work for float and DD
# ---------------------------------------------------------------------------


def _bflat(x, shape):
    if isinstance(x, DD):
        return DD._raw(np.broadcast_to(x.hi, shape).ravel(), np.broadcast_to(x.lo, shape).ravel())
    return np.broadcast_to(np.asarray(x, dtype=np.float64), shape).ravel()


def _concat(parts):
    if not parts:
        return np.zeros(0)
    if isinstance(parts[0], DD):
        return DD._raw(np.concatenate([p.hi for p in parts]), np.concatenate([p.lo for p in parts]))
    return np.concatenate(parts)


def _col(x):
    if isinstance(x, DD):
        return DD._raw(x.hi[:, None], x.lo[:, None])
    return x[:, None]


def _fl(x):
    return x.to_float() if isinstance(x, DD) else np.asarray(x, dtype=np.float64)


def duhamel_kernel(u, v, t, r, l: int):
    """(v-u)^(l+1) P_l(mu) as a polynomial in u and v.

    Uses the homogeneous recurrence for Q_n = Y^n P_n(X/Y) with Y = v-u and
    X = mu Y = (r^2 + (v-t)(t-u)) / r.
    """
    y = v - u
    x = (r * r + (v - t) * (t - u)) / r
    q_prev = x * 0 + 1
    q = x
    if l == 0:
        q = q_prev
    for n in range(1, l):
        q_prev, q = q, ((2 * n + 1) * x * q - n * (y * y) * q_prev) / (n + 1)
    return y * q


# ---------------------------------------------------------------------------
# integration geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Line:
    """u = cv * v + c0 (a boundary, break or box edge in the (u, v) plane)."""

    cv: int
    c0: float

    def at(self, v):
        return self.cv * v + self.c0


def _nodes(F: SourceField, t: float, r: float, n: int, precision: Precision, max_panel: float):
    """Flattened quadrature nodes (u, v, w) covering the Duhamel triangle."""
    ext = precision is Precision.EXTENDED
    conv = dd if ext else float
    rule = gauss_legendre(n, precision)
    tm, tp = t - r, t + r
    va, vb = abs(tm), tp
    lower, upper = _Line(-1, 0.0), _Line(0, tm)
    lines = [lower, upper]
    lines += [_Line(0, b) for b in F.u_breaks]
    lines += [_Line(1, -2.0 * rb) for rb in F.rho_breaks]
    if F.boxes:
        for (ul, uh, _, _) in F.boxes:
            lines += [_Line(0, b) for b in (ul, uh) if math.isfinite(b)]
    v_cuts = {va, vb}
    v_cuts.update(F.v_breaks)
    if F.boxes:
        for (_, _, vl, vh) in F.boxes:
            v_cuts.update(b for b in (vl, vh) if math.isfinite(b))
    for a, b in itertools.combinations(lines, 2):
        if a.cv != b.cv:
            v_cuts.add((b.c0 - a.c0) / (a.cv - b.cv))
    cuts = sorted(c for c in v_cuts if va <= c <= vb)
    v_edges = [cuts[0]]
    for c in cuts[1:]:
        if c - v_edges[-1] > 1e-13 * max(1.0, abs(c)):
            v_edges.append(c)
    # exact endpoints in the working precision
    tm_x = conv(t) - conv(r)
    tp_x = conv(t) + conv(r)

    us, vs, ws = [], [], []
    for v0, v1 in zip(v_edges[:-1], v_edges[1:]):
        n_split = max(1, math.ceil((v1 - v0) / max_panel))
        vm = 0.5 * (v0 + v1)
        # active u segments at the panel midpoint
        pts = sorted({(ln.cv, ln.c0) for ln in lines}, key=lambda p: p[0] * vm + p[1])
        lo_val, hi_val = lower.at(vm), upper.at(vm)
        pts = [p for p in pts if lo_val - 1e-13 <= p[0] * vm + p[1] <= hi_val + 1e-13]
        segs = []
        for p, q in zip(pts[:-1], pts[1:]):
            a_m, b_m = p[0] * vm + p[1], q[0] * vm + q[1]
            if b_m - a_m <= 1e-14 * max(1.0, abs(vm)):
                continue
            um = 0.5 * (a_m + b_m)
            if F.boxes is not None and not any(
                    ul <= um <= uh and vl <= vm <= vh for (ul, uh, vl, vh) in F.boxes):
                continue
            segs.append((p, q))
        if not segs:
            continue
        for j in range(n_split):
            # v sub-panel, endpoints in working precision
            def vpt(frac):
                if frac == 0 and v0 == va:
                    return abs(tm_x) if ext else va
                if frac == 1 and v1 == vb:
                    return tp_x
                return conv(v0 + (v1 - v0) * frac)

            a_v = vpt(j / n_split)
            b_v = vpt((j + 1) / n_split)
            vn, wv = rule.mapped(a_v, b_v)
            for p, q in segs:
                lo = p[0] * vn + (tm_x if (p[0] == 0 and p[1] == tm) else conv(p[1]))
                hi = q[0] * vn + (tm_x if (q[0] == 0 and q[1] == tm) else conv(q[1]))
                length = max(_fl(hi - lo).max(), 0.0)
                k_split = max(1, math.ceil(length / max_panel))
                for i in range(k_split):
                    aa = lo + (hi - lo) * (i / k_split)
                    bb = lo + (hi - lo) * ((i + 1) / k_split)
                    un, wu = rule.mapped(aa, bb)
                    shape = un.shape
                    us.append(_bflat(un, shape))
                    vs.append(_bflat(_col(vn), shape))
                    ws.append(_bflat(_col(wv) * wu, shape))
    return _concat(us), _concat(vs), _concat(ws)


def _integrate_once(F, t, r, l, n, precision, max_panel, check_mu):
    u, v, w = _nodes(F, t, r, n, precision, max_panel)
    if len(w) == 0:
        z = dd(0.0) if precision is Precision.EXTENDED else 0.0
        return z, 0.0
    ext = precision is Precision.EXTENDED
    tt = dd(t) if ext else t
    rr = dd(r) if ext else r
    kern = duhamel_kernel(u, v, tt, rr, l)
    if check_mu:
        uf, vf = _fl(u), _fl(v)
        mu = (r * r + (vf - t) * (t - uf)) / (r * (vf - uf))
        if np.any(np.abs(mu) > 1 + 1e-12):
            raise AssertionError(f"mu outside [-1, 1] at (t={t}, r={r}): max |mu| = {np.abs(mu).max()}")
    vals = F(u, v) * kern * w
    mass = float(np.sum(np.abs(_fl(vals))))
    total = vals.sum() if isinstance(vals, DD) else float(np.sum(vals))
    pref = 2.0 ** (l + 3)
    scale = (dd(pref) * rr ** (l + 1)) if ext else pref * r ** (l + 1)
    return total / scale, mass / (pref * r ** (l + 1))


def duhamel_eval(F: SourceField, t: float, r: float, l: int, quad_n: int = 16, *,
                 tol: float | None = None, precision: Precision | str = Precision.STANDARD,
                 r_min: float = 1e-6, max_panel: float = 2.0, check: bool = True,
                 check_mu: bool = False, return_error: bool = False):
    """phi(t, r) solving box(phi) = F with zero data, by nested Gauss-Legendre.

    With ``check`` the integral is repeated with 2*quad_n nodes per panel and
    :class:`QuadratureNonConvergence` is raised when the two differ by more than
    tol*|phi| + 64*roundoff*(integral of |integrand|).
    """
    precision = Precision(precision)
    if quad_n < 8:
        raise ValueError("quad_n must be at least 8")
    if r < r_min:
        raise ValueError(f"r={r} below r_min={r_min} (prefactor 1/r^(l+1) is singular)")
    if t < 0:
        raise ValueError("t must be nonnegative")
    tol = DEFAULT_TOL[precision] if tol is None else tol
    if not check:
        val, _ = _integrate_once(F, t, r, l, quad_n, precision, max_panel, check_mu)
        return (val, float("nan")) if return_error else val
    coarse, _ = _integrate_once(F, t, r, l, quad_n, precision, max_panel, check_mu)
    fine, mass = _integrate_once(F, t, r, l, 2 * quad_n, precision, max_panel, False)
    change = abs(float(fine - coarse))
    allowed = tol * abs(float(fine)) + 64 * unit_roundoff(precision) * mass
    if change > allowed:
        raise QuadratureNonConvergence(t, r, change, allowed)
    return (fine, change) if return_error else fine


# ---------------------------------------------------------------------------
# sources built from the free wave and from tables
# ---------------------------------------------------------------------------


def _tau_rho(u, v):
    return (v + u) * 0.5, (v - u) * 0.5


def _wave_support(wave: FreeWave) -> dict:
    u0, u1 = wave.profile.u0, wave.profile.u1
    inf = math.inf
    return dict(boxes=((u0, u1, -inf, inf), (-inf, inf, u0, u1)),
                u_breaks=(u0, u1), v_breaks=(u0, u1))


def _free_values(wave: FreeWave, u, v):
    tau, rho = _tau_rho(u, v)
    return wave.value_at(tau, rho)


def _potential_breaks(model: ModelSpec) -> tuple[float, ...]:
    pot = model.potential
    if pot is None or pot.inner_form == "smooth_blend":
        return ()
    return (pot.cutoff_R,)


def linear_source(model: ModelSpec, wave: FreeWave, previous: "IterateTable | None" = None) -> SourceField:
    """F = -V(rho) phi_prev, with phi_prev = phi_0 (free wave) or a table."""
    if model.potential is None:
        raise ValueError("linear iterates need a model with a potential")
    pot = model.potential
    if previous is None:
        def ev(u, v):
            _, rho = _tau_rho(u, v)
            return -pot(rho) * _free_values(wave, u, v)

        return SourceField(ev, rho_breaks=_potential_breaks(model), name="-V phi0",
                           **_wave_support(wave))
    interp = previous.interpolator()
    sup = _wave_support(wave)

    def ev2(u, v):
        _, rho = _tau_rho(u, v)
        return -pot(rho) * interp(_fl(u), _fl(v))

    return SourceField(ev2, None, sup["u_breaks"], sup["v_breaks"], _potential_breaks(model),
                       name="-V phi1")


def _lowest_power(model: ModelSpec) -> int:
    if not model.terms:
        raise ValueError("nonlinear iterates need a model with nonlinear terms")
    return min(t.power for t in model.terms)


def nonlinear_source(model: ModelSpec, wave: FreeWave, powers: Sequence[int] | None = None) -> SourceField:
    """F = -sum coeff rho^w phi0^p over terms whose power is in ``powers``.

    The default keeps only the lowest power, i.e. the first correction of
    order eps^p in  phi = eps phi0 + eps^p phi_p + ...
    """
    powers = (_lowest_power(model),) if powers is None else tuple(powers)
    terms = [t for t in model.terms if t.power in powers]

    def ev(u, v):
        tau, rho = _tau_rho(u, v)
        phi0 = wave.value_at(tau, rho)
        total = phi0 * 0
        for term in terms:
            w = rho ** term.radial_weight if term.radial_weight else 1
            total = total - term.coeff * w * phi0 ** term.power
        return total

    return SourceField(ev, name="-N(phi0)", **_wave_support(wave))


def table_source(model: ModelSpec, wave: FreeWave, first: "IterateTable") -> SourceField:
    """Order eps^3 source for models whose lowest nonlinearity is quadratic.

    F = -sum_{p=2} coeff rho^w 2 phi0 phi_2nd  -  sum_{p=3} coeff rho^w phi0^3,
    where phi_2nd is the first-stage (order eps^2) iterate held in ``first``.
    """
    quad = [t for t in model.terms if t.power == 2]
    cubic = [t for t in model.terms if t.power == 3]
    if not quad:
        raise ValueError("the second stage is defined only for quadratic nonlinearities")
    interp = first.interpolator()

    def ev(u, v):
        tau, rho = _tau_rho(u, v)
        phi0 = wave.value_at(tau, rho)
        phi1 = interp(_fl(u), _fl(v))
        if isinstance(phi0, DD):
            phi0 = phi0.to_float()
        total = phi0 * 0.0
        for term in quad:
            w = rho ** term.radial_weight if term.radial_weight else 1
            total = total - term.coeff * _fl(w) * 2 * phi0 * phi1
        for term in cubic:
            w = rho ** term.radial_weight if term.radial_weight else 1
            total = total - term.coeff * _fl(w) * phi0 ** 3
        return total

    return SourceField(ev, name="second-stage", **_wave_support(wave))


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IterateTable:
    """Samples of an iterate phi_k.

    Either scattered (t, r) points, or a rectangular lattice in null
    coordinates (``u_nodes`` x ``v_nodes``) used as a source for the next
    iterate; lattice points outside the physical wedge |u| <= v are stored
    as the value at the nearest admissible point.
    """

    t: np.ndarray
    r: np.ndarray
    values: np.ndarray
    order: int
    model_name: str = "custom"
    u_nodes: np.ndarray | None = None
    v_nodes: np.ndarray | None = None
    lattice: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def covers(self, u_lo: float, u_hi: float, v_hi: float) -> bool:
        if self.lattice is None:
            return False
        return (self.u_nodes[0] <= u_lo + 1e-12 and self.u_nodes[-1] >= u_hi - 1e-12
                and self.v_nodes[-1] >= v_hi - 1e-12)

    def interpolator(self) -> Callable:
        """Bilinear interpolant on the lattice; zero outside it."""
        if self.lattice is None:
            raise ValueError("table holds scattered points, not a lattice")
        un, vn, grid = self.u_nodes, self.v_nodes, self.lattice

        def f(u, v):
            u = np.asarray(u, dtype=np.float64)
            v = np.asarray(v, dtype=np.float64)
            inside = (u >= un[0]) & (u <= un[-1]) & (v >= vn[0]) & (v <= vn[-1])
            i = np.clip(np.searchsorted(un, u) - 1, 0, len(un) - 2)
            j = np.clip(np.searchsorted(vn, v) - 1, 0, len(vn) - 2)
            x = (u - un[i]) / (un[i + 1] - un[i])
            y = (v - vn[j]) / (vn[j + 1] - vn[j])
            val = ((1 - x) * (1 - y) * grid[i, j] + x * (1 - y) * grid[i + 1, j]
                   + (1 - x) * y * grid[i, j + 1] + x * y * grid[i + 1, j + 1])
            return np.where(inside, val, 0.0)

        return f

    def to_csv(self, path, comments: dict | None = None) -> None:
        """Write columns t, r, phi_k (one row per sample, in stored order)."""
        with open(path, "w", newline="") as fh:
            for k, v in (comments or {}).items():
                fh.write(f"# {k}: {v}\n")
            fh.write(f"# order: {self.order}\n# model: {self.model_name}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "r", f"phi_{self.order}"])
            for tt, rr, vv in zip(self.t, self.r, self.values):
                wr.writerow([repr(float(tt)), repr(float(rr)), repr(float(vv))])


def _points(eval_points) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(eval_points, dtype=np.float64).reshape(-1, 2)
    return pts[:, 0], pts[:, 1]


def _evaluate_points(F, eval_points, l, order, name, **kw) -> IterateTable:
    t, r = _points(eval_points)
    vals = np.array([float(duhamel_eval(F, ti, ri, l, **kw)) for ti, ri in zip(t, r)])
    return IterateTable(t, r, vals, order, name)


def build_table(F: SourceField, l: int, u_nodes: Sequence[float], v_nodes: Sequence[float], *,
                order: int, model_name: str = "custom", rho_floor: float = 1e-3,
                **kw) -> IterateTable:
    """Evaluate the Duhamel integral of F on a (u, v) lattice.

    Points with rho below ``rho_floor`` use rho_floor (the iterate is regular
    at the origin); points with u < -v are clamped to the line tau = 0.
    """
    un = np.asarray(u_nodes, dtype=np.float64)
    vn = np.asarray(v_nodes, dtype=np.float64)
    grid = np.zeros((len(un), len(vn)))
    cache: dict[tuple[float, float], float] = {}
    kw.setdefault("check", False)
    for i, u in enumerate(un):
        for j, v in enumerate(vn):
            uu = max(u, -v)
            vv = max(v, uu)
            tau, rho = 0.5 * (vv + uu), 0.5 * (vv - uu)
            rho = max(rho, rho_floor)
            key = (round(tau, 12), round(rho, 12))
            if key not in cache:
                cache[key] = 0.0 if tau <= 0 else float(duhamel_eval(F, tau, rho, l, **kw))
            grid[i, j] = cache[key]
    uu, vv = np.meshgrid(un, vn, indexing="ij")
    return IterateTable(0.5 * (vv + uu).ravel(), 0.5 * (vv - uu).ravel(), grid.ravel(), order,
                        model_name, un, vn, grid)


def _strip_lattice(wave: FreeWave, v_max: float, du: float, dv: float):
    """Lattice covering both strips where phi_0 lives (u or v in the support)."""
    u0, u1 = wave.profile.u0, wave.profile.u1
    u_lo = min(u0, -u1)
    un = np.linspace(u_lo, u1, max(2, int(math.ceil((u1 - u_lo) / du)) + 1))
    vn = np.linspace(-u1, v_max, max(2, int(math.ceil((v_max + u1) / dv)) + 1))
    return un, vn


def past_lattice(wave: FreeWave, u_hi: float, v_max: float, fine: float = 0.05,
                 coarse: float = 0.5):
    """Lattice over the whole past domain -v <= u <= u_hi, 0 <= v <= v_max.

    Spacing is ``fine`` across the strips where phi_0 lives and ``coarse``
    elsewhere, where the first iterate varies slowly.
    """
    u0, u1 = wave.profile.u0, wave.profile.u1

    def axis(lo, hi, f_lo, f_hi):
        f_lo, f_hi = max(lo, f_lo), min(hi, f_hi)
        parts = []
        if f_lo > lo:
            parts.append(np.linspace(lo, f_lo, max(2, int(math.ceil((f_lo - lo) / coarse)) + 1)))
        if f_hi > f_lo:
            parts.append(np.linspace(f_lo, f_hi, max(2, int(math.ceil((f_hi - f_lo) / fine)) + 1)))
        if hi > f_hi:
            parts.append(np.linspace(f_hi, hi, max(2, int(math.ceil((hi - f_hi) / coarse)) + 1)))
        return np.unique(np.concatenate(parts))

    un = axis(-v_max, u_hi, min(u0, -u1), u1)
    vn = axis(0.0, v_max, 0.0, u1)
    return un, vn


def iterate_linear(model: ModelSpec, wave: FreeWave, k: int, eval_points, *,
                   first: IterateTable | None = None, **kw) -> IterateTable:
    """phi_k of  box phi_0 = 0, box phi_1 = -V phi_0, box phi_2 = -V phi_1.

    For k=2 ``first`` must be a lattice table of phi_1 covering the past
    domain of every evaluation point (see :func:`build_table`).
    """
    if model.l != wave.l:
        raise ValueError("model and free wave disagree on l")
    if k == 1:
        return _evaluate_points(linear_source(model, wave), eval_points, model.l, 1, model.name, **kw)
    if k != 2:
        raise ValueError("k must be 1 or 2")
    t, r = _points(eval_points)
    if first is None or not first.covers(float(np.min(-(t + r))), float(np.max(t - r)),
                                         float(np.max(t + r))):
        raise ValueError("k=2 needs a phi_1 lattice table covering the past domain of every point")
    kw.setdefault("check", False)
    return _evaluate_points(linear_source(model, wave, first), eval_points, model.l, 2, model.name, **kw)


def iterate_nonlinear(model: ModelSpec, wave: FreeWave, stage: str, eval_points, *,
                      first: IterateTable | None = None, du: float = 0.02, dv: float = 0.1,
                      **kw) -> IterateTable:
    """First stage: box phi_p = -N_p(phi_0) for the lowest power p.

    Second stage (quadratic lowest power only): the order eps^3 iterate with
    source -coeff*2 phi_0 phi_2 plus any cubic terms; the first-stage table
    over the strips where phi_0 lives is built on demand with spacings du, dv.
    """
    if model.l != wave.l:
        raise ValueError("model and free wave disagree on l")
    p = _lowest_power(model)
    if stage == "first":
        return _evaluate_points(nonlinear_source(model, wave), eval_points, model.l, p, model.name, **kw)
    if stage != "second":
        raise ValueError("stage must be 'first' or 'second'")
    if p != 2:
        raise ValueError("the second stage is defined for quadratic nonlinearities only")
    t, r = _points(eval_points)
    v_max = float(np.max(t + r))
    if first is None:
        un, vn = _strip_lattice(wave, v_max, du, dv)
        table_kw = {k: v for k, v in kw.items() if k in ("quad_n", "max_panel")}
        first = build_table(nonlinear_source(model, wave), model.l, un, vn, order=2,
                            model_name=model.name, **table_kw)
    elif first.v_nodes is None or first.v_nodes[-1] < v_max - 1e-12:
        raise ValueError("first-stage table does not reach v = t + r of every point")
    kw.setdefault("check", False)
    return _evaluate_points(table_source(model, wave, first), eval_points, model.l, 3, model.name, **kw)
