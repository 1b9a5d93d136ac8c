"""Method-of-lines evolution of radial wave equations.

The first-order system  phi_t = pi,  pi_t = Lap phi - V phi - N(phi) + S  is
integrated with classical RK4 on a uniform grid r_i = i h that includes the
origin.  Spatial derivatives are centered 4th- or 6th-order stencils; the
origin is handled with parity ghost points and the regular limit
Lap phi(0) = d phi''(0).

With ``boundary="causal"`` the grid outruns the signal: it extends past
t_final + max(r_obs), and the active part of the grid shrinks at light speed
so that only points inside the past domain of dependence of the observers are
updated.  Nothing that happens at the edge can reach an observer.
"""
from __future__ import annotations

import logging
import math
import time as _time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import mpmath
import numpy as np

from . import _kernels as K
from .analysis import TimeSeries
from .freewave import FreeWave
from .models import ModelSpec
from .numerics import DD, Precision, dd

logger = logging.getLogger(__name__)

__all__ = ["Grid", "FieldState", "EvolveConfig", "RadialOperator", "Evolver", "RunResult",
           "NumericalBlowup", "step", "run", "discrete_laplacian", "operator_identity_check",
           "discrete_energy"]

# integer stencil weights (center first) and their common denominators
_D2 = {4: ((-30, 16, -1), 12), 6: ((-490, 270, -27, 2), 180)}
_D1 = {4: ((0, 8, -1), 12), 6: ((0, 45, -9, 1), 60)}
# Kreiss-Oliger: sign * delta^(2q) weights, scale 1/(2^(2q) h)
_KO = {4: ((-20, 15, -6, 1), 64), 6: ((-70, 56, -28, 8, -1), 256)}


class NumericalBlowup(RuntimeError):
    """Non-finite field values appeared (blowup or instability)."""

    def __init__(self, time: float):
        super().__init__(f"non-finite field values first seen at t = {time:.6g}")
        self.time = time


@dataclass(frozen=True)
class Grid:
    h: float
    n_points: int

    def __post_init__(self):
        if self.h <= 0 or self.n_points < 8:
            raise ValueError("grid needs h > 0 and at least 8 points")

    @property
    def r_max(self) -> float:
        return self.h * (self.n_points - 1)

    def radii(self, precision: Precision | str = Precision.STANDARD):
        i = np.arange(self.n_points, dtype=np.float64)
        if Precision(precision) is Precision.EXTENDED:
            return dd(i) * dd(self.h)
        return i * self.h

    def index_of(self, r: float) -> int:
        i = int(round(r / self.h))
        if not 0 <= i < self.n_points:
            raise ValueError(f"radius {r} outside the grid")
        return i


@dataclass
class FieldState:
    phi: object
    pi: object
    time: float = 0.0


@dataclass(frozen=True)
class RadialOperator:
    """Lap f = f'' + (dim-1)/r f' - centrifugal/r^2 f with origin parity."""

    dim: int
    centrifugal: int = 0
    parity: int = 1

    @classmethod
    def for_model(cls, model: ModelSpec) -> "RadialOperator":
        """Direct d-dimensional operator for l <= 1, harmonic form above.

        The direct (d-1)/r D1 discretization acquires complex eigenvalues near
        the origin once d >= 7, which makes the semi-discrete system grow
        exponentially; the equivalent harmonic form has a real negative spectrum.
        """
        if model.l >= 2:
            return cls.harmonic(model.l)
        return cls(model.dimension, 0, 1)

    @property
    def lift(self) -> int:
        """Power k with evolved variable r^k phi (0 for the direct operator)."""
        if not self.centrifugal:
            return 0
        return int(round((-1 + math.sqrt(1 + 4 * self.centrifugal)) / 2))

    @classmethod
    def harmonic(cls, l: int) -> "RadialOperator":
        """Three-dimensional operator for the l-th spherical harmonic."""
        return cls(3, l * (l + 1), -1 if l % 2 else 1)


@dataclass(frozen=True)
class EvolveConfig:
    t_final: float
    h: float = 1.0 / 16.0
    stencil_order: int = 6
    cfl: float = 0.25
    boundary: str = "causal"
    observation_radii: tuple[float, ...] = (5.0,)
    sample_interval: float = 0.5
    precision: Precision = Precision.EXTENDED
    dissipation: float = 0.0
    shrink: bool = True
    r_max: float | None = None
    pad: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "precision", Precision(self.precision))
        object.__setattr__(self, "observation_radii", tuple(float(r) for r in self.observation_radii))
        if self.stencil_order not in (4, 6):
            raise ValueError("stencil_order must be 4 or 6")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if self.boundary not in ("causal", "sommerfeld"):
            raise ValueError("boundary must be 'causal' or 'sommerfeld'")
        if self.t_final <= 0 or self.h <= 0 or self.sample_interval <= 0:
            raise ValueError("t_final, h and sample_interval must be positive")
        if not self.observation_radii:
            raise ValueError("need at least one observation radius")

    @property
    def dt(self) -> float:
        return self.cfl * self.h

    def make_grid(self, profile_width: float = 2.0) -> Grid:
        r_obs = max(self.observation_radii)
        if self.r_max is not None:
            r_max = self.r_max
            if self.boundary == "causal" and r_max < self.t_final + r_obs + 2 * profile_width:
                raise ValueError("causal boundary needs r_max >= t_final + max(r_obs) + 2*width")
        elif self.boundary == "causal":
            r_max = self.t_final + r_obs + 2 * profile_width + self.pad
        else:
            r_max = r_obs + 4 * profile_width + self.pad
        n = int(math.ceil(r_max / self.h)) + 1
        return Grid(self.h, n)


@dataclass
class RunResult:
    series: list[TimeSeries]
    metadata: dict = field(default_factory=dict)

    def at(self, r_obs: float) -> TimeSeries:
        return min(self.series, key=lambda s: abs(s.r_obs - r_obs))


def _split_mp(x) -> tuple[float, float]:
    with mpmath.workprec(200):
        x = mpmath.mpf(x)
        hi = float(x)
        return hi, float(x - hi)


class Evolver:
    """Holds the precomputed grid arrays for one (model, grid, config) triple."""

    def __init__(self, model: ModelSpec, cfg: EvolveConfig, grid: Grid,
                 operator: RadialOperator | None = None,
                 source: Callable | None = None):
        self.model = model
        self.cfg = cfg
        self.grid = grid
        self.op = operator or RadialOperator.for_model(model)
        self.source = source
        self.extended = cfg.precision is Precision.EXTENDED
        order = cfg.stencil_order
        c2, den2 = _D2[order]
        c1, den1 = _D1[order]
        self.hw = len(c2) - 1
        self.c2 = np.array(c2, dtype=np.float64)
        self.c1 = np.array(c1, dtype=np.float64)
        if cfg.dissipation > 0:
            ko, den_ko = _KO[order]
            self.ko = np.array(ko, dtype=np.float64)
            ko_hw = len(ko) - 1
        else:
            self.ko = np.zeros(1)
            den_ko = 1
            ko_hw = 0
        h = grid.h
        self.lift = self.op.lift
        with mpmath.workprec(200):
            hm = mpmath.mpf(h)
            s2 = _split_mp(1 / (den2 * hm * hm))
            s1 = _split_mp(1 / (den1 * hm))
            ks = _split_mp(mpmath.mpf(cfg.dissipation) / (den_ko * hm))
            dt = mpmath.mpf(cfg.cfl) * hm
            self.dtc = np.array([*_split_mp(dt / 2), *_split_mp(dt), *_split_mp(dt / 6)])
        self.dt = float(cfg.cfl * h)
        if self.extended:
            self.scale = np.array([*s2, *s1, *ks, h])
        else:
            self.scale = np.array([s2[0], 0.0, s1[0], 0.0, ks[0], 0.0, h])
        n = grid.n_points
        self.geom = np.array([n, self.hw, self.op.dim, self.op.centrifugal, self.op.parity,
                              1 if cfg.boundary == "sommerfeld" else 0, len(model.terms),
                              1 if source is not None else 0, ko_hw], dtype=np.int64)
        r = grid.radii(cfg.precision)
        self.r = r
        r_safe = r + 0  # copy
        if self.extended:
            r_safe.hi[0] = 1.0
            invr = 1 / r_safe
            invr.hi[0] = invr.lo[0] = 0.0
            invr2 = invr * invr
            pot = model.potential_values(r) if model.potential is not None else r * 0
            self.invr = np.stack([invr.hi, invr.lo])
            self.invr2 = np.stack([invr2.hi, invr2.lo])
            self.pot = np.stack([pot.hi, pot.lo])
            wts = np.zeros((len(model.terms), 2, n))
            for t, term in enumerate(model.terms):
                e = self._weight_exponent(term)
                w = dd(term.coeff) * (r_safe ** e if e >= 0 else invr ** (-e))
                if e != 0:
                    w.hi[0] = w.lo[0] = 0.0
                wts[t, 0] = w.hi
                wts[t, 1] = w.lo
        else:
            r_safe[0] = 1.0
            invr = 1 / r_safe
            invr[0] = 0.0
            self.invr = invr
            self.invr2 = invr * invr
            self.pot = (np.asarray(model.potential_values(r), dtype=np.float64)
                        if model.potential is not None else np.zeros(n))
            wts = np.zeros((len(model.terms), n))
            for t, term in enumerate(model.terms):
                e = self._weight_exponent(term)
                wts[t] = term.coeff * (r_safe ** e if e >= 0 else invr ** (-e))
                if e != 0:
                    wts[t, 0] = 0.0
        self.wts = wts
        self.pows = np.array([t.power for t in model.terms] or [1], dtype=np.int64)
        if self.extended:
            self.work = np.zeros((20, n))
            self._zero_src = np.zeros((2, n))
        else:
            self.work = np.zeros((10, n))
            self._zero_src = np.zeros(n)
        t_final = cfg.t_final
        self._edge_pad = max(cfg.pad, 8 * self.hw * h)
        self._r_watch = max(cfg.observation_radii)
        self._t_final = t_final

    def _weight_exponent(self, term) -> int:
        # r^k phi evolved: the term r^w phi^p becomes r^(w - k(p-1)) psi^p
        return term.radial_weight - self.lift * (term.power - 1)

    # -- state helpers ---------------------------------------------------------
    def initial_state(self, wave: FreeWave | None, amplitude: float | None = None) -> FieldState:
        n = self.grid.n_points
        amp = self.model.data_amplitude if amplitude is None else amplitude
        if wave is None:
            if self.extended:
                return FieldState(DD(np.zeros(n)), DD(np.zeros(n)), 0.0)
            return FieldState(np.zeros(n), np.zeros(n), 0.0)
        f, g = wave.initial_data(self.r)
        if self.lift:
            # evolve psi = r^l phi in the 3-d harmonic picture
            rl = self.r ** self.lift
            f = f * rl
            g = g * rl
        if self.extended:
            return FieldState(dd(amp) * f, dd(amp) * g, 0.0)
        return FieldState(amp * np.asarray(f, float), amp * np.asarray(g, float), 0.0)

    def n_active(self, t: float) -> int:
        n = self.grid.n_points
        if self.cfg.boundary != "causal" or not self.cfg.shrink:
            return n
        reach = self._r_watch + (self._t_final - t) + self._edge_pad
        return min(n, int(math.ceil(reach / self.grid.h)) + self.hw + 1)

    def _source_arrays(self, t: float):
        if self.source is None:
            z = self._zero_src
            return z, z, z
        out = []
        for tt in (t, t + 0.5 * self.dt, t + self.dt):
            s = self.source(tt, self.r)
            if self.lift:
                s = s * self.r ** self.lift
            if self.extended:
                s = dd(s)
                out.append(np.stack([s.hi, s.lo]))
            else:
                out.append(np.asarray(s, dtype=np.float64))
        return tuple(out)

    def step(self, state: FieldState, n_act: int | None = None) -> None:
        """Advance ``state`` in place by one RK4 step."""
        if n_act is None:
            n_act = self.n_active(state.time)
        s0, sm, s1 = self._source_arrays(state.time)
        if self.extended:
            ok = K.rk4_dd(state.phi.hi, state.phi.lo, state.pi.hi, state.pi.lo, n_act, self.dtc,
                          self.geom, self.c2, self.c1, self.ko, self.scale, self.invr, self.invr2,
                          self.pot, self.wts, self.pows, s0, sm, s1, self.work)
        else:
            ok = K.rk4_f64(state.phi, state.pi, n_act, self.dt, self.geom, self.c2, self.c1,
                           self.ko, self.scale, self.invr, self.invr2, self.pot, self.wts,
                           self.pows, s0, sm, s1, self.work)
        state.time = state.time + self.dt
        if not ok:
            raise NumericalBlowup(state.time)

    def value(self, state: FieldState, idx: int) -> float:
        """phi at grid index ``idx`` (undoing the harmonic lift)."""
        return float(self.value_dd(state, idx))

    def value_dd(self, state: FieldState, idx: int):
        if self.extended:
            v = DD._raw(state.phi.hi[idx].copy(), state.phi.lo[idx].copy())
            if self.lift:
                v = v / self.r[idx] ** self.lift
            return v
        v = float(state.phi[idx])
        if self.lift:
            v /= float(self.r[idx]) ** self.lift
        return v


def _compute_laplacian(phi, grid: Grid, op: RadialOperator, order: int):
    """Discrete Lap phi on all points whose stencil fits (numpy reference path)."""
    c2, den2 = _D2[order]
    c1, den1 = _D1[order]
    hw = len(c2) - 1
    n = len(phi)
    ext = isinstance(phi, DD)

    def shifted(j):
        idx = np.arange(n) + j
        sign = np.where(idx < 0, float(op.parity), 1.0)
        idx = np.abs(idx)
        idx = np.minimum(idx, n - 1)
        if ext:
            return DD._raw(phi.hi[idx] * sign, phi.lo[idx] * sign)
        return phi[idx] * sign

    d2 = phi * c2[0]
    d1 = phi * 0
    for j in range(1, hw + 1):
        a, b = shifted(j), shifted(-j)
        d2 = d2 + (a + b) * c2[j]
        d1 = d1 + (a - b) * c1[j]
    h = grid.h
    d2 = d2 / (den2 * h * h) if not ext else d2 / (dd(den2) * dd(h) * dd(h))
    d1 = d1 / (den1 * h) if not ext else d1 / (dd(den1) * dd(h))
    r = grid.radii(Precision.EXTENDED if ext else Precision.STANDARD)
    safe = r + 0
    if ext:
        safe.hi[0] = 1.0
    else:
        safe[0] = 1.0
    lap = d2 + (op.dim - 1) * d1 / safe - op.centrifugal * phi / (safe * safe)
    if ext:
        lap.hi[0] = float(op.dim) * d2.hi[0] if op.centrifugal == 0 else 0.0
        lap.lo[0] = float(op.dim) * d2.lo[0] if op.centrifugal == 0 else 0.0
        return lap[: n - hw]
    lap[0] = op.dim * d2[0] if op.centrifugal == 0 else 0.0
    return lap[: n - hw]


def discrete_laplacian(phi, h: float, dim: int, order: int = 6, centrifugal: int = 0,
                       parity: int = 1):
    """Apply the evolver's discrete radial Laplacian to samples phi(i h).

    Returns values on indices 0 .. n-1-half_width (those whose stencil fits).
    """
    grid = Grid(h, len(phi))
    return _compute_laplacian(phi, grid, RadialOperator(dim, centrifugal, parity), order)


def discrete_energy(state: FieldState, grid: Grid, dim: int) -> float:
    """Trapezoid approximation of integral (pi^2 + phi_r^2) r^(d-1) dr / 2."""
    phi = np.asarray(state.phi.to_float() if isinstance(state.phi, DD) else state.phi)
    pi = np.asarray(state.pi.to_float() if isinstance(state.pi, DD) else state.pi)
    r = grid.radii()
    # 6th-order centered phi_r with even-parity ghosts at the origin
    w, den = _D1[6]
    ext = np.concatenate([phi[3:0:-1], phi, np.full(3, phi[-1])])
    n = len(phi)
    dphi = sum(c * (ext[3 + k: 3 + k + n] - ext[3 - k: 3 - k + n]) for k, c in enumerate(w) if c) / (den * grid.h)
    dens = 0.5 * (pi**2 + dphi**2) * r ** (dim - 1)
    return float(np.trapezoid(dens, r))


def step(state: FieldState, model: ModelSpec, cfg: EvolveConfig, grid: Grid | None = None) -> FieldState:
    """Return the state advanced by one RK4 step (input is left untouched)."""
    n = len(state.phi)
    grid = grid or Grid(cfg.h, n)
    ev = Evolver(model, replace(cfg, shrink=False), grid)
    if isinstance(state.phi, DD) != ev.extended:
        raise ValueError("state precision does not match cfg.precision")
    new = FieldState(state.phi.copy(), state.pi.copy(), state.time)
    ev.step(new, n)
    return new


def run(model: ModelSpec, wave: FreeWave | None, cfg: EvolveConfig, *,
        source: Callable | None = None, operator: RadialOperator | None = None,
        coefficient_check: bool = False, initial_state: FieldState | None = None,
        snapshot_times: Sequence[float] = ()) -> RunResult:
    """Evolve data generated by ``wave`` (scaled by the model's amplitude).

    ``source(t, r)`` adds an inhomogeneous term S to  box(phi) + ... = S.
    Returns one :class:`TimeSeries` per observation radius.
    """
    if cfg.boundary == "sommerfeld" and coefficient_check:
        warnings.warn("sommerfeld boundary is approximate; coefficient-level comparisons "
                      "may be contaminated by boundary reflections", stacklevel=2)
    width = wave.profile.width if wave is not None else 2.0
    grid = cfg.make_grid(width)
    ev = Evolver(model, cfg, grid, operator=operator, source=source)
    state = initial_state if initial_state is not None else ev.initial_state(wave)
    idx = [grid.index_of(r) for r in cfg.observation_radii]
    steps_per_sample = max(1, int(round(cfg.sample_interval / ev.dt)))
    n_steps = int(math.ceil(cfg.t_final / ev.dt - 1e-9))
    times = [0.0]
    values = [[ev.value(state, i)] for i in idx]
    snaps = {}
    pending = sorted(snapshot_times)
    wall = _time.perf_counter()
    for k in range(1, n_steps + 1):
        ev.step(state)
        t = k * ev.dt
        state.time = t
        while pending and t >= pending[0] - 1e-12:
            snaps[pending.pop(0)] = FieldState(state.phi.copy(), state.pi.copy(), t)
        if k % steps_per_sample == 0:
            times.append(t)
            for vals, i in zip(values, idx):
                vals.append(ev.value(state, i))
    wall = _time.perf_counter() - wall
    meta = {
        "model": model.name,
        "l": model.l,
        "precision": cfg.precision.value,
        "h": grid.h,
        "stencil_order": cfg.stencil_order,
        "cfl": cfg.cfl,
        "boundary": cfg.boundary,
        "r_max": grid.r_max,
        "n_points": grid.n_points,
        "n_steps": n_steps,
        "dissipation": cfg.dissipation,
        "wall_clock_s": round(wall, 3),
    }
    logger.info("run %s finished: %d steps in %.1fs", model.name, n_steps, wall)
    series = [TimeSeries(np.array(times), np.array(v), grid.h * i, "evolver")
              for v, i in zip(values, idx)]
    result = RunResult(series, meta)
    result.final_state = state  # type: ignore[attr-defined]
    result.snapshots = snaps  # type: ignore[attr-defined]
    result.grid = grid  # type: ignore[attr-defined]
    return result


def operator_identity_check(wave: FreeWave, *, h: float = 1.0 / 64.0, t_final: float = 8.0,
                            r_obs: Sequence[float] = (1.0, 2.0, 3.0, 4.0),
                            stencil_order: int = 6, precision: Precision | str = Precision.STANDARD,
                            amplitude: float = 1.0) -> float:
    """Max |phi_d - psi_3 / r^l| over sampled (t, r_obs).

    phi_d evolves in d = 2l+3 dimensions with the direct operator; psi_3 =
    r^l phi evolves in three dimensions with the centrifugal term l(l+1)/r^2.
    """
    l = wave.l
    if l < 1:
        raise ValueError("the identity check needs l >= 1")
    from .models import preset

    model = preset("free", l=l)
    model = replace(model, data_amplitude=amplitude)
    cfg = EvolveConfig(t_final=t_final, h=h, stencil_order=stencil_order, precision=precision,
                       observation_radii=tuple(r_obs), sample_interval=0.25)
    a = run(model, wave, cfg, operator=RadialOperator(model.dimension))
    b = run(model, wave, cfg, operator=RadialOperator.harmonic(l))
    worst = 0.0
    for sa, sb in zip(a.series, b.series):
        worst = max(worst, float(np.max(np.abs(sa.values - sb.values))))
    return worst
