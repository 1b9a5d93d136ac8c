"""Late-time tail analysis: local power index, amplitude fits, predictions.

A tail phi ~ c t^-gamma shows up as a plateau of the local power index

    gamma(t) = -d ln|phi| / d ln t.

Predictions come from closed-form coefficients multiplied by moments of the
generator a(u) of the free data:

    linear       phi ~ lam * C(l, alpha) * A / t^(alpha+2l)
    power        phi ~ eps^p * C~(l, p) * A~ / t^((l+1)p-1)
    quadratic    phi ~ eps^3 * c / t^(3l+1)          (l >= 1)
    Yang-Mills   phi ~ eps^3 * (-8 int a a'^2) / t^4
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics import double_factorial, falling_factorial, rising_factorial

logger = logging.getLogger(__name__)

__all__ = ["TimeSeries", "TailPrediction", "TailReport", "FitResult", "Plateau",
           "SignChangeError", "local_power_index", "detect_plateau", "fit_amplitude",
           "linear_coefficient", "nonlinear_coefficient", "predict", "compare",
           "RATE_TOL", "COEFF_TOL"]

RATE_TOL = 0.02
COEFF_TOL = {1: 0.10, 2: 0.20, 3: 0.20}
AMPLITUDE_SPREAD = 0.20
PLATEAU_VARIATION = 0.01
PLATEAU_FRACTION = 0.25


class SignChangeError(ValueError):
    """The window contains sign changes; ``subwindow`` is the monotone tail part."""

    def __init__(self, subwindow: tuple[float, float] | None):
        msg = "phi changes sign in the analysis window"
        if subwindow:
            msg += f"; first monotone-decay subwindow is t in [{subwindow[0]:g}, {subwindow[1]:g}]"
        super().__init__(msg)
        self.subwindow = subwindow


@dataclass
class TimeSeries:
    """Samples phi(t, r_obs) with strictly increasing t."""

    times: np.ndarray
    values: np.ndarray
    r_obs: float
    provenance: str = "evolver"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(~np.isfinite(self.values)):
            raise ValueError("series contains NaN or inf")
        if self.provenance not in ("evolver", "duhamel", "freewave", "synthetic"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self):
        return len(self.times)

    def window(self, t_lo: float | None = None, t_hi: float | None = None) -> "TimeSeries":
        sel = np.ones(len(self.times), dtype=bool)
        if t_lo is not None:
            sel &= self.times >= t_lo
        if t_hi is not None:
            sel &= self.times <= t_hi
        return TimeSeries(self.times[sel], self.values[sel], self.r_obs, self.provenance)

    def to_csv(self, path, meta: dict | None = None) -> None:
        """``# key: value`` comment lines, then a ``t,phi`` header and rows."""
        with open(path, "w", newline="") as fh:
            fh.write(f"# r_obs: {self.r_obs!r}\n# provenance: {self.provenance}\n")
            for k, v in (meta or {}).items():
                fh.write(f"# {k}: {v}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "phi"])
            for t, v in zip(self.times, self.values):
                wr.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        meta = {}
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    k, _, v = line[1:].partition(":")
                    meta[k.strip()] = v.strip()
                elif line.strip() and not line.startswith("t,"):
                    t, v = line.split(",")
                    rows.append((float(t), float(v)))
        arr = np.array(rows).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], float(meta.get("r_obs", "nan")),
                   meta.get("provenance", "evolver"))


# ---------------------------------------------------------------------------
# measuring
# ---------------------------------------------------------------------------


def _monotone_tail(s: TimeSeries) -> tuple[float, float] | None:
    """Window after the last sign change (where the tail lives)."""
    sign = np.sign(s.values)
    flips = np.nonzero(sign[1:] * sign[:-1] <= 0)[0]
    start = flips[-1] + 2 if len(flips) else 0
    if start >= len(s.times) - 2:
        return None
    return float(s.times[start]), float(s.times[-1])


def local_power_index(s: TimeSeries, t_lo: float | None = None, t_hi: float | None = None, *,
                      n_resample: int | None = None, strict: bool = True) -> TimeSeries:
    """gamma(t) = -d ln|phi| / d ln t on a log-uniform resampling of the window.

    Sign changes (quasinormal ringing, zero crossings) make ln|phi| singular.
    With ``strict`` a :class:`SignChangeError` names the monotone subwindow;
    otherwise the analysis moves to that subwindow with a warning.
    """
    w = s.window(t_lo, t_hi)
    w = TimeSeries(w.times[w.times > 0], w.values[w.times > 0], w.r_obs, w.provenance)
    if len(w) < 4:
        raise ValueError("need at least 4 samples in the window")
    if np.any(w.values == 0) or np.any(np.sign(w.values) != np.sign(w.values[-1])):
        sub = _monotone_tail(w)
        if strict or sub is None:
            raise SignChangeError(sub)
        warnings.warn(f"sign change in window; using subwindow {sub}", stacklevel=2)
        w = w.window(*sub)
    lt = np.log(w.times)
    lp = np.log(np.abs(w.values))
    n = n_resample or len(w.times)
    grid = np.linspace(lt[0], lt[-1], n)
    lp_g = np.interp(grid, lt, lp)
    gamma = -np.gradient(lp_g, grid, edge_order=2)
    return TimeSeries(np.exp(grid), gamma, s.r_obs, s.provenance)


@dataclass(frozen=True)
class Plateau:
    found: bool
    gamma: float
    spread: float
    window: tuple[float, float]


def detect_plateau(gamma: TimeSeries, variation: float = PLATEAU_VARIATION,
                   fraction: float = PLATEAU_FRACTION) -> Plateau:
    """Plateau if gamma varies by less than ``variation`` (relative) over the
    final ``fraction`` of the log-time window."""
    lt = np.log(gamma.times)
    cut = lt[-1] - fraction * (lt[-1] - lt[0])
    sel = lt >= cut
    g = gamma.values[sel]
    mean = float(np.mean(g))
    spread = float(np.max(g) - np.min(g))
    found = mean != 0 and spread / abs(mean) < variation
    return Plateau(bool(found), mean, 0.5 * spread, (float(gamma.times[sel][0]), float(gamma.times[-1])))


@dataclass(frozen=True)
class FitResult:
    amplitude: float
    uncertainty: float
    window: tuple[float, float]
    conclusive: bool


def fit_amplitude(s: TimeSeries, gamma: float, t_lo: float | None = None,
                  t_hi: float | None = None) -> FitResult:
    """Mean of t^gamma phi over the last decade of the window.

    The uncertainty is the half-range over that decade; the fit is marked
    inconclusive when it exceeds 20% of |mean|.
    """
    w = s.window(t_lo, t_hi)
    if len(w) < 2:
        raise ValueError("need at least 2 samples in the window")
    t_end = w.times[-1]
    dec = w.window(t_lo=max(t_end / 10.0, w.times[0]))
    scaled = dec.times**gamma * dec.values
    mean = float(np.mean(scaled))
    half = 0.5 * float(np.max(scaled) - np.min(scaled))
    conclusive = mean != 0 and half <= AMPLITUDE_SPREAD * abs(mean)
    return FitResult(mean, half, (float(dec.times[0]), float(t_end)), bool(conclusive))


# ---------------------------------------------------------------------------
# predictions
# ---------------------------------------------------------------------------


def linear_coefficient(l: int, alpha: float) -> float:
    """C(l, alpha) = -2^(alpha+2l-1)/(2l+1)!! ((alpha-3)/2)_falling^l (alpha/2)_rising^l."""
    return (-(2.0 ** (alpha + 2 * l - 1)) / double_factorial(2 * l + 1)
            * falling_factorial((alpha - 3) / 2, l) * rising_factorial(alpha / 2, l))


def nonlinear_coefficient(l: int, p: int, convention: str = "reference") -> float:
    """C~(l, p) for box(phi) = phi^p.

    ``reference``: (-1)^l 2^((l+1)(p+1)-1)/(2l+1)!! [(l+1)(p-1)-2]_falling^l.
    ``recomputed``: the same with 2^((l+1)(p-1)-1), i.e. smaller by 4^(l+1);
    this is what direct quadrature of the Duhamel integral converges to.
    """
    if convention == "reference":
        e = (l + 1) * (p + 1) - 1
    elif convention == "recomputed":
        e = (l + 1) * (p - 1) - 1
    else:
        raise ValueError("convention must be 'reference' or 'recomputed'")
    return ((-1) ** l * 2.0**e / double_factorial(2 * l + 1)
            * falling_factorial((l + 1) * (p - 1) - 2, l))


@dataclass(frozen=True)
class TailPrediction:
    """Predicted phi ~ coefficient * t^-gamma (coefficient None when unknown)."""

    gamma: float
    coefficient: float | None
    order_in_small_param: int
    anomalous: bool = False
    source: str = ""
    candidates: tuple = ()


def _linear_candidate(model, prof) -> TailPrediction:
    from .profiles import moment_A

    pot = model.potential
    l, alpha = model.l, pot.alpha
    c = linear_coefficient(l, alpha)
    if c == 0:
        return TailPrediction(2 * (alpha + l - 1), None, 2, True, "linear (second order)")
    return TailPrediction(alpha + 2 * l, pot.lam * c * float(moment_A(prof)), 1, False, "linear")


def _yang_mills_like(model) -> bool:
    sig = sorted((t.power, t.radial_weight, t.coeff) for t in model.terms)
    return model.l == 1 and sig == [(2, 0, 3.0), (3, 2, 1.0)]


def _nonlinear_candidate(model, prof, convention) -> TailPrediction:
    from .profiles import moment_Atilde, moment_c_anom, moment_ym

    eps = model.data_amplitude
    l = model.l
    if _yang_mills_like(model):
        return TailPrediction(4, eps**3 * float(moment_ym(prof)), 3, True, "yang-mills")
    if len(model.terms) != 1 or model.terms[0].radial_weight != 0:
        raise ValueError("predict supports a single unweighted power term or the Yang-Mills pair")
    term = model.terms[0]
    p, g = term.power, -term.coeff  # box(phi) = g phi^p
    ct = nonlinear_coefficient(l, p, convention)
    if ct == 0:
        if p == 2:
            return TailPrediction(3 * l + 1, g**2 * eps**3 * float(moment_c_anom(prof, l)), 3, True,
                                  "quadratic (second stage)")
        raise ValueError(f"vanishing nonlinear coefficient for l={l}, p={p} is not covered")
    at = float(moment_Atilde(prof, l, p))
    if abs(at) < 1e-12 * float(moment_Atilde(prof, l, 2)) ** (p / 2):
        warnings.warn("the profile moment A~ vanishes; the leading nonlinear tail is absent "
                      "for these data (use an asymmetric profile)", stacklevel=3)
    return TailPrediction((l + 1) * p - 1, g * eps**p * ct * at, p, False, "nonlinear")


def predict(model, prof, convention: str = "reference") -> TailPrediction:
    """Leading tail of ``model`` for free data generated by ``prof``.

    With both a potential and a nonlinearity the slower decay wins
    (gamma = min of the candidates).
    """
    cands = []
    if model.potential is not None:
        cands.append(_linear_candidate(model, prof))
    if model.terms:
        cands.append(_nonlinear_candidate(model, prof, convention))
    if not cands:
        raise ValueError("the free wave has no tail")
    best = min(cands, key=lambda c: c.gamma)
    ties = [c for c in cands if c.gamma == best.gamma]
    if len(ties) > 1:
        known = [c.coefficient for c in ties if c.coefficient is not None]
        coeff = sum(known) if len(known) == len(ties) else None
        best = TailPrediction(best.gamma, coeff, min(c.order_in_small_param for c in ties),
                              any(c.anomalous for c in ties), "+".join(c.source for c in ties))
    return TailPrediction(best.gamma, best.coefficient, best.order_in_small_param, best.anomalous,
                          best.source, tuple(cands))


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


@dataclass
class TailReport:
    fitted_gamma: float
    gamma_uncertainty: float
    fitted_amplitude: float | None
    amplitude_uncertainty: float | None
    prediction: TailPrediction
    verdict: str
    fit_window: tuple[float, float]
    plateau: bool
    reasons: list[str] = field(default_factory=list)
    recommended_t_final: float | None = None
    gamma_series: TimeSeries | None = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        pred = asdict(self.prediction)
        pred.pop("candidates", None)
        return {
            "verdict": self.verdict,
            "fitted_gamma": self.fitted_gamma,
            "gamma_uncertainty": self.gamma_uncertainty,
            "fitted_amplitude": self.fitted_amplitude,
            "amplitude_uncertainty": self.amplitude_uncertainty,
            "fit_window": f"{self.fit_window[0]:.6g} {self.fit_window[1]:.6g}",
            "plateau": self.plateau,
            "recommended_t_final": self.recommended_t_final,
            **{f"predicted_{k}": v for k, v in pred.items()},
            "reasons": "; ".join(self.reasons) or "none",
        }

    def to_text(self) -> str:
        """One ``key = value`` line per field."""
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())

    def write(self, directory, stem: str = "report") -> tuple[Path, Path]:
        """Write ``<stem>.txt`` and the plot-ready ``lnt_gamma.dat``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        rep = d / f"{stem}.txt"
        rep.write_text(self.to_text())
        dat = d / "lnt_gamma.dat"
        with open(dat, "w") as fh:
            fh.write("# ln_t gamma\n")
            if self.gamma_series is not None:
                for t, g in zip(self.gamma_series.times, self.gamma_series.values):
                    fh.write(f"{math.log(t):.12e} {g:.12e}\n")
        return rep, dat


def compare(s: TimeSeries, pred: TailPrediction, tol_gamma: float = RATE_TOL,
            tol_coeff: float | None = None, t_lo: float | None = None,
            t_hi: float | None = None, check_coefficient: bool = True) -> TailReport:
    """Measure the tail of ``s`` and judge it against ``pred``."""
    if tol_coeff is None:
        tol_coeff = COEFF_TOL.get(pred.order_in_small_param, 0.20)
    reasons: list[str] = []
    try:
        gam = local_power_index(s, t_lo, t_hi, strict=False)
    except (SignChangeError, ValueError) as exc:
        return TailReport(float("nan"), float("nan"), None, None, pred, "inconclusive",
                          (float(s.times[0]), float(s.times[-1])), False, [str(exc)],
                          recommended_t_final=2 * float(s.times[-1]))
    plat = detect_plateau(gam)
    verdict = "pass"
    rec = None
    if not plat.found:
        verdict = "inconclusive"
        rel = plat.spread * 2 / max(abs(plat.gamma), 1e-300)
        # the variation of an O(1/t) approach shrinks like 1/t
        rec = float(s.times[-1]) * max(2.0, rel / PLATEAU_VARIATION)
        reasons.append(f"no plateau: gamma varies by {rel:.2%} over the final quarter of log t")
    rate_err = abs(plat.gamma - pred.gamma) / abs(pred.gamma)
    if rate_err > tol_gamma:
        reasons.append(f"rate {plat.gamma:.4f} vs {pred.gamma:g} ({rate_err:.2%} > {tol_gamma:.0%})")
        if verdict == "pass":
            verdict = "fail"
    amp = unc = None
    if check_coefficient and pred.coefficient is not None:
        fit = fit_amplitude(s, pred.gamma, t_lo, t_hi)
        amp, unc = fit.amplitude, fit.uncertainty
        if not fit.conclusive:
            reasons.append("amplitude spread over the last decade exceeds 20%")
            if verdict == "pass":
                verdict = "inconclusive"
        c = pred.coefficient
        err = abs(amp - c) / abs(c) if c else float("inf")
        if np.sign(amp) != np.sign(c):
            reasons.append(f"amplitude sign {amp:.4g} vs predicted {c:.4g}")
            if verdict != "inconclusive":
                verdict = "fail"
        elif err > tol_coeff:
            reasons.append(f"amplitude {amp:.5g} vs {c:.5g} ({err:.2%} > {tol_coeff:.0%})")
            if verdict != "inconclusive":
                verdict = "fail"
    return TailReport(plat.gamma, plat.spread, amp, unc, pred, verdict, plat.window, plat.found,
                      reasons, rec, gam)
