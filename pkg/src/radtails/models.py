"""Evolution equations  box(phi) + V(r) phi + N(phi, r) = 0  and named presets.

Sign convention: the evolved equation is

    d_t^2 phi = Lap_d phi - V(r) phi - sum_j coeff_j r^(w_j) phi^(p_j),

so the focusing power nonlinearity  box(phi) - phi^p = 0  has coeff = -1.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .numerics import DD, where

__all__ = ["PotentialSpec", "NonlinearTerm", "ModelSpec", "preset", "PRESETS",
           "eval_rhs_pointwise", "DEFAULT_LAMBDA", "DEFAULT_EPSILON"]

DEFAULT_LAMBDA = 0.1
DEFAULT_EPSILON = 0.05

INNER_FORMS = ("constant_plateau", "smooth_blend", "hermite_blend")


def _hermite_blend_coefficients(alpha: float, order: int) -> np.ndarray:
    """Even polynomial q(x) = sum c_j x^(2j) with q^(i)(1) = (x^-alpha)^(i)(1), i <= order."""
    n = order + 1
    mat = np.zeros((n, n))
    rhs = np.zeros(n)
    for i in range(n):
        # i-th derivative of x^(2j) at x=1 and of x^-alpha at x=1
        for j in range(n):
            e = 2 * j
            c = 1.0
            for s in range(i):
                c *= e - s
            mat[i, j] = c
        c = 1.0
        for s in range(i):
            c *= -alpha - s
        rhs[i] = c
    return np.linalg.solve(mat, rhs)


@dataclass(frozen=True)
class PotentialSpec:
    """V(r) = lam * r^-alpha for r >= cutoff_R, bounded and continuous inside.

    ``constant_plateau`` holds V at its value at R; ``smooth_blend`` is the
    globally smooth lam * (r^2 + R^2)^(-alpha/2); ``hermite_blend`` keeps the
    exact power law outside R and uses an even polynomial matching ``blend_order``
    derivatives at R inside.
    """

    lam: float = DEFAULT_LAMBDA
    alpha: float = 3.0
    cutoff_R: float = 1.0
    inner_form: str = "constant_plateau"
    blend_order: int = 6

    def __post_init__(self):
        if self.alpha <= 2:
            raise ValueError("potential falloff alpha must exceed 2")
        if self.cutoff_R <= 0:
            raise ValueError("cutoff_R must be positive")
        if self.inner_form not in INNER_FORMS:
            raise ValueError(f"unknown inner_form {self.inner_form!r}; expected one of {INNER_FORMS}")

    def _power(self, r):
        return r ** (-self.alpha) if isinstance(r, DD) else np.asarray(r, float) ** (-self.alpha)

    def __call__(self, r):
        """V(r) in the precision of ``r``."""
        lam = self.lam
        R = self.cutoff_R
        ra = r.to_float() if isinstance(r, DD) else np.asarray(r, dtype=float)
        if self.inner_form == "smooth_blend":
            s = r * r + R * R
            if isinstance(s, DD):
                out = lam * s ** (-self.alpha / 2)
            else:
                out = lam * np.asarray(s, float) ** (-self.alpha / 2)
            return out
        outer = ra >= R
        safe = where(outer, r, R)
        out = lam * self._power(safe)
        if self.inner_form == "constant_plateau":
            inner = lam * R ** (-self.alpha)
        else:
            coeffs = _hermite_blend_coefficients(self.alpha, self.blend_order)
            x2 = (r / R) * (r / R)
            inner = r * 0
            x2j = r * 0 + 1
            for c in coeffs:
                inner = inner + float(c) * x2j
                x2j = x2j * x2
            inner = lam * R ** (-self.alpha) * inner
        res = where(outer, out, inner)
        return res if np.ndim(ra) or isinstance(res, DD) else float(res)


@dataclass(frozen=True)
class NonlinearTerm:
    """coeff * r^radial_weight * phi^power"""

    coeff: float
    power: int
    radial_weight: int = 0

    def __post_init__(self):
        if self.power < 2:
            raise ValueError("nonlinear power must be >= 2")
        if self.radial_weight < 0:
            raise ValueError("radial weight must be >= 0")


@dataclass(frozen=True)
class ModelSpec:
    l: int = 0
    potential: PotentialSpec | None = None
    terms: tuple[NonlinearTerm, ...] = ()
    data_amplitude: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.l < 0:
            raise ValueError("l must be nonnegative")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def dimension(self) -> int:
        return 2 * self.l + 3

    @property
    def is_free(self) -> bool:
        return self.potential is None and not self.terms

    @property
    def is_linear(self) -> bool:
        return not self.terms

    def potential_values(self, r):
        if self.potential is None:
            return r * 0
        return self.potential(r)

    def nonlinearity(self, r, phi):
        total = phi * 0
        for term in self.terms:
            w = r ** term.radial_weight if term.radial_weight else 1
            total = total + term.coeff * w * phi ** term.power
        return total

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "l": self.l,
            "data_amplitude": self.data_amplitude,
            "potential": asdict(self.potential) if self.potential else None,
            "terms": [asdict(t) for t in self.terms],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelSpec":
        pot = d.get("potential")
        return cls(
            l=int(d["l"]),
            potential=PotentialSpec(**pot) if pot else None,
            terms=tuple(NonlinearTerm(**t) for t in d.get("terms", ())),
            data_amplitude=float(d.get("data_amplitude", 1.0)),
            name=d.get("name", "custom"),
        )


def eval_rhs_pointwise(m: ModelSpec, r, phi, lap):
    """lap - V(r) phi - sum coeff r^w phi^p."""
    out = lap
    if m.potential is not None:
        out = out - m.potential(r) * phi
    if m.terms:
        out = out - m.nonlinearity(r, phi)
    return out


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _potential(lam, alpha, cutoff_R, inner_form):
    return PotentialSpec(lam=lam, alpha=alpha, cutoff_R=cutoff_R, inner_form=inner_form)


def _free(l=0):
    return ModelSpec(l=l, name="free", params={"l": l})


def _linear(l=0, alpha=3.0, lam=DEFAULT_LAMBDA, cutoff_R=1.0, inner_form="constant_plateau"):
    return ModelSpec(l=l, potential=_potential(lam, alpha, cutoff_R, inner_form), name="linear",
                     params={"l": l, "alpha": alpha, "lam": lam, "cutoff_R": cutoff_R,
                             "inner_form": inner_form})


def _power(l=0, p=3, eps=DEFAULT_EPSILON):
    # box(phi) - phi^p = 0
    return ModelSpec(l=l, terms=(NonlinearTerm(-1.0, p, 0),), data_amplitude=eps, name="power",
                     params={"l": l, "p": p, "eps": eps})


def _wavemap5(eps=DEFAULT_EPSILON):
    return ModelSpec(l=1, terms=(NonlinearTerm(4.0 / 3.0, 3, 0),), data_amplitude=eps,
                     name="wavemap5", params={"eps": eps})


def _skyrme_pert(lam=DEFAULT_LAMBDA, eps=DEFAULT_EPSILON, cutoff_R=1.0, inner_form="constant_plateau"):
    return ModelSpec(l=1, potential=_potential(lam, 6.0, cutoff_R, inner_form),
                     terms=(NonlinearTerm(4.0 / 3.0, 3, 0),), data_amplitude=eps, name="skyrme_pert",
                     params={"lam": lam, "eps": eps, "cutoff_R": cutoff_R, "inner_form": inner_form})


def _yang_mills(eps=DEFAULT_EPSILON):
    return ModelSpec(l=1, terms=(NonlinearTerm(3.0, 2, 0), NonlinearTerm(1.0, 3, 2)),
                     data_amplitude=eps, name="yang_mills", params={"eps": eps})


def _quadratic_anomalous(l=1, eps=DEFAULT_EPSILON):
    if l < 1:
        raise ValueError("quadratic_anomalous needs l >= 1 (l=0 is the ordinary p=2 tail)")
    # box(phi) = -phi^2; the sign drops out of the second-order tail
    return ModelSpec(l=l, terms=(NonlinearTerm(1.0, 2, 0),), data_amplitude=eps,
                     name="quadratic_anomalous", params={"l": l, "eps": eps})


PRESETS = {
    "free": _free,
    "linear": _linear,
    "power": _power,
    "wavemap5": _wavemap5,
    "skyrme_pert": _skyrme_pert,
    "yang_mills": _yang_mills,
    "quadratic_anomalous": _quadratic_anomalous,
}


def preset(name: str, **params) -> ModelSpec:
    """Build a named model; ``params`` are the preset's keyword parameters."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)
