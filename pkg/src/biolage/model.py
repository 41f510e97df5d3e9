"""Model parameters, jump maps and the closed-form quantities of the aging model.

Individuals age at unit speed.  A rejuvenation event replaces a biological age
``b_pre`` by the age ``b`` solving ``f_plus(b) = b_pre`` (for the linear map
``f_plus(b) = g_plus * b`` this is ``b_pre / g_plus``); premature aging does the
same with ``f_minus``.  Everything in this module is a pure function of frozen
parameter objects.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ConvergenceError, RangeError, UnsupportedFamily

ArrayLike = Union[float, np.ndarray]

_ROOT_TOL = 1e-12
_ROOT_MAXITER = 200


# --------------------------------------------------------------------------
# jump maps
# --------------------------------------------------------------------------
class JumpFamily:
    """Monotone jump map ``f`` with ``f(0) = 0``.

    Subclasses provide :meth:`forward` and :meth:`derivative`; :meth:`target`
    inverts the map.
    """

    is_linear = False
    rejuvenating = True

    def forward(self, b: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def derivative(self, b: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def bracket(self, b_pre: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def target(self, b_pre: ArrayLike) -> ArrayLike:
        """Post-jump age ``b`` with ``f(b) = b_pre``."""
        y = np.asarray(b_pre, dtype=float)
        lo, hi = self.bracket(y)
        out = _solve_increasing(self.forward, self.derivative, y, lo, hi)
        return float(out) if np.ndim(b_pre) == 0 else out

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(JumpFamily):
    """``f(b) = g * b``; rejuvenating when ``g > 1``, aging when ``g < 1``."""

    g: float
    is_linear = True

    def __post_init__(self):
        if not (self.g > 0 and math.isfinite(self.g)):
            raise RangeError(f"linear jump factor must be positive, got g={self.g}")

    @property
    def rejuvenating(self) -> bool:  # type: ignore[override]
        return self.g >= 1.0

    def forward(self, b):
        return self.g * np.asarray(b, dtype=float) if np.ndim(b) else self.g * float(b)

    def derivative(self, b):
        return np.full(np.shape(b), self.g) if np.ndim(b) else self.g

    def target(self, b_pre):
        return np.asarray(b_pre, dtype=float) / self.g if np.ndim(b_pre) else float(b_pre) / self.g

    def to_dict(self):
        return {"kind": "linear", "g": self.g}


@dataclass(frozen=True)
class PolynomialRejuvenation(JumpFamily):
    """``f(b) = (1 + delta_plus * b**m) * b``."""

    delta_plus: float
    m: float = 0.0
    rejuvenating = True

    def __post_init__(self):
        if not self.delta_plus > 0:
            raise RangeError(f"PolynomialRejuvenation needs delta_plus > 0, got {self.delta_plus}")
        if not self.m >= 0:
            raise RangeError(f"PolynomialRejuvenation needs m >= 0, got {self.m}")

    def forward(self, b):
        b = np.asarray(b, dtype=float)
        return (1.0 + self.delta_plus * b**self.m) * b

    def derivative(self, b):
        b = np.asarray(b, dtype=float)
        return 1.0 + self.delta_plus * (self.m + 1.0) * b**self.m

    def bracket(self, b_pre):
        return np.zeros_like(b_pre), b_pre.copy()

    def to_dict(self):
        return {"kind": "polynomial", "delta_plus": self.delta_plus, "m": self.m}


@dataclass(frozen=True)
class SaturatingAging(JumpFamily):
    """``f(b) = (1 - delta_minus / (1 + chi_sat * b**m)) * b``."""

    delta_minus: float
    chi_sat: float = 0.0
    m: float = 0.0
    rejuvenating = False

    def __post_init__(self):
        if not (0.0 <= self.chi_sat <= self.delta_minus < 1.0):
            raise RangeError(
                "SaturatingAging needs 0 <= chi_sat <= delta_minus < 1, got "
                f"chi_sat={self.chi_sat}, delta_minus={self.delta_minus}"
            )
        if not self.delta_minus > 0:
            raise RangeError("SaturatingAging needs delta_minus > 0")
        if not self.m >= 0:
            raise RangeError(f"SaturatingAging needs m >= 0, got {self.m}")

    def forward(self, b):
        b = np.asarray(b, dtype=float)
        return (1.0 - self.delta_minus / (1.0 + self.chi_sat * b**self.m)) * b

    def derivative(self, b):
        b = np.asarray(b, dtype=float)
        q = 1.0 + self.chi_sat * b**self.m
        return 1.0 - self.delta_minus / q + self.delta_minus * self.chi_sat * self.m * b**self.m / q**2

    def bracket(self, b_pre):
        return b_pre.copy(), b_pre / (1.0 - self.delta_minus)

    def to_dict(self):
        return {"kind": "saturating", "delta_minus": self.delta_minus, "chi_sat": self.chi_sat, "m": self.m}


def _solve_increasing(f, fprime, y, lo, hi, tol=_ROOT_TOL, maxiter=_ROOT_MAXITER):
    """Newton iteration safeguarded by bisection on a bracket of an increasing map."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        r = f(x) - y
        above = r > 0
        hi = np.where(above, x, hi)
        lo = np.where(above, lo, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - r / fprime(x)
        bad = ~np.isfinite(xn) | (xn < lo) | (xn > hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        step = np.abs(xn - x)
        x = xn
        if np.all(step <= tol * np.maximum(1.0, np.abs(x))):
            return x
    raise ConvergenceError(f"jump inversion did not converge in {maxiter} iterations")


def jump_target(family: JumpFamily, b_pre: ArrayLike) -> ArrayLike:
    """Age right after a jump that starts at ``b_pre``."""
    if np.any(np.asarray(b_pre) < 0):
        raise RangeError("ages must be non-negative")
    return family.target(b_pre)


def jump_map_eval(family: JumpFamily, b: ArrayLike):
    """Return ``(f(b), f'(b))``."""
    return family.forward(b), family.derivative(b)


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class DemographyParams:
    """Constant mortality ``mu``, birth flow ``beta`` and gamma(alpha, gamma_rate) newborn ages."""

    mu: float
    beta: float
    alpha: int = 1
    gamma_rate: float = 1.0

    def to_dict(self):
        return {"mu": self.mu, "beta": self.beta, "alpha": self.alpha, "gamma_rate": self.gamma_rate}


@dataclass(frozen=True)
class ModelParams:
    """Raw (unvalidated) jump parameters.

    ``family_plus`` / ``family_minus`` default to the linear maps with factors
    ``g_plus`` / ``g_minus``.
    """

    tau_plus: float
    tau_minus: float
    g_plus: float = 1.0
    g_minus: float = 1.0
    family_plus: Optional[JumpFamily] = None
    family_minus: Optional[JumpFamily] = None

    @classmethod
    def from_tau_p(cls, tau: float, p: float, **kwargs) -> "ModelParams":
        if not tau > 0:
            raise RangeError(f"tau must be positive, got {tau}")
        if not 0.0 <= p <= 1.0:
            raise RangeError(f"p must lie in [0, 1], got {p}")
        return cls(tau_plus=tau * p, tau_minus=tau * (1.0 - p), **kwargs)

    @classmethod
    def from_deltas(cls, tau_plus: float, tau_minus: float, delta_plus: float, delta_minus: float) -> "ModelParams":
        return cls(tau_plus, tau_minus, g_plus=1.0 + delta_plus, g_minus=1.0 - delta_minus)


@dataclass(frozen=True)
class ValidatedParams:
    tau_plus: float
    tau_minus: float
    g_plus: float
    g_minus: float
    family_plus: JumpFamily
    family_minus: JumpFamily
    demography: Optional[DemographyParams] = field(default=None)

    @property
    def tau(self) -> float:
        return self.tau_plus + self.tau_minus

    @property
    def p(self) -> float:
        return self.tau_plus / self.tau if self.tau > 0 else float("nan")

    @property
    def is_linear(self) -> bool:
        return self.family_plus.is_linear and self.family_minus.is_linear

    def to_dict(self) -> dict:
        return {
            "tau_plus": self.tau_plus,
            "tau_minus": self.tau_minus,
            "g_plus": self.g_plus,
            "g_minus": self.g_minus,
            "family_plus": self.family_plus.to_dict(),
            "family_minus": self.family_minus.to_dict(),
            "demography": None if self.demography is None else self.demography.to_dict(),
        }


def _finite_nonneg(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise RangeError(f"{name} must be finite and >= 0, got {value}")


def _strictly_rejuvenating(fam: JumpFamily) -> Optional[bool]:
    """True for f(b) > b, False for f(b) < b, None for the identity."""
    if fam.is_linear:
        return None if fam.g == 1.0 else fam.g > 1.0
    return fam.rejuvenating


def validate(params: ModelParams, demography: Optional[DemographyParams] = None) -> ValidatedParams:
    """Check parameter inequalities and freeze the result.

    Raises
    ------
    RangeError
        Naming the violated inequality.
    """
    _finite_nonneg("tau_plus", params.tau_plus)
    _finite_nonneg("tau_minus", params.tau_minus)
    fam_plus = params.family_plus
    fam_minus = params.family_minus
    if fam_plus is None:
        if params.tau_plus > 0 and not params.g_plus > 1.0:
            raise RangeError(f"g_plus must exceed 1 when tau_plus > 0 (got g_plus={params.g_plus})")
        fam_plus = Linear(params.g_plus)
    elif params.tau_plus > 0 and not _strictly_rejuvenating(fam_plus):
        raise RangeError("family_plus must be a rejuvenating map (f(b) > b)")
    if fam_minus is None:
        if params.tau_minus > 0 and not (0.0 < params.g_minus < 1.0):
            raise RangeError(f"need 0 < g_minus < 1 when tau_minus > 0 (got g_minus={params.g_minus})")
        fam_minus = Linear(params.g_minus)
    elif params.tau_minus > 0 and _strictly_rejuvenating(fam_minus) is not False:
        raise RangeError("family_minus must be an aging map (f(b) < b)")

    if demography is not None:
        if not demography.mu > 0:
            raise RangeError(f"mu must be > 0, got {demography.mu}")
        if not demography.beta > 0:
            raise RangeError(f"beta must be > 0, got {demography.beta}")
        if int(demography.alpha) != demography.alpha or demography.alpha < 1:
            raise RangeError(f"alpha must be an integer >= 1, got {demography.alpha}")
        if not demography.gamma_rate > 0:
            raise RangeError(f"gamma_rate must be > 0, got {demography.gamma_rate}")
        demography = DemographyParams(demography.mu, demography.beta, int(demography.alpha), demography.gamma_rate)

    g_plus = fam_plus.g if fam_plus.is_linear else params.g_plus
    g_minus = fam_minus.g if fam_minus.is_linear else params.g_minus
    return ValidatedParams(params.tau_plus, params.tau_minus, g_plus, g_minus, fam_plus, fam_minus, demography)


# --------------------------------------------------------------------------
# chi_k and friends
# --------------------------------------------------------------------------
def _require_linear(vp: ValidatedParams):
    if not vp.is_linear:
        raise UnsupportedFamily("the moment cascade is only closed for linear jump maps")


def chi_continuous(vp: ValidatedParams, x: ArrayLike) -> ArrayLike:
    """``tau_plus (1 - g_plus**-x) + tau_minus (1 - g_minus**-x)`` for real ``x >= 0``."""
    _require_linear(vp)
    x = np.asarray(x, dtype=float)
    # 1 - g**-x == -expm1(-x ln g), accurate near x = 0
    out = -vp.tau_plus * np.expm1(-x * math.log(vp.g_plus)) - vp.tau_minus * np.expm1(-x * math.log(vp.g_minus))
    return float(out) if out.ndim == 0 else out


def chi_k(vp: ValidatedParams, k) -> ArrayLike:
    """Moment rate ``chi_k`` for integer ``k >= 0`` (scalar or array)."""
    k_arr = np.asarray(k)
    if not np.issubdtype(k_arr.dtype, np.integer) and not np.all(k_arr == np.round(k_arr)):
        raise RangeError("k must be an integer")
    if np.any(k_arr < 0):
        raise RangeError("k must be >= 0")
    return chi_continuous(vp, k_arr.astype(float) if k_arr.ndim else float(k_arr))


@dataclass(frozen=True)
class XMaxResult:
    case: str  # "(i)" or "(ii)"
    x_max: Optional[float]
    criterion: float  # tau_plus ln g_plus + tau_minus ln g_minus


def x_max(vp: ValidatedParams) -> XMaxResult:
    """Locate the maximiser of the continuous rate ``chi(x)``.

    Case ``(i)`` (criterion > 0): chi rises to a positive maximum at ``x_max``
    then falls to minus infinity.  Case ``(ii)``: chi decreases from 0.
    """
    _require_linear(vp)
    if not (vp.tau_plus > 0 and vp.tau_minus > 0):
        raise RangeError("x_max needs both tau_plus > 0 and tau_minus > 0")
    lp, lm = math.log(vp.g_plus), math.log(vp.g_minus)
    a, c = vp.tau_plus * lp, vp.tau_minus * lm
    crit = a + c
    # symmetric logs cancel only up to rounding
    if crit <= 1e-12 * (abs(a) + abs(c)):
        return XMaxResult("(ii)", None, crit)
    xm = (math.log(a) - math.log(-c)) / (lp - lm)
    return XMaxResult("(i)", xm, crit)


# --------------------------------------------------------------------------
# gamma newborn density
# --------------------------------------------------------------------------
def gamma_density(dem: DemographyParams, b: ArrayLike) -> ArrayLike:
    """``rate**alpha b**(alpha-1) exp(-rate b) / (alpha-1)!``"""
    b = np.asarray(b, dtype=float)
    a, r = int(dem.alpha), dem.gamma_rate
    out = np.where(b >= 0, r**a * b ** (a - 1) * np.exp(-r * b) / math.factorial(a - 1), 0.0)
    return float(out) if out.ndim == 0 else out


def gamma_survival(dem: DemographyParams, b: ArrayLike) -> ArrayLike:
    """``P(age > b)`` for integer shape: ``exp(-rb) sum_{j<alpha} (rb)^j / j!``."""
    x = dem.gamma_rate * np.maximum(np.asarray(b, dtype=float), 0.0)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for j in range(1, int(dem.alpha)):
        term = term * x / j
        total = total + term
    out = np.exp(-x) * total
    return float(out) if out.ndim == 0 else out


def gamma_moment(dem: DemographyParams, k: int) -> float:
    """``E_k(Gamma) = rate**-k (alpha+k-1)! / (alpha-1)!``"""
    if k < 0:
        raise RangeError("k must be >= 0")
    a = int(dem.alpha)
    return math.prod(range(a, a + k)) / dem.gamma_rate**k


def gamma_cell_masses(dem: DemographyParams, edges: np.ndarray) -> np.ndarray:
    """Exact probability mass of each cell ``[edges[i], edges[i+1])``."""
    s = gamma_survival(dem, edges)
    return s[:-1] - s[1:]
