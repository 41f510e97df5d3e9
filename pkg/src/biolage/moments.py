"""Moment vectors and the closed moment cascade ``E_k' = k E_{k-1} - chi_k E_k``.

High-order moments span hundreds of decades, so a :class:`MomentVector`
stores ``log10 |E_k|`` for flagged components (those above ``LOG_THRESHOLD``)
and the plain value otherwise.  Integration runs on a power-of-two scaled
representation, which is exact and therefore identical to plain RK4 whenever
plain RK4 would not overflow.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from . import kernels
from .errors import OverflowSignal, PatternError, QuadratureError, RangeError, SignError, StiffnessWarning
from .model import ValidatedParams, _require_linear, chi_k, gamma_moment

LOG_THRESHOLD = 1e300
DEFAULT_DT = 1e-3
STIFFNESS_LIMIT = 0.5
_LOG10_2 = math.log10(2.0)


@dataclass
class MomentVector:
    """Moments ``E_0..E_K`` at time ``t``.

    ``values[k]`` holds ``E_k`` when ``flags[k]`` is false and ``log10 |E_k|``
    when it is true.
    """

    t: float
    values: np.ndarray
    flags: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.flags is None:
            self.flags = np.zeros(self.values.shape, dtype=bool)
        self.flags = np.asarray(self.flags, dtype=bool)

    @property
    def K(self) -> int:
        return len(self.values) - 1

    def log10(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.flags, self.values, np.log10(np.abs(self.values)))

    def as_float(self) -> np.ndarray:
        """Plain values; flagged components come back as ``inf`` when out of range."""
        with np.errstate(over="ignore"):
            return np.where(self.flags, 10.0 ** self.values, self.values)

    def normalized(self) -> np.ndarray:
        """``E_k / E_0`` (the moments of the age distribution)."""
        e0 = self.log10()[0]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return np.where(self.flags, 10.0 ** (self.values - e0), self.values / self.as_float()[0])

    def to_scaled(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(y, expo)`` with ``E_k = y_k * 2**expo_k``."""
        y = np.empty_like(self.values)
        expo = np.zeros(len(self.values), dtype=np.int64)
        plain = ~self.flags
        m, e = np.frexp(self.values[plain])
        y[plain], expo[plain] = m, e
        if self.flags.any():
            l2 = self.values[self.flags] / _LOG10_2
            e = np.floor(l2).astype(np.int64) + 1
            y[self.flags] = np.exp2(l2 - e)
            expo[self.flags] = e
        return y, expo

    @classmethod
    def from_scaled(cls, t: float, y: np.ndarray, expo: np.ndarray) -> "MomentVector":
        with np.errstate(over="ignore"):
            plain = np.ldexp(y, expo.astype(np.int32))
        big = ~np.isfinite(plain) | (np.abs(plain) > LOG_THRESHOLD)
        with np.errstate(divide="ignore"):
            logs = np.log10(np.abs(y)) + expo * _LOG10_2
        return cls(t, np.where(big, logs, plain), big)

    def copy(self) -> "MomentVector":
        return MomentVector(self.t, self.values.copy(), self.flags.copy())


def power_sums(points: np.ndarray, K: int, weights: Optional[np.ndarray] = None, t: float = 0.0) -> MomentVector:
    """``E_k = sum_i w_i x_i**k`` for ``k = 0..K`` with log-space fallback.

    Emits :class:`OverflowSignal` and flags the component when a sum leaves the
    double range.
    """
    if K < 0:
        raise RangeError("K must be >= 0")
    x = np.asarray(points, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    vals = np.zeros(K + 1)
    flags = np.zeros(K + 1, dtype=bool)
    if x.size == 0:
        return MomentVector(t, vals, flags)
    keep = (w > 0) & (x > 0)
    lx, lw = np.log(x[keep]), np.log(w[keep])
    p = np.ones_like(x)
    signalled = False
    for k in range(K + 1):
        if k:
            with np.errstate(over="ignore"):
                p = p * x
        with np.errstate(over="ignore", invalid="ignore"):
            s = float(np.sum(w * p))
        if math.isfinite(s) and s <= LOG_THRESHOLD:
            vals[k] = s
        else:
            vals[k] = logsumexp(k * lx + lw) / math.log(10.0)
            flags[k] = True
            signalled = True
    if signalled:
        warnings.warn("power sums overflowed; flagged components are log10 values", OverflowSignal, stacklevel=2)
    return MomentVector(t, vals, flags)


def moments_of_density(u0: Callable, support_bound: float, K: int, t: float = 0.0, rtol: float = 1e-10) -> MomentVector:
    """Adaptive-quadrature moments of a density supported on ``[0, support_bound]``."""
    S = float(support_bound)
    vals = np.zeros(K + 1)
    flags = np.zeros(K + 1, dtype=bool)
    for k in range(K + 1):
        # integrate (b/S)^k u0(b) to keep the integrand O(1)
        val, err = integrate.quad(lambda b: (b / S) ** k * u0(b), 0.0, S, epsabs=0.0, epsrel=rtol, limit=500)
        if not err <= rtol * abs(val) + 1e-300:
            raise QuadratureError(f"moment k={k}: error estimate {err:.3g} exceeds rtol {rtol} of {val:.6g}")
        logv = math.log10(val) + k * math.log10(S) if val > 0 else -math.inf
        if logv > math.log10(LOG_THRESHOLD):
            vals[k], flags[k] = logv, True
        else:
            vals[k] = val * S**k
    return MomentVector(t, vals, flags)


@dataclass
class MomentTrajectory:
    vectors: list
    metadata: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([v.t for v in self.vectors])

    def log10(self) -> np.ndarray:
        """Array of shape ``(n_times, K+1)``."""
        return np.array([v.log10() for v in self.vectors])

    def __getitem__(self, i) -> MomentVector:
        return self.vectors[i]

    def __len__(self):
        return len(self.vectors)


def cascade_coefficients(vp: ValidatedParams, K: int):
    """Return ``(rates, source, k_start)`` for ``E_k' = k E_{k-1} - rates_k E_k + source_k``."""
    _require_linear(vp)
    rates = np.asarray(chi_k(vp, np.arange(K + 1)), dtype=float).reshape(K + 1)
    source = np.zeros(K + 1)
    dem = vp.demography
    if dem is None:
        return rates, source, 1
    rates = rates + dem.mu
    source = dem.beta * np.array([gamma_moment(dem, k) for k in range(K + 1)])
    return rates, source, 0


def integrate_moments(
    vp: ValidatedParams,
    E_init: MomentVector,
    t_end: float,
    dt: float = DEFAULT_DT,
    output_times: Optional[Sequence[float]] = None,
) -> MomentTrajectory:
    """Integrate the moment cascade with classical RK4.

    Without demography ``E_0`` is held fixed exactly.  With demography the
    ``-mu E_k`` and newborn source terms are included and ``E_0`` obeys
    ``E_0' = beta - mu E_0``.
    """
    if not dt > 0:
        raise RangeError("dt must be positive")
    rates, source, k_start = cascade_coefficients(vp, E_init.K)
    stiff = float(np.max(np.abs(rates[k_start:]))) * dt if E_init.K >= k_start else 0.0
    if stiff > STIFFNESS_LIMIT:
        warnings.warn(
            f"|chi_K| dt = {stiff:.3g} > {STIFFNESS_LIMIT}; reduce dt or K", StiffnessWarning, stacklevel=2
        )
    times = [t_end] if output_times is None else sorted(float(t) for t in output_times)
    if times and (times[0] < E_init.t or times[-1] > t_end + 1e-12):
        raise RangeError("output times must lie within [E_init.t, t_end]")
    y, expo = E_init.to_scaled()
    t = E_init.t
    out = []
    for target in times:
        span = target - t
        n = max(0, math.ceil(span / dt - 1e-9))
        if n:
            kernels.rk4_cascade(y, expo, rates, source, span / n, n, k_start)
        t = target
        out.append(MomentVector.from_scaled(t, y, expo))
    meta = {"K": E_init.K, "dt": dt, "backend": kernels.BACKEND, "params": vp.to_dict()}
    return MomentTrajectory(out, meta)


def equilibrium_moments(vp: ValidatedParams, E_0: float, K_stop: int) -> MomentVector:
    """Stationary moments ``E_0 prod_{j<=k} j / chi_j`` for ``k <= K_stop``.

    With demography ``E_0`` is replaced by ``beta / mu`` and the recursion
    ``(chi_k + mu) E_k = k E_{k-1} + beta E_k(Gamma)`` is used.
    """
    rates, source, _ = cascade_coefficients(vp, K_stop)
    if np.any(rates[1:] <= 0):
        j = int(np.argmax(rates[1:] <= 0)) + 1
        raise SignError(f"equilibrium undefined: rate at j={j} is {rates[j]:.6g} <= 0")
    vals = np.empty(K_stop + 1)
    flags = np.zeros(K_stop + 1, dtype=bool)
    e = E_0 if vp.demography is None else vp.demography.beta / vp.demography.mu
    vals[0] = e
    for k in range(1, K_stop + 1):
        if not flags[k - 1]:
            e = (k * e + source[k]) / rates[k]
            if math.isfinite(e) and e <= LOG_THRESHOLD:
                vals[k] = e
                continue
        # continue the recursion on log10 values
        prev = vals[k - 1] if flags[k - 1] else math.log10(vals[k - 1])
        src = math.log10(source[k]) if source[k] > 0 else -math.inf
        log_e = float(np.logaddexp(math.log(k) + prev * math.log(10), src * math.log(10)) / math.log(10))
        vals[k] = log_e - math.log10(rates[k])
        flags[k] = True
    return MomentVector(math.inf, vals, flags)


@dataclass(frozen=True)
class K0Result:
    status: str  # "k0" | "all_positive" | "none_positive"
    k0: Optional[int]
    K: int


def find_k0(vp: ValidatedParams, K: int) -> K0Result:
    """Largest ``k0`` with ``chi_k > 0`` for ``k <= k0`` and ``chi_k < 0`` beyond, scanning ``1..K``."""
    chi = np.asarray(chi_k(vp, np.arange(1, K + 1)), dtype=float)
    near = np.abs(chi) <= 1e-14
    if near.any():
        raise PatternError(f"chi_k vanishes at k={int(np.argmax(near)) + 1}; perturb the parameters")
    pos = chi > 0
    changes = int(np.count_nonzero(pos[1:] != pos[:-1]))
    if changes == 0:
        return K0Result("all_positive", None, K) if pos[0] else K0Result("none_positive", 0, K)
    if changes == 1 and pos[0]:
        return K0Result("k0", int(np.argmin(pos)), K)
    raise PatternError(f"chi_k changes sign {changes} times on 1..{K}")


def mean_trajectory_symmetric(tau: float, delta: float, M0: float, t) -> np.ndarray | float:
    """Mean age under ``tau_plus = tau_minus = tau/2`` and ``delta_plus = delta_minus = delta``.

    Solves ``M' = 1 + c M`` with ``c = tau delta**2 / (1 - delta**2)``.
    """
    if not (0 <= delta < 1):
        raise RangeError("delta must lie in [0, 1)")
    c = tau * delta**2 / (1.0 - delta**2)
    t = np.asarray(t, dtype=float)
    # (M0 + 1/c) e^{ct} - 1/c written without cancellation
    out = M0 * np.exp(c * t) + (t if c == 0 else np.expm1(c * t) / c)
    return float(out) if out.ndim == 0 else out


def recursion_residual(E: MomentVector, vp: ValidatedParams) -> np.ndarray:
    """``r_k = k E_{k-1} - chi_k E_k`` (plus ``beta E_k(Gamma) - mu E_k`` with demography).

    ``r_0`` is ``beta - mu E_0`` with demography and 0 without.  Every ``r_k``
    vanishes at an equilibrium of the cascade.
    """
    rates, source, _ = cascade_coefficients(vp, E.K)
    e = E.as_float()
    r = np.zeros(E.K + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        r[1:] = np.arange(1, E.K + 1) * e[:-1] - rates[1:] * e[1:] + source[1:]
    if vp.demography is not None:
        r[0] = source[0] - vp.demography.mu * e[0]
    return r
