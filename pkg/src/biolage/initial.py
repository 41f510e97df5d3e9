"""Initial age distributions shared by the particle, grid and moment routes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import RangeError

TABLE_KNOTS = 2**16


@dataclass(frozen=True)
class DiracCohort:
    """Every individual starts at age ``b0``; ``mass`` is the PDE total mass."""

    b0: float
    mass: float = 1.0

    def __post_init__(self):
        if not self.b0 >= 0:
            raise RangeError(f"Dirac location must be >= 0, got {self.b0}")

    @property
    def support_bound(self) -> float:
        return self.b0

    def moments(self, K: int) -> np.ndarray:
        return self.mass * self.b0 ** np.arange(K + 1, dtype=float)

    def to_dict(self):
        return {"kind": "dirac", "b0": self.b0, "mass": self.mass}

    def scaled(self, factor: float) -> "DiracCohort":
        return DiracCohort(self.b0, self.mass * factor)


@dataclass(frozen=True)
class DensitySampler:
    """Non-negative density ``u0`` on ``[0, support_bound]``, zero beyond.

    The density need not be normalised: its integral is the PDE total mass.
    Particle draws use an inverse-CDF table with ``TABLE_KNOTS`` knots.
    """

    u0: Callable[[np.ndarray], np.ndarray]
    support_bound: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.support_bound > 0 and math.isfinite(self.support_bound)):
            raise RangeError("DensitySampler needs a finite positive support bound")

    def density(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        return np.where((b >= 0) & (b <= self.support_bound), self.u0(b), 0.0)

    @property
    def mass(self) -> float:
        return integrate.quad(self.u0, 0.0, self.support_bound, epsabs=0.0, epsrel=1e-12, limit=200)[0]

    def cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.linspace(0.0, self.support_bound, TABLE_KNOTS)
        cdf = integrate.cumulative_trapezoid(self.density(x), x, initial=0.0)
        return x, cdf / cdf[-1]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        x, cdf = self.cdf_table()
        return np.interp(rng.random(n), cdf, x)

    def cell_masses(self, edges: np.ndarray) -> np.ndarray:
        """Exact integrals of ``u0`` over each cell (adaptive quadrature)."""
        out = np.zeros(len(edges) - 1)
        last = np.searchsorted(edges, self.support_bound, side="left")
        for i in range(min(last, len(out))):
            lo, hi = edges[i], min(edges[i + 1], self.support_bound)
            if hi > lo:
                out[i] = integrate.quad(self.u0, lo, hi, epsabs=0.0, epsrel=1e-12)[0]
        return out

    def to_dict(self):
        return {"kind": self.name, **self.params}

    def scaled(self, factor: float) -> "DensitySampler":
        u0 = self.u0
        return DensitySampler(lambda b: factor * u0(b), self.support_bound, self.name, {**self.params, "scale": factor})


def parabolic(width: float = 10.0, amplitude: float = 0.4) -> DensitySampler:
    """``amplitude * max(0, b (1 - b / width))``; defaults give the compact-support test profile."""
    return DensitySampler(
        lambda b: amplitude * np.maximum(0.0, b * (1.0 - b / width)),
        width,
        name="parabolic",
        params={"width": width, "amplitude": amplitude},
    )


def uniform(lo: float, hi: float, height: float = 1.0) -> DensitySampler:
    if not 0 <= lo < hi:
        raise RangeError("uniform initial condition needs 0 <= lo < hi")
    return DensitySampler(
        lambda b: np.where(np.asarray(b, dtype=float) >= lo, height, 0.0),
        hi,
        name="uniform",
        params={"lo": lo, "hi": hi, "height": height},
    )


def truncated_gaussian(mean: float, sd: float, support: float, mass: float = 1.0) -> DensitySampler:
    if not (sd > 0 and support > 0):
        raise RangeError("truncated_gaussian needs sd > 0 and support > 0")
    from scipy.stats import norm

    z = norm.cdf(support, mean, sd) - norm.cdf(0.0, mean, sd)
    return DensitySampler(
        lambda b: mass * norm.pdf(b, mean, sd) / z,
        support,
        name="gaussian",
        params={"mean": mean, "sd": sd, "support": support, "mass": mass},
    )


def from_dict(d: dict):
    """Build an initial condition from its config descriptor."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "dirac":
        return DiracCohort(**d)
    if kind == "parabolic":
        return parabolic(**d)
    if kind == "uniform":
        return uniform(**d)
    if kind == "gaussian":
        return truncated_gaussian(**d)
    raise RangeError(f"unknown initial condition kind {kind!r} (dirac | parabolic | uniform | gaussian)")
