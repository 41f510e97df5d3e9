"""Cross-checks between the particle, grid and moment representations."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import BinningMismatch, RangeError
from .ibm import Histogram, Population, sample_relative_se
from .model import ValidatedParams, chi_k, x_max
from .moments import MomentVector, find_k0
from .pde import DensityState


@dataclass
class MetricEntry:
    name: str
    value: float
    tolerance: float
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "passed": self.passed, **self.detail}


@dataclass
class ComparisonReport:
    """Named metrics, each with an explicit tolerance; passes only if every entry passes."""

    scenario: str
    entries: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, name: str, value: float, tolerance: float, **detail) -> MetricEntry:
        entry = MetricEntry(name, float(value), float(tolerance), detail)
        self.entries.append(entry)
        return entry

    def extend(self, other: "ComparisonReport", prefix: str = "") -> None:
        for e in other.entries:
            self.entries.append(MetricEntry(prefix + e.name, e.value, e.tolerance, dict(e.detail)))

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def first_failure(self) -> Optional[MetricEntry]:
        return next((e for e in self.entries if not e.passed), None)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "entries": [e.to_dict() for e in self.entries],
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def summary(self) -> str:
        lines = [f"{self.scenario}: {'PASS' if self.passed else 'FAIL'} ({len(self.entries)} checks)"]
        for e in self.entries:
            mark = "ok " if e.passed else "BAD"
            lines.append(f"  [{mark}] {e.name}: {e.value:.4g} (tol {e.tolerance:.4g})")
        return "\n".join(lines)


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------
def l1_probabilities(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise BinningMismatch(f"probability vectors differ in shape: {p.shape} vs {q.shape}")
    return float(np.abs(p - q).sum())


def state_probabilities(state: DensityState, edges: np.ndarray) -> np.ndarray:
    """Grid mass integrated over histogram bins, overflow (incl. outflow) appended, normalised."""
    grid = state.grid
    ratio = edges / grid.width
    idx = np.rint(ratio).astype(np.int64)
    if np.any(np.abs(ratio - idx) > 1e-9) or edges[0] != 0:
        raise BinningMismatch("histogram edges must fall on grid cell edges")
    idx = np.minimum(idx, grid.n_cells)
    cum = np.concatenate([[0.0], np.cumsum(state.masses)])
    inside = np.diff(cum[idx])
    over = cum[-1] - cum[idx[-1]] + state.outflow_mass
    p = np.append(inside, over)
    total = p.sum()
    return p / total if total > 0 else p


def l1_distance(hist: Histogram, other: Union[DensityState, Histogram]) -> float:
    """``sum |p_a - p_b|`` over the histogram bins plus the overflow bin; lies in ``[0, 2]``."""
    if isinstance(other, Histogram):
        if not np.array_equal(hist.edges, other.edges):
            raise BinningMismatch("histograms use different bins")
        return l1_probabilities(hist.probabilities(), other.probabilities())
    return l1_probabilities(hist.probabilities(), state_probabilities(other, hist.edges))


def auto_bin_width(sd: float) -> float:
    """Power of two near ``sd / 8``, never below one year."""
    if not sd > 0:
        return 1.0
    return float(max(1.0, 2.0 ** math.ceil(math.log2(sd / 8.0))))


@dataclass(frozen=True)
class SupportReport:
    ok: bool
    max_age: float
    bound: float


def support_check(obj: Union[Population, DensityState, np.ndarray], b_star: float, t: Optional[float] = None) -> SupportReport:
    """Is everything still below ``b_star + t`` (plus one cell for the grid)?"""
    if isinstance(obj, DensityState):
        t = obj.t if t is None else t
        m = obj.masses
        total = m.sum()
        live = np.flatnonzero(m > 1e-12 * total) if total > 0 else np.empty(0, dtype=int)
        top = float(obj.grid.edges[live[-1] + 1]) if live.size else 0.0
        if obj.outflow_mass > 1e-12 * max(total, 1e-300):
            top = math.inf
        bound = b_star + t + obj.grid.width
        return SupportReport(top <= bound * (1 + 1e-12), top, bound)
    if isinstance(obj, Population):
        t = obj.t if t is None else t
        ages = obj.ages
    else:
        ages = np.asarray(obj, dtype=float)
        t = 0.0 if t is None else t
    top = float(ages.max()) if ages.size else 0.0
    bound = b_star + t
    return SupportReport(top <= bound * (1 + 1e-12), top, bound)


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------
def _rel_diff(a: MomentVector, b: MomentVector, k_max: int) -> np.ndarray:
    la = a.log10()[: k_max + 1] - a.log10()[0]
    lb = b.log10()[: k_max + 1] - b.log10()[0]
    return np.abs(np.expm1((la - lb) * math.log(10.0)))


def moment_agreement(
    a: MomentVector,
    b: MomentVector,
    k_max: int,
    tol_profile: Union[float, Sequence[float], Callable[[int], float]] = 0.01,
    scenario: str = "moments",
    time_tol: float = 1e-9,
) -> ComparisonReport:
    """Relative differences of normalised moments ``E_k / E_0`` for ``1 <= k <= k_max``."""
    if abs(a.t - b.t) > time_tol:
        raise RangeError(f"moment vectors are at different times ({a.t} vs {b.t})")
    if min(a.K, b.K) < k_max:
        raise RangeError("k_max exceeds the available moments")
    diff = _rel_diff(a, b, k_max)
    rep = ComparisonReport(scenario, provenance={"t": a.t})
    for k in range(1, k_max + 1):
        if callable(tol_profile):
            tol = tol_profile(k)
        elif np.ndim(tol_profile) == 0:
            tol = tol_profile
        else:
            tol = tol_profile[k]
        rep.add(f"E{k}/E0", diff[k], tol, k=k, t=a.t)
    return rep


def replicate_relative_se(vectors: Sequence[MomentVector], k_max: int) -> np.ndarray:
    """Relative standard error of the replicate mean of ``E_k / E_0``."""
    if len(vectors) < 2:
        raise RangeError("need at least two replicates for a spread estimate")
    norm = np.array([v.normalized()[: k_max + 1] for v in vectors])
    return norm.std(axis=0, ddof=1) / math.sqrt(len(vectors)) / norm.mean(axis=0)


def mc_tolerance(rel_se: np.ndarray, n_sigma: float = 3.0, floor: float = 0.01) -> np.ndarray:
    return n_sigma * np.asarray(rel_se) + floor


def mean_vector(vectors: Sequence[MomentVector]) -> MomentVector:
    """Replicate mean of the normalised moments, as a vector with ``E_0 = 1``."""
    norm = np.array([v.normalized() for v in vectors])
    return MomentVector(vectors[0].t, norm.mean(axis=0))


# --------------------------------------------------------------------------
# chi
# --------------------------------------------------------------------------
def chi_report(vp: ValidatedParams, K: int = 100) -> dict:
    """``chi_k`` for ``k = 0..K`` with case, maximiser and ``k0``."""
    ks = np.arange(K + 1)
    chi = np.asarray(chi_k(vp, ks), dtype=float)
    out = {"k": ks, "chi": chi}
    if vp.tau_plus > 0 and vp.tau_minus > 0:
        xm = x_max(vp)
        out.update(case=xm.case, x_max=xm.x_max, criterion=xm.criterion)
    else:
        out.update(case=None, x_max=None, criterion=None)
    k0 = find_k0(vp, K)
    out.update(k0=k0.k0, k0_status=k0.status)
    return out


# --------------------------------------------------------------------------
# three-way comparison
# --------------------------------------------------------------------------
def triangle(
    ibm_moments: Sequence[Sequence[MomentVector]],
    pde_moments: Sequence[MomentVector],
    ode_moments: Sequence[MomentVector],
    histograms: Sequence[Histogram],
    states: Sequence[DensityState],
    k_max: int = 4,
    l1_tol: float = 0.05,
    floor: float = 0.01,
    sample_se: Optional[Sequence[np.ndarray]] = None,
    scenario: str = "triangle",
) -> ComparisonReport:
    """L1 and moment checks at each output time.

    ``ibm_moments[i]`` holds the replicate vectors at output time ``i``.  The
    Monte-Carlo error comes from the replicate spread, or from ``sample_se``
    when only one replicate is available.
    """
    rep = ComparisonReport(scenario)
    for i, (reps, pm, om) in enumerate(zip(ibm_moments, pde_moments, ode_moments)):
        t = om.t
        if len(reps) >= 2:
            se = replicate_relative_se(reps, k_max)
        elif sample_se is not None:
            se = np.asarray(sample_se[i])[: k_max + 1]
        else:
            raise RangeError("Monte-Carlo error needs two replicates or sample_se")
        tol = mc_tolerance(se, floor=floor)
        im = mean_vector(reps)
        rep.extend(moment_agreement(im, om, k_max, tol), prefix=f"t={t:g} ibm-ode ")
        rep.extend(moment_agreement(im, pm, k_max, tol), prefix=f"t={t:g} ibm-pde ")
        rep.extend(moment_agreement(pm, om, k_max, floor), prefix=f"t={t:g} pde-ode ")
    for h, s in zip(histograms, states):
        rep.add(f"t={s.t:g} L1(ibm, pde)", l1_distance(h, s), l1_tol, bin_width=h.bin_width)
    return rep
