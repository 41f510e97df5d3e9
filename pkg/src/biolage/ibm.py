"""Individual-based Monte-Carlo simulation of the jump process.

Ages drift at unit speed.  Each individual carries independent exponential
clocks of rates ``tau_plus`` (rejuvenation) and ``tau_minus`` (premature
aging); this is simulated as one population clock of rate ``N (tau_plus +
tau_minus)`` with a uniformly chosen individual per event.  With demography,
births arrive at rate ``beta`` with gamma-distributed ages and deaths at rate
``mu N``.

Between events nothing is stored: during :func:`advance` each individual keeps
an offset ``age - (t - t0)`` that only changes when it jumps.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import RangeError
from .initial import DensitySampler, DiracCohort
from .moments import MomentVector, power_sums
from .model import ValidatedParams

InitialCondition = Union[DiracCohort, DensitySampler]


def make_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Counter-based generator; one independent stream per ``(seed, replicate)``."""
    if seed < 0 or replicate < 0:
        raise RangeError("seed and replicate index must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replicate)])))


def _new_counts():
    return {"rejuvenation": 0, "aging": 0, "birth": 0, "death": 0}


@dataclass
class Population:
    ages: np.ndarray
    t: float
    rng: np.random.Generator
    event_counts: dict = field(default_factory=_new_counts)

    @property
    def size(self) -> int:
        return len(self.ages)

    @property
    def rng_state(self) -> dict:
        return self.rng.bit_generator.state


def init_population(n: int, ic: InitialCondition, seed: int, replicate: int = 0) -> Population:
    if n < 1:
        raise RangeError(f"population size must be >= 1, got {n}")
    rng = make_rng(seed, replicate)
    if isinstance(ic, DiracCohort):
        ages = np.full(n, float(ic.b0))
    else:
        ages = ic.sample(rng, n)
    return Population(ages, 0.0, rng)


def draw_jump_events(rng: np.random.Generator, n: int, tau: float, p: float, start: float, end: float):
    """Event times in ``[start, end)``, chosen individuals and kinds (0 = rejuvenation, 1 = aging)."""
    total = n * tau
    if total <= 0 or end <= start:
        return np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.uint8)
    mean = total * (end - start)
    chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
    parts = []
    t = start
    while True:
        times = t + np.cumsum(rng.exponential(1.0 / total, size=chunk))
        count = int(np.searchsorted(times, end, side="left"))
        parts.append(times[:count])
        if count < chunk:
            break
        t = times[-1]
    times = np.concatenate(parts)
    idx = rng.integers(0, n, size=len(times), dtype=np.int64)
    kinds = (rng.random(len(times)) >= p).astype(np.uint8)
    return times, idx, kinds


def apply_events(offsets: np.ndarray, times: np.ndarray, idx: np.ndarray, kinds: np.ndarray, vp: ValidatedParams):
    """Apply jumps in place; ``offsets`` are ages at the interval start, ``times`` relative to it."""
    if vp.is_linear:
        kernels.apply_jumps(offsets, times, idx, kinds, vp.family_plus.g, vp.family_minus.g)
    else:
        kernels.apply_jumps_generic(offsets, times, idx, kinds, vp.family_plus.target, vp.family_minus.target)


def _jump_batch(pop: Population, offsets: np.ndarray, start: float, end: float, vp: ValidatedParams):
    tau = vp.tau
    if tau <= 0 or len(offsets) == 0:
        return
    times, idx, kinds = draw_jump_events(pop.rng, len(offsets), tau, vp.tau_plus / tau, start, end)
    apply_events(offsets, times, idx, kinds, vp)
    n_aging = int(np.count_nonzero(kinds))
    pop.event_counts["aging"] += n_aging
    pop.event_counts["rejuvenation"] += len(kinds) - n_aging


def advance(pop: Population, t_target: float, vp: ValidatedParams) -> Population:
    """Simulate exactly up to ``t_target``; mutates and returns ``pop``."""
    if t_target < pop.t:
        raise RangeError(f"cannot advance backwards from t={pop.t} to {t_target}")
    duration = t_target - pop.t
    dem = vp.demography
    if dem is None:
        offsets = pop.ages.copy()
        _jump_batch(pop, offsets, 0.0, duration, vp)
        n = len(offsets)
    else:
        n = len(pop.ages)
        offsets = np.empty(max(16, 2 * n))
        offsets[:n] = pop.ages
        s = 0.0
        while True:
            rate = dem.beta + dem.mu * n
            s_next = s + pop.rng.exponential(1.0 / rate)
            _jump_batch(pop, offsets[:n], s, min(s_next, duration), vp)
            if s_next >= duration:
                break
            if pop.rng.random() * rate < dem.beta:
                if n == len(offsets):
                    offsets = np.concatenate([offsets, np.empty(n)])
                offsets[n] = pop.rng.gamma(dem.alpha, 1.0 / dem.gamma_rate) - s_next
                n += 1
                pop.event_counts["birth"] += 1
            else:
                j = int(pop.rng.integers(0, n))
                offsets[j] = offsets[n - 1]
                n -= 1
                pop.event_counts["death"] += 1
            s = s_next
    pop.ages = offsets[:n] + duration
    pop.t = float(t_target)
    return pop


@dataclass
class Histogram:
    """Counts on ``[i w, (i+1) w)`` for ``i < n_bins`` plus an overflow bin ``[b_max, inf)``."""

    edges: np.ndarray
    counts: np.ndarray
    overflow: int
    t: float = 0.0

    @property
    def n_total(self) -> int:
        return int(self.counts.sum()) + int(self.overflow)

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def density(self) -> np.ndarray:
        n = self.n_total
        return self.counts / (n * self.bin_width) if n else np.zeros(len(self.counts))

    def probabilities(self) -> np.ndarray:
        """Bin probabilities with the overflow bin appended."""
        n = self.n_total
        p = np.append(self.counts, self.overflow).astype(float)
        return p / n if n else p

    def __add__(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.edges, other.edges):
            raise RangeError("cannot pool histograms with different bins")
        return Histogram(self.edges, self.counts + other.counts, self.overflow + other.overflow, self.t)


def histogram(pop: Union[Population, np.ndarray], bin_width: float, b_max: float, t: Optional[float] = None) -> Histogram:
    if not bin_width > 0:
        raise RangeError("bin_width must be positive")
    ages = pop.ages if isinstance(pop, Population) else np.asarray(pop, dtype=float)
    if t is None:
        t = pop.t if isinstance(pop, Population) else 0.0
    n_bins = max(1, math.ceil(b_max / bin_width - 1e-9))
    edges = np.arange(n_bins + 1) * bin_width
    which = np.searchsorted(edges, ages, side="right") - 1
    inside = which < n_bins
    counts = np.bincount(which[inside], minlength=n_bins).astype(np.int64)
    return Histogram(edges, counts, int(np.count_nonzero(~inside)), float(t))


def sample_moments(pop: Population, K: int) -> MomentVector:
    """Unnormalised particle moments ``sum_i age_i**k`` (so ``E_0 = N``)."""
    return power_sums(pop.ages, K, t=pop.t)


def sample_relative_se(ages: np.ndarray, k_max: int) -> np.ndarray:
    """Relative standard error of ``mean(age**k)`` within one sample, ``k = 0..k_max``."""
    ages = np.asarray(ages, dtype=float)
    out = np.zeros(k_max + 1)
    if ages.size < 2:
        return np.full(k_max + 1, np.nan)
    p = np.ones_like(ages)
    for k in range(1, k_max + 1):
        p = p * ages
        out[k] = p.std(ddof=1) / math.sqrt(ages.size) / p.mean()
    return out


# --------------------------------------------------------------------------
# replicates
# --------------------------------------------------------------------------
def worker_count() -> int:
    env = os.environ.get("BIOLAGE_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


@dataclass
class ReplicateResult:
    replicate: int
    histograms: list
    moments: list
    event_counts: dict
    sizes: list
    mean_ages: list
    rel_se: list


def run_replicate(
    replicate: int,
    n: int,
    ic: InitialCondition,
    vp: ValidatedParams,
    output_times: Sequence[float],
    seed: int,
    K: int = 4,
    bin_width: Union[float, Sequence[float]] = 1.0,
    hist_b_max: Union[float, Sequence[float]] = 200.0,
) -> ReplicateResult:
    """One replicate observed at ``output_times``.

    ``bin_width`` and ``hist_b_max`` may be given per output time.
    """
    times = list(output_times)
    widths = np.broadcast_to(np.asarray(bin_width, dtype=float), (len(times),))
    tops = np.broadcast_to(np.asarray(hist_b_max, dtype=float), (len(times),))
    pop = init_population(n, ic, seed, replicate)
    hists, moms, sizes, means, ses = [], [], [], [], []
    for t, w, top in zip(times, widths, tops):
        advance(pop, t, vp)
        hists.append(histogram(pop, float(w), float(top)))
        moms.append(sample_moments(pop, K))
        sizes.append(pop.size)
        means.append(float(pop.ages.mean()) if pop.size else math.nan)
        ses.append(sample_relative_se(pop.ages, K))
    return ReplicateResult(replicate, hists, moms, dict(pop.event_counts), sizes, means, ses)


def run_replicates(replicates: int, *args, workers: Optional[int] = None, **kwargs) -> list:
    """Run replicates ``0..replicates-1`` concurrently; results are returned in replicate order."""
    workers = min(replicates, workers or worker_count())
    if workers <= 1:
        return [run_replicate(r, *args, **kwargs) for r in range(replicates)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: run_replicate(r, *args, **kwargs), range(replicates)))
